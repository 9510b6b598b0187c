// Acceptance checks: one PASS/FAIL line per criterion. Tolerances and
// runtime budgets are fixed below. Exit status is nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "forge/diffusion.hpp"
#include "forge/eval.hpp"
#include "forge/pipeline.hpp"
#include "forge/service.hpp"
#include "forge/synth.hpp"
#include "forge/trajectory.hpp"
#include "loopback.hpp"
#include "support.hpp"

using namespace forge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Pinned tolerances.
constexpr double kRasterAgreement = 0.995;
constexpr double kRasterDepthRel = 1e-4;
constexpr double kRasterBudgetS = 60.0;
constexpr double kFocalRel = 0.005;
constexpr double kYawDeg = 0.05;
constexpr double kExactResidualPx = 0.5;
constexpr double kNoisyResidualPx = 2.0;
constexpr double kCameraBudgetS = 10.0;
constexpr double kRoundTripPsnrDb = 30.0;
constexpr int kWriteOnceSequences = 100;
constexpr int kSuperposeTrials = 10000;
constexpr double kPipelineBudgetS = 300.0;
constexpr std::size_t kForwardDraws = 100000;
constexpr double kForwardMeanAbs = 0.01;
constexpr double kForwardSdRel = 0.01;
constexpr double kAlphaBarAbs = 1e-12;
constexpr double kSsimConst = 1.0002e-4;
constexpr double kSsimConstTol = 1e-7;
constexpr double kSsimReferenceTol = 1e-6;
constexpr int kEvalWidth = 1536;
constexpr int kEvalHeight = 1024;
constexpr double kPathThroughRel = 1e-9;
constexpr double kSpacingVariation = 0.05;
constexpr double kScalarTol = 1e-9;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// ---------------------------------------------------------------- 1 --

Outcome rasterizer_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_agree = 1.0, worst_depth = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    const HeightField hf = testkit::random_field(11, 11, 10.0, 25.0, rng);
    const TerrainMesh mesh = build_mesh(hf);
    if (mesh.faces.size() > 200) return {false, "mesh has more than 200 faces"};
    std::uniform_real_distribution<double> ang(-3.14, 3.14), dist(90.0, 140.0), up(40.0, 90.0);
    const double a = ang(rng);
    const Vec3 center(50.0, 50.0, 10.0);
    const Pose pose = Pose::look_at(center + Vec3(std::cos(a) * dist(rng), std::sin(a) * dist(rng), up(rng)), center);
    const Intrinsics k = Intrinsics::from_hfov(deg2rad(70.0), 128, 128);
    const RenderSettings rs;
    const RenderBuffers buf = render_geometry(mesh, k, pose, rs);
    std::size_t covered = 0, agree = 0;
    for (int y = 0; y < 128; ++y)
      for (int x = 0; x < 128; ++x) {
        const auto hit = testkit::cast_pixel(mesh, k, pose, x, y, rs.near, rs.cull_backfaces);
        if (!hit && !buf.covered(x, y)) continue;
        ++covered;
        if (hit && buf.covered(x, y) && hit->first == buf.face_index.at(x, y)) {
          ++agree;
          worst_depth = std::max(worst_depth, std::abs(buf.depth.at(x, y) - hit->second) / hit->second);
        }
      }
    if (covered == 0) return {false, "scene covers no pixels"};
    worst_agree = std::min(worst_agree, static_cast<double>(agree) / covered);
  }
  const double secs = seconds_since(t0);
  return {worst_agree >= kRasterAgreement && worst_depth < kRasterDepthRel && secs < kRasterBudgetS,
          fmt("worst agreement %.4f%%, worst depth rel err %.2e, %.1f s", 100 * worst_agree, worst_depth, secs)};
}

// ---------------------------------------------------------------- 2 --

CameraRig recovery_rig(std::mt19937_64& rng) {
  CameraRig rig;
  rig.intrinsics = {1500.0, 1500.0, 768.0, 512.0, 1536, 1024};
  rig.pose.position = {100.0, 200.0, 1500.0};
  rig.pose.yaw = deg2rad(30.0);
  rig.pose.pitch = deg2rad(-4.0);
  std::uniform_real_distribution<double> u(60.0, 1476.0), v(60.0, 964.0), depth(300.0, 3000.0);
  for (int i = 0; i < 20; ++i) {
    const double pu = u(rng), pv = v(rng), d = depth(rng);
    const Vec3 cam((pu - 768.0) / 1500.0 * d, (pv - 512.0) / 1500.0 * d, d);
    const Vec3 world = rig.pose.to_world(cam);
    rig.correspondences.push_back({world, project(world, rig.intrinsics, rig.pose)->pixel});
  }
  return rig;
}

Outcome camera_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_f = 0.0, worst_yaw = 0.0, worst_res = 0.0;
  std::mt19937_64 rng(77);
  const CameraRig truth = recovery_rig(rng);
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0})
      for (double sw : {-1.0, 1.0}) {
        CameraRig init = truth;
        init.intrinsics.fx *= 1.0 + 0.1 * sx;
        init.intrinsics.fy *= 1.0 + 0.1 * sy;
        init.pose.yaw += deg2rad(5.0 * sw);
        const auto r = optimize_camera(init);
        worst_f = std::max({worst_f, std::abs(r.intrinsics.fx / 1500.0 - 1.0), std::abs(r.intrinsics.fy / 1500.0 - 1.0)});
        worst_yaw = std::max(worst_yaw, std::abs(rad2deg(r.pose.yaw) - 30.0));
        worst_res = std::max(worst_res, r.loss);
      }
  CameraRig noisy = truth;
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  for (auto& c : noisy.correspondences) c.target += Vec2(noise(rng), noise(rng));
  noisy.intrinsics.fx *= 1.1;
  noisy.intrinsics.fy *= 0.9;
  noisy.pose.yaw += deg2rad(5.0);
  const double noisy_res = optimize_camera(noisy).loss;
  const double secs = seconds_since(t0);
  return {worst_f < kFocalRel && worst_yaw < kYawDeg && worst_res < kExactResidualPx && noisy_res <= kNoisyResidualPx &&
              secs < kCameraBudgetS,
          fmt("focal err %.3f%%, yaw err %.4f deg, residual %.3f px (noisy %.3f px)", 100 * worst_f, worst_yaw,
              worst_res, noisy_res) +
              fmt(", %.1f s", secs)};
}

// ---------------------------------------------------------------- 3 --

Outcome texturing_round_trip() {
  const auto dir = testkit::scratch_dir("accept_roundtrip");
  const auto scene = synth::write_project(dir);
  const Project p = Project::load(scene.project_file);
  const auto& t = p.terrain;

  // Paint one view, re-render from the same pose, score covered pixels
  // whose texels were painted.
  const RigEntry& e = p.rigs[1];
  const RgbImage image = read_rgb8(e.image_path);
  const RenderBuffers buf = render_geometry(t.mesh, e.rig.intrinsics, e.rig.pose, p.render);
  const PaintedTexture painted =
      paint_view(t.base, t.mesh, t.uv, image, e.rig.intrinsics, e.rig.pose, buf, nullptr, "webcam:" + e.rig.id);
  RenderSettings rs = p.render;
  rs.unpainted_as_background = true;
  const RgbImage again = render(t.mesh, t.uv, painted, e.rig.intrinsics, e.rig.pose, rs).rgb;
  EvalMask mask(again.width(), again.height(), 1, 0);
  for (int y = 0; y < again.height(); ++y)
    for (int x = 0; x < again.width(); ++x) mask.at(x, y) = buf.covered(x, y) && get_rgb(again, x, y) != kSentinel;
  const double db = psnr(again, image, mask);

  // Write-once over random paint sequences of the three webcams and
  // random-noise views at their poses.
  std::mt19937_64 rng(31);
  struct Op {
    const RigEntry* rig;
    RgbImage image;
    RenderBuffers buf;
  };
  std::vector<Op> ops;
  for (const auto& r : p.rigs) {
    const RenderBuffers b = render_geometry(t.mesh, r.rig.intrinsics, r.rig.pose, p.render);
    ops.push_back({&r, read_rgb8(r.image_path), b});
    ops.push_back({&r, testkit::random_rgb(r.rig.intrinsics.width, r.rig.intrinsics.height, rng), b});
  }
  std::size_t violations = 0;
  std::vector<std::size_t> order(ops.size());
  std::iota(order.begin(), order.end(), 0);
  for (int seq = 0; seq < kWriteOnceSequences; ++seq) {
    std::shuffle(order.begin(), order.end(), rng);
    PaintedTexture tex = t.base;
    for (std::size_t i : order) {
      const Op& op = ops[i];
      PaintedTexture next =
          paint_view(tex, t.mesh, t.uv, op.image, op.rig->rig.intrinsics, op.rig->rig.pose, op.buf, nullptr, "op");
      for (int y = 0; y < tex.height(); ++y)
        for (int x = 0; x < tex.width(); ++x)
          if (tex.painted(x, y) && (!next.painted(x, y) || get_rgb(next.color, x, y) != get_rgb(tex.color, x, y) ||
                                    next.source.at(x, y) != tex.source.at(x, y)))
            ++violations;
      tex = std::move(next);
    }
  }
  return {db >= kRoundTripPsnrDb && violations == 0,
          fmt("round-trip PSNR %.2f dB, %.0f write-once violations over %.0f sequences", db,
              static_cast<double>(violations), kWriteOnceSequences)};
}

// ---------------------------------------------------------------- 4 --

Outcome superposition_law() {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> dim(1, 24), bit(0, 1);
  std::size_t mismatches = 0, texels = 0;
  for (int trial = 0; trial < kSuperposeTrials; ++trial) {
    const int w = dim(rng), h = dim(rng);
    PaintedTexture prev(testkit::random_rgb(w, h, rng));
    prev.color = testkit::random_rgb(w, h, rng);
    for (auto& m : prev.mask.data()) m = bit(rng) ? kPainted : kUnpainted;
    TexelWrites writes(w, h);
    writes.color = testkit::random_rgb(w, h, rng);
    for (auto& m : writes.has_write.data()) m = static_cast<std::uint8_t>(bit(rng));
    const PaintedTexture out = superpose(prev, writes, "cand");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        ++texels;
        // Candidate texture: the previous one overwritten where written.
        const Rgb prev_c = get_rgb(prev.color, x, y);
        Rgb cand = writes.has_write.at(x, y) ? get_rgb(writes.color, x, y) : prev_c;
        if (writes.has_write.at(x, y) && cand == kSentinel) cand = avoid_sentinel(cand);
        const bool m = prev.mask.at(x, y) == kPainted;
        const Rgb want = m ? prev_c : cand;
        const bool want_painted = m || writes.has_write.at(x, y);
        if (want_painted && get_rgb(out.color, x, y) != want) ++mismatches;
        if (out.painted(x, y) != want_painted) ++mismatches;
      }
  }
  return {mismatches == 0, fmt("%.0f trials, %.0f texels, %.0f mismatches", kSuperposeTrials,
                               static_cast<double>(texels), static_cast<double>(mismatches))};
}

// ---------------------------------------------------------------- 5 --

Outcome determinism_and_resume() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto run = [](const std::string& name, std::optional<int> interrupt) {
    const auto dir = testkit::scratch_dir(name);
    const Project p = Project::load(synth::write_project(dir).project_file);
    run_paint_stage(p);
    auto backend = make_backend(p.inpaint, "mock");
    if (interrupt) {
      InpaintRunOptions first;
      first.stop_after = *interrupt;
      run_inpaint_stage(p, *backend, first);
      InpaintRunOptions rest;
      rest.resume = true;
      return texture_hash(run_inpaint_stage(p, *backend, rest).texture);
    }
    return texture_hash(run_inpaint_stage(p, *backend).texture);
  };
  const std::string a = run("accept_det_a", std::nullopt);
  const std::string b = run("accept_det_b", std::nullopt);
  const std::string c = run("accept_det_resume", 3);
  const double secs = seconds_since(t0);
  return {a == b && a == c && secs < kPipelineBudgetS,
          "hash " + a.substr(0, 16) + (a == b ? " repeats" : " differs") + (a == c ? ", resumed run matches" : ", resumed run differs") +
              fmt(", %.1f s", secs)};
}

// ---------------------------------------------------------------- 6 --

Outcome forward_statistics() {
  const int T = 1000;
  const auto s = make_schedule(T);
  double worst_abar = 0.0;
  long double prod = 1.0L;
  for (int t = 1; t <= T; ++t) {
    prod *= 1.0L - (1e-4L + (2e-2L - 1e-4L) * (t - 1) / (T - 1));
    worst_abar = std::max(worst_abar, std::abs(s.alpha_bar[t - 1] - static_cast<double>(prod)));
  }
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n01;
  double worst_mean = 0.0, worst_sd = 0.0;
  for (double x0v : {0.0, 0.7, -1.0})
    for (int t : {1, 10, 250, 500, 1000}) {
      std::vector<double> noise(kForwardDraws);
      for (auto& v : noise) v = n01(rng);
      const auto x = forward_sample(std::vector<double>(kForwardDraws, x0v), t, noise, s);
      const double mean = std::accumulate(x.begin(), x.end(), 0.0) / kForwardDraws;
      double var = 0.0;
      for (double v : x) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / (kForwardDraws - 1));
      const double want_sd = std::sqrt(1.0 - s.alpha_bar[t - 1]);
      worst_mean = std::max(worst_mean, std::abs(mean - std::sqrt(s.alpha_bar[t - 1]) * x0v));
      worst_sd = std::max(worst_sd, std::abs(sd - want_sd) / want_sd);
    }
  return {worst_abar <= kAlphaBarAbs && worst_mean <= kForwardMeanAbs && worst_sd <= kForwardSdRel,
          fmt("alpha_bar err %.1e, mean err %.4f, sd rel err %.4f%%", worst_abar, worst_mean, 100 * worst_sd)};
}

// ---------------------------------------------------------------- 7 --

// Plain-loop SSIM reference: 11x11 Gaussian window (sigma 1.5), windows
// centered on every pixel whose window fits and whose center is masked.
double reference_ssim(const RgbImage& a, const RgbImage& b, const EvalMask& mask) {
  const auto luma = [](const RgbImage& img, int x, int y) {
    const Rgb c = get_rgb(img, x, y);
    return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
  };
  double g[11], gs = 0.0;
  for (int i = 0; i < 11; ++i) gs += g[i] = std::exp(-((i - 5) * (i - 5)) / (2 * 1.5 * 1.5));
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double total = 0.0;
  int n = 0;
  for (int y = 5; y + 5 < a.height(); ++y)
    for (int x = 5; x + 5 < a.width(); ++x) {
      if (!mask.at(x, y)) continue;
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int j = -5; j <= 5; ++j)
        for (int i = -5; i <= 5; ++i) {
          const double w = g[i + 5] * g[j + 5] / (gs * gs);
          const double va = luma(a, x + i, y + j), vb = luma(b, x + i, y + j);
          ma += w * va;
          mb += w * vb;
          saa += w * va * va;
          sbb += w * vb * vb;
          sab += w * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++n;
    }
  return total / n;
}

Outcome metric_oracles() {
  const RgbImage zeros(32, 32, 3, 0), full(32, 32, 3, 255);
  const EvalMask all(32, 32, 1, 1);
  const double p0 = psnr(zeros, full, all);
  const double s0 = ssim(zeros, full, all);
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const RgbImage a = testkit::random_rgb(40, 32, rng);
    RgbImage b = a;
    std::normal_distribution<double> d(0.0, 8.0 + i);
    for (auto& v : b.data()) v = static_cast<std::uint8_t>(std::clamp(v + d(rng), 0.0, 255.0));
    EvalMask m(40, 32, 1, 1);
    std::bernoulli_distribution keep(0.8);
    for (auto& v : m.data()) v = keep(rng);
    worst = std::max(worst, std::abs(ssim(a, b, m) - reference_ssim(a, b, m)));
  }
  return {p0 == 0.0 && std::abs(s0 - kSsimConst) <= kSsimConstTol && worst <= kSsimReferenceTol,
          fmt("PSNR(0,255) = %.1f dB, SSIM(const) = %.5e, reference err %.1e", p0, s0, worst)};
}

// ---------------------------------------------------------------- 8 --

Outcome evaluation_protocol() {
  const auto dir = testkit::scratch_dir("accept_eval");
  const Project p = Project::load(synth::write_project(dir).project_file);
  run_paint_stage(p);
  MockBackend mock;
  const PaintedTexture tex = run_inpaint_stage(p, mock).texture;
  const auto& t = p.terrain;

  EvalConfig cfg;
  cfg.near_cutoff_m = p.eval_near_cutoff_m;
  cfg.frames_dir = dir / "eval";
  fs::create_directories(*cfg.frames_dir);
  const auto views = load_heldout_views(p);
  const EvalReport report = evaluate_views(t.mesh, t.uv, tex, views, cfg);
  const RgbImage frame = read_rgb8(*cfg.frames_dir / ("eval_" + views[0].rig.id + ".png"));
  const bool sized = frame.width() == kEvalWidth && frame.height() == kEvalHeight && report.width == kEvalWidth &&
                     report.height == kEvalHeight;

  // Independent exclusion check: the metric mask keeps only covered pixels
  // at or beyond the near cutoff, and scrambling everything else leaves
  // PSNR unchanged.
  const Intrinsics k = views[0].rig.intrinsics.scaled_to(kEvalWidth, kEvalHeight);
  const RenderBuffers buf = render(t.mesh, t.uv, tex, k, views[0].rig.pose, cfg.render);
  const EvalMask mask = auto_eval_mask(buf, cfg.near_cutoff_m);
  std::size_t sky = 0, near = 0, leaks = 0;
  for (int y = 0; y < kEvalHeight; ++y)
    for (int x = 0; x < kEvalWidth; ++x) {
      const bool is_sky = !buf.covered(x, y);
      const bool is_near = !is_sky && buf.depth.at(x, y) < cfg.near_cutoff_m;
      sky += is_sky;
      near += is_near;
      leaks += (is_sky || is_near) && mask.at(x, y);
    }
  const RgbImage target = resize_bilinear(views[0].image, kEvalWidth, kEvalHeight);
  RgbImage scrambled = target;
  std::mt19937_64 rng(8);
  for (int y = 0; y < kEvalHeight; ++y)
    for (int x = 0; x < kEvalWidth; ++x)
      if (!mask.at(x, y)) set_rgb(scrambled, x, y, {static_cast<std::uint8_t>(rng()), 0, static_cast<std::uint8_t>(rng())});
  const bool invariant = psnr(buf.rgb, target, mask) == psnr(buf.rgb, scrambled, mask);
  return {sized && sky > 0 && near > 0 && leaks == 0 && invariant,
          fmt("frame %.0fx%.0f, %.0f sky and %.0f near pixels excluded", frame.width(), frame.height(),
              static_cast<double>(sky), static_cast<double>(near)) +
              (invariant ? ", PSNR invariant to excluded pixels" : ", PSNR depends on excluded pixels") +
              fmt(", held-out PSNR %.2f dB", report.mean_psnr)};
}

// ---------------------------------------------------------------- 9 --

Outcome trajectory_shape() {
  std::mt19937_64 rng(9);
  const HeightField hf = testkit::random_field(41, 41, 25.0, 80.0, rng);
  const double extent = hf.extent_x();
  const std::vector<Vec2> pts{{100, 120}, {400, 300}, {520, 700}, {850, 760}, {900, 200}};
  const PlanarPath path(pts, TrajectoryMode::Cubic);
  double worst_through = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    worst_through = std::max(worst_through, (path.eval(i, 0.0) - pts[i]).norm());
    worst_through = std::max(worst_through, (path.eval(i, 1.0) - pts[i + 1]).norm());
  }
  std::vector<Waypoint> wps;
  const GeoPoint origin{hf.origin.lat_deg, hf.origin.lon_deg, 0.0};
  for (const auto& q : pts) wps.push_back({local_to_geo({q.x(), q.y(), 0.0}, origin), std::nullopt, std::nullopt});
  TrajectoryConfig cfg;
  cfg.samples = 40;
  const auto poses = build_trajectory(wps, cfg, hf);
  const auto wp_xy = [&](const Waypoint& w) {
    const Vec3 l = geo_to_local(GeoPoint{w.geo.lat_deg, w.geo.lon_deg, 0.0}, origin);
    return Vec2(l.x(), l.y());
  };
  const Vec2 first(poses.front().position.x(), poses.front().position.y());
  const Vec2 last(poses.back().position.x(), poses.back().position.y());
  worst_through = std::max({worst_through, (first - wp_xy(wps.front())).norm(), (last - wp_xy(wps.back())).norm()});

  // Spacing measured along the curve by dense polyline integration between
  // consecutive samples.
  const auto dense_arc = [&](const Vec2& target) {
    // Arc length from the start to the curve point nearest `target`.
    double arc = 0.0, best_arc = 0.0, best_d = 1e300;
    Vec2 prev = path.eval(0, 0.0);
    for (std::size_t seg = 0; seg < path.segments(); ++seg)
      for (int i = 1; i <= 20000; ++i) {
        const Vec2 q = path.eval(seg, i / 20000.0);
        arc += (q - prev).norm();
        prev = q;
        const double d = (q - target).norm();
        if (d < best_d) {
          best_d = d;
          best_arc = arc;
        }
      }
    return best_arc;
  };
  std::vector<double> arcs;
  for (const auto& pose : poses) arcs.push_back(dense_arc({pose.position.x(), pose.position.y()}));
  arcs.front() = 0.0;
  double lo = 1e300, hi = 0.0, sum = 0.0;
  for (std::size_t i = 0; i + 1 < arcs.size(); ++i) {
    const double d = arcs[i + 1] - arcs[i];
    lo = std::min(lo, d);
    hi = std::max(hi, d);
    sum += d;
  }
  const double variation = (hi - lo) / (sum / (arcs.size() - 1));
  return {worst_through < kPathThroughRel * extent && variation < kSpacingVariation,
          fmt("waypoint error %.1e m (bound %.1e m), spacing variation %.2f%%", worst_through, kPathThroughRel * extent,
              100 * variation)};
}

// --------------------------------------------------------------- 10 --

Outcome service_loopback() {
  const auto root = testkit::scratch_dir("accept_service");
  const auto ref_dir = testkit::scratch_dir("accept_service_ref");
  synth::Options o;
  o.perturb = true;
  synth::write_project(root / "alps", o);
  synth::write_project(ref_dir, o);
  Project ref = Project::load(ref_dir / "project.json");

  Service service(ServiceConfig{root, std::nullopt, {}});
  testkit::Loopback server([&](httplib::Server& s) { service.mount(s); });
  auto cli = server.client();
  cli.set_read_timeout(300, 0);
  std::vector<std::string> failures;
  const auto check = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  const auto body = [](const httplib::Result& r) { return std::vector<std::uint8_t>(r->body.begin(), r->body.end()); };
  const auto near = [](double a, double b) { return std::abs(a - b) <= kScalarTol; };
  const std::string api = "/api/projects/alps";

  check(json::parse(cli.Get("/api/health")->body) == json{{"status", "ok"}}, "health");
  check(json::parse(cli.Get("/api/projects")->body) == json{"alps"}, "project list");
  check(json::parse(cli.Get(api)->body) == ref.doc, "project document");
  {
    const json doc = ref.doc;
    check(cli.Put(api, doc.dump(), "application/json")->status == 200, "project update");
  }

  const json cams = json::parse(cli.Get(api + "/cameras")->body);
  check(cams.size() == ref.rigs.size() + ref.heldout.size(), "camera list");
  for (const auto* list : {&ref.rigs, &ref.heldout})
    for (const auto& e : *list) {
      const json c = json::parse(cli.Get(api + "/cameras/" + e.rig.id)->body);
      for (int i = 0; i < 3; ++i) check(near(c["position"][i].get<double>(), e.rig.pose.position[i]), "camera position");
      check(near(c["fx"].get<double>(), e.rig.intrinsics.fx), "camera fx");
      check(body(cli.Get(api + "/cameras/" + e.rig.id + "/image")) == read_file_bytes(e.image_path), "camera image");
    }
  {
    const RigEntry& e = ref.rigs[0];
    json d = e.descriptor.to_json();
    check(cli.Put(api + "/cameras/" + e.rig.id, d.dump(), "application/json")->status == 200, "camera update");
  }

  const auto check_renders = [&](const PaintedTexture& tex, const std::string& tag) {
    const auto& t = ref.terrain;
    for (const auto& e : ref.heldout) {
      const std::string q = api + "/render?cam=" + e.rig.id;
      check(decode_rgb8(body(cli.Get(q + "&mode=rgb"))).data() ==
                render(t.mesh, t.uv, tex, e.rig.intrinsics, e.rig.pose, ref.render).rgb.data(),
            "rgb render " + tag);
      const RenderBuffers g = render_geometry(t.mesh, e.rig.intrinsics, e.rig.pose, ref.render);
      auto dr = cli.Get(q + "&mode=depth");
      const Depth16 d = encode_depth16(g.depth);
      check(decode_gray16(body(dr)).data() == d.image.data() &&
                std::stod(dr->get_header_value("X-Depth-Min-M")) == d.min_m &&
                std::stod(dr->get_header_value("X-Depth-Max-M")) == d.max_m,
            "depth render");
      check(decode_rgb8(body(cli.Get(q + "&mode=faceidx"))).data() == encode_face_index(g.face_index).data(),
            "face-index render");
      const Intrinsics k2 = e.rig.intrinsics.scaled_to(200, 150);
      check(decode_rgb8(body(cli.Get(q + "&w=200&h=150"))).data() ==
                render(t.mesh, t.uv, tex, k2, e.rig.pose, ref.render).rgb.data(),
            "resized render");
    }
    Pose free;
    free.yaw = deg2rad(40.0);
    free.pitch = deg2rad(-15.0);
    free.position = {300.0, 250.0, 1900.0};
    const Intrinsics k = Intrinsics::from_hfov(deg2rad(55.0), 160, 120);
    check(decode_rgb8(body(cli.Get(api + "/render?pose=40,-15,300,250,1900&w=160&h=120&hfov_deg=55"))).data() ==
              render(t.mesh, t.uv, tex, k, free, ref.render).rgb.data(),
          "free-pose render " + tag);
  };
  check_renders(ref.terrain.base, "before runs");

  {
    const RigEntry& e = ref.heldout[0];
    const RenderBuffers g = render_geometry(ref.terrain.mesh, e.rig.intrinsics, e.rig.pose, ref.render);
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.0, e.rig.intrinsics.width), v(0.0, e.rig.intrinsics.height);
    int hits = 0, misses = 0;
    for (int i = 0; i < 60; ++i) {
      const double pu = u(rng), pv = v(rng);
      auto r = cli.Post(api + "/pick3d", json{{"cam", e.rig.id}, {"u", pu}, {"v", pv}}.dump(), "application/json");
      const auto want = unproject_pixel(g, ref.terrain.mesh, e.rig.intrinsics, e.rig.pose, pu, pv);
      if (!want) {
        check(r->status == 404, "pick3d on sky");
        ++misses;
        continue;
      }
      const json j = json::parse(r->body);
      check(near(j["x"].get<double>(), want->x()) && near(j["y"].get<double>(), want->y()) &&
                near(j["z"].get<double>(), want->z()),
            "pick3d point");
      ++hits;
    }
    check(hits > 0 && misses > 0, "pick3d sampled both terrain and sky");
  }

  {
    RigEntry& e = ref.rigs[2];
    const std::string path = api + "/cameras/" + e.rig.id + "/correspondences";
    const json rec{{"x", 500.0}, {"y", 600.0}, {"z", 1200.0}, {"u", 40.5}, {"v", 30.25}};
    check(cli.Post(path, rec.dump(), "application/json")->status == 201, "correspondence create");
    json moved = rec;
    moved["v"] = 31.0;
    check(cli.Put(path + "/0", moved.dump(), "application/json")->status == 200, "correspondence update");
    check(cli.Delete(path + "/1")->status == 204, "correspondence delete");
    e.rig.correspondences.push_back({{500.0, 600.0, 1200.0}, {40.5, 30.25}});
    e.rig.correspondences[0] = {{500.0, 600.0, 1200.0}, {40.5, 31.0}};
    e.rig.correspondences.erase(e.rig.correspondences.begin() + 1);
    const json listed = json::parse(cli.Get(path)->body);
    const auto stored = load_correspondences(root / "alps/cameras" / (e.rig.id + ".txt"));
    bool same = listed.size() == e.rig.correspondences.size() && stored.size() == e.rig.correspondences.size();
    for (std::size_t i = 0; same && i < stored.size(); ++i)
      same = near(listed[i]["u"].get<double>(), e.rig.correspondences[i].target.x()) &&
             near(listed[i]["v"].get<double>(), e.rig.correspondences[i].target.y()) &&
             (stored[i].point - e.rig.correspondences[i].point).norm() <= kScalarTol;
    check(same, "correspondence list");
  }

  for (auto& e : ref.rigs) {
    const OptimizeResult want = optimize_camera(e.rig);
    auto r = cli.Post(api + "/cameras/" + e.rig.id + "/optimize", "{}", "application/json");
    const json j = json::parse(r->body);
    bool same = r->status == 200 && near(j["fx"].get<double>(), want.intrinsics.fx) &&
                near(j["fy"].get<double>(), want.intrinsics.fy) && near(j["yaw_deg"].get<double>(), rad2deg(want.pose.yaw)) &&
                near(j["loss"].get<double>(), want.loss) && j["loss_trace"].size() == want.loss_trace.size();
    for (std::size_t i = 0; same && i < e.rig.correspondences.size(); ++i) {
      const auto pr = project(e.rig.correspondences[i].point, want.intrinsics, want.pose);
      same = pr && near(j["residuals"][i]["pu"].get<double>(), pr->pixel.x()) &&
             near(j["residuals"][i]["pv"].get<double>(), pr->pixel.y());
    }
    check(same, "optimize " + e.rig.id);
    apply_optimization(e, want);
    save_rig(e);
  }

  const auto wait = [&](const std::string& id) {
    for (int i = 0; i < 30000; ++i) {
      const json j = json::parse(cli.Get(api + "/runs/" + id)->body);
      if (j["state"] == "done" || j["state"] == "failed") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    return json{{"state", "timeout"}};
  };
  const auto paint = run_paint_stage(ref);
  auto r = cli.Post(api + "/runs", json{{"stage", "paint"}}.dump(), "application/json");
  check(r->status == 202 && wait(json::parse(r->body)["id"])["state"] == "done", "paint run");
  check(texture_hash(latest_texture(Project::load(root / "alps/project.json"))) == texture_hash(paint.texture),
        "paint run texture");
  check_renders(paint.texture, "after paint");
  MockBackend mock;
  const auto inpaint = run_inpaint_stage(ref, mock);
  r = cli.Post(api + "/runs", json{{"stage", "inpaint"}, {"backend", "mock"}}.dump(), "application/json");
  const json fin = wait(json::parse(r->body)["id"]);
  check(fin["state"] == "done" && fin["progress"]["t"] == fin["progress"]["n"], "inpaint run");
  check(texture_hash(latest_texture(Project::load(root / "alps/project.json"))) == texture_hash(inpaint.texture),
        "inpaint run texture");
  check_renders(inpaint.texture, "after inpaint");
  service.join_workers();

  std::string detail = failures.empty() ? "all endpoints match direct calls; no secondary component in the build"
                                        : "mismatch: " + failures.front();
  if (failures.size() > 1) detail += fmt(" (+%.0f more)", static_cast<double>(failures.size() - 1));
  return {failures.empty(), detail};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"rasterizer oracle", rasterizer_oracle},
      {"camera recovery", camera_recovery},
      {"texturing round trip", texturing_round_trip},
      {"superposition law", superposition_law},
      {"pipeline determinism and resume", determinism_and_resume},
      {"forward-process statistics", forward_statistics},
      {"metric oracles", metric_oracles},
      {"evaluation protocol", evaluation_protocol},
      {"trajectory", trajectory_shape},
      {"service loopback", service_loopback},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
