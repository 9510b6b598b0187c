#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/camera.hpp"
#include "forge/error.hpp"
#include "forge/image.hpp"
#include "forge/image_io.hpp"
#include "forge/raster.hpp"
#include "forge/terrain.hpp"
#include "forge/texture.hpp"

namespace forge {

// 1 = pixel participates in a metric.
using EvalMask = Image<std::uint8_t>;

inline constexpr double kPsnrCapDb = 99.0;

inline void check_metric_inputs(const Image<std::uint8_t>& a, const Image<std::uint8_t>& b, const EvalMask& mask) {
  if (!a.same_shape(b)) throw InvalidArgument("metric: images differ in shape");
  if (!a.same_size(mask) || mask.channels() != 1) throw InvalidArgument("metric: mask size differs from images");
  if (std::none_of(mask.data().begin(), mask.data().end(), [](std::uint8_t v) { return v != 0; }))
    throw InvalidArgument("metric: empty mask");
}

// Masked PSNR in dB over all channels, capped at 99 dB.
inline double psnr(const Image<std::uint8_t>& a, const Image<std::uint8_t>& b, const EvalMask& mask) {
  check_metric_inputs(a, b, mask);
  double sse = 0.0;
  std::size_t n = 0;
  const int ch = a.channels();
  for (std::size_t i = 0; i < mask.pixel_count(); ++i) {
    if (!mask.data()[i]) continue;
    for (int c = 0; c < ch; ++c) {
      const double d = static_cast<double>(a.data()[i * ch + c]) - b.data()[i * ch + c];
      sse += d * d;
    }
    n += static_cast<std::size_t>(ch);
  }
  const double mse = sse / static_cast<double>(n);
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(255.0 * 255.0 / mse));
}

// ITU-R BT.601 luma as double; single-channel inputs pass through.
inline Image<double> to_luma(const Image<std::uint8_t>& img) {
  Image<double> out(img.width(), img.height(), 1);
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    if (img.channels() == 1) {
      out.data()[i] = img.data()[i];
    } else {
      const auto* p = img.data().data() + i * img.channels();
      out.data()[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  }
  return out;
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 255.0;
};

inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) k[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
  const double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= sum;
  return k;
}

// Mean SSIM of the luma channels over windows whose center pixel is in the
// mask. Only windows lying fully inside the image are used.
inline double ssim(const Image<std::uint8_t>& a, const Image<std::uint8_t>& b, const EvalMask& mask,
                   const SsimParams& p = {}) {
  check_metric_inputs(a, b, mask);
  const Image<double> x = to_luma(a), y = to_luma(b);
  const int w = x.width(), h = x.height(), r = p.window / 2;
  if (w < p.window || h < p.window) throw InvalidArgument("ssim: image smaller than the window");
  const auto k = gaussian_kernel(p.window, p.sigma);
  const int ow = w - 2 * r, oh = h - 2 * r;

  // Separable filtering of x, y, x^2, y^2, xy restricted to valid centers.
  std::array<Image<double>, 5> horiz;
  for (auto& im : horiz) im = Image<double>(ow, h, 1, 0.0);
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < ow; ++xx) {
      std::array<double, 5> acc{};
      for (int t = 0; t < p.window; ++t) {
        const double xv = x.at(xx + t, yy), yv = y.at(xx + t, yy), kt = k[t];
        acc[0] += kt * xv;
        acc[1] += kt * yv;
        acc[2] += kt * xv * xv;
        acc[3] += kt * yv * yv;
        acc[4] += kt * xv * yv;
      }
      for (int m = 0; m < 5; ++m) horiz[m].at(xx, yy) = acc[m];
    }

  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  double total = 0.0;
  std::size_t n = 0;
  for (int yy = 0; yy < oh; ++yy)
    for (int xx = 0; xx < ow; ++xx) {
      if (!mask.at(xx + r, yy + r)) continue;
      std::array<double, 5> acc{};
      for (int t = 0; t < p.window; ++t)
        for (int m = 0; m < 5; ++m) acc[m] += k[t] * horiz[m].at(xx, yy + t);
      const double mx = acc[0], my = acc[1];
      const double vx = acc[2] - mx * mx, vy = acc[3] - my * my, cxy = acc[4] - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++n;
    }
  if (n == 0) throw InvalidArgument("ssim: no masked window center lies inside the image");
  return total / static_cast<double>(n);
}

struct HeldoutView {
  CameraRig rig;
  RgbImage image;                // webcam image at the rig's native resolution
  std::optional<EvalMask> mask;  // 1 = include; combined with the automatic masks
};

struct EvalConfig {
  int width = 1536;  // render resolution, pixels
  int height = 1024;
  double near_cutoff_m = 500.0;
  double min_included_fraction = 0.01;
  RenderSettings render;
  std::optional<std::filesystem::path> frames_dir;  // renders are written here when set
};

struct ViewScore {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  double included_fraction = 0.0;
};

struct EvalReport {
  std::string region;
  std::vector<ViewScore> views;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  int width = 0;
  int height = 0;

  std::size_t view_count() const { return views.size(); }

  nlohmann::json to_json() const {
    nlohmann::json v = nlohmann::json::array();
    for (const auto& s : views)
      v.push_back({{"id", s.id}, {"psnr_db", s.psnr}, {"ssim", s.ssim}, {"included_fraction", s.included_fraction}});
    return {{"region", region},       {"views", v},           {"mean_psnr_db", mean_psnr}, {"mean_ssim", mean_ssim},
            {"lpips", nullptr},       {"view_count", views.size()}, {"width", width},    {"height", height}};
  }

  std::string table() const {
    std::ostringstream os;
    os << std::left << std::setw(20) << "Region" << std::right << std::setw(8) << "LPIPS" << std::setw(10) << "PSNR"
       << std::setw(9) << "SSIM" << std::setw(8) << "Views" << '\n';
    os << std::left << std::setw(20) << region << std::right << std::setw(8) << "-" << std::fixed
       << std::setprecision(2) << std::setw(10) << mean_psnr << std::setprecision(3) << std::setw(9) << mean_ssim
       << std::setw(8) << views.size() << '\n';
    return os.str();
  }
};

// Default evaluation mask: covered pixels (not background) no nearer than
// the near cutoff, intersected with an optional user mask.
inline EvalMask auto_eval_mask(const RenderBuffers& buf, double near_cutoff_m, const EvalMask* user = nullptr) {
  EvalMask m(buf.width(), buf.height(), 1, 0);
  for (int y = 0; y < buf.height(); ++y)
    for (int x = 0; x < buf.width(); ++x) {
      const bool keep = buf.covered(x, y) && buf.depth.at(x, y) >= near_cutoff_m && (!user || user->at(x, y));
      m.at(x, y) = keep ? 1 : 0;
    }
  return m;
}

// Drop pixels whose resampled webcam value mixes in sky: a bilinear tap in
// the native-resolution image that the terrain does not cover.
inline void exclude_resampled_sky(EvalMask& mask, const RenderBuffers& native) {
  const int w = mask.width(), h = mask.height(), nw = native.width(), nh = native.height();
  const double sx = static_cast<double>(nw) / w, sy = static_cast<double>(nh) / h;
  for (int y = 0; y < h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const bool y_frac = fy != y0;
    for (int x = 0; x < w; ++x) {
      if (!mask.at(x, y)) continue;
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const bool x_frac = fx != x0;
      bool sky = false;
      for (int j = 0; j <= (y_frac ? 1 : 0); ++j)
        for (int i = 0; i <= (x_frac ? 1 : 0); ++i)
          sky = sky || !native.covered(std::clamp(x0 + i, 0, nw - 1), std::clamp(y0 + j, 0, nh - 1));
      if (sky) mask.at(x, y) = 0;
    }
  }
}

// Render each held-out camera at the evaluation resolution and score it
// against its webcam image over the combined mask.
inline EvalReport evaluate_views(const TerrainMesh& mesh, const UvChart& uv, const PaintedTexture& tex,
                                 const std::vector<HeldoutView>& heldout, const EvalConfig& cfg = {},
                                 std::string region = "scene") {
  if (heldout.empty()) throw InvalidArgument("evaluate_views: no held-out views");
  EvalReport report;
  report.region = std::move(region);
  report.width = cfg.width;
  report.height = cfg.height;
  for (const auto& view : heldout) {
    const Intrinsics k = view.rig.intrinsics.scaled_to(cfg.width, cfg.height);
    const RenderBuffers buf = render(mesh, uv, tex, k, view.rig.pose, cfg.render);
    const RgbImage target = view.image.width() == cfg.width && view.image.height() == cfg.height
                                ? view.image
                                : resize_bilinear(view.image, cfg.width, cfg.height);
    std::optional<EvalMask> user;
    if (view.mask) {
      user = view.mask->width() == cfg.width && view.mask->height() == cfg.height
                 ? *view.mask
                 : resize_bilinear(*view.mask, cfg.width, cfg.height);
    }
    EvalMask mask = auto_eval_mask(buf, cfg.near_cutoff_m, user ? &*user : nullptr);
    if (view.image.width() != cfg.width || view.image.height() != cfg.height)
      exclude_resampled_sky(mask, render_geometry(mesh, view.rig.intrinsics, view.rig.pose, cfg.render));
    const double included =
        static_cast<double>(std::count(mask.data().begin(), mask.data().end(), 1)) / mask.pixel_count();
    if (included < cfg.min_included_fraction)
      throw InvalidArgument("evaluate_views: view '" + view.rig.id + "' keeps less than 1% of its pixels");
    if (cfg.frames_dir) write_png(*cfg.frames_dir / ("eval_" + view.rig.id + ".png"), buf.rgb);
    report.views.push_back({view.rig.id, psnr(buf.rgb, target, mask), ssim(buf.rgb, target, mask), included});
  }
  double ps = 0.0, ss = 0.0;
  for (const auto& v : report.views) {
    ps += v.psnr;
    ss += v.ssim;
  }
  report.mean_psnr = ps / report.views.size();
  report.mean_ssim = ss / report.views.size();
  return report;
}

}  // namespace forge
