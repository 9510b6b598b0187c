#include <gtest/gtest.h>

#include <chrono>
#include <numbers>
#include <random>
#include <sstream>

#include "forge/camera.hpp"
#include "forge/geo.hpp"
#include "forge/panorama.hpp"
#include "support.hpp"

using namespace forge;

namespace {

const Intrinsics kK{1000.0, 1000.0, 512.0, 384.0, 1024, 768};

// Camera looking east from the origin: camera (x, y, z) is world (z, -x, -y).
Vec3 world_of_camera_point(const Vec3& c) { return {c.z(), -c.x(), -c.y()}; }

// Ground-truth rig with exact correspondences at random depths in view.
CameraRig synthetic_rig(std::mt19937_64& rng, int count) {
  CameraRig rig;
  rig.id = "synthetic";
  rig.intrinsics = {1500.0, 1500.0, 768.0, 512.0, 1536, 1024};
  rig.pose.position = {100.0, 200.0, 1500.0};
  rig.pose.yaw = deg2rad(30.0);
  rig.pose.pitch = deg2rad(-4.0);
  std::uniform_real_distribution<double> u(60.0, 1476.0), v(60.0, 964.0), depth(300.0, 3000.0);
  for (int i = 0; i < count; ++i) {
    const double pu = u(rng), pv = v(rng), d = depth(rng);
    const Vec3 cam((pu - rig.intrinsics.cx) / rig.intrinsics.fx * d, (pv - rig.intrinsics.cy) / rig.intrinsics.fy * d, d);
    const Vec3 world = rig.pose.to_world(cam);
    const auto p = project(world, rig.intrinsics, rig.pose);
    rig.correspondences.push_back({world, p->pixel});
  }
  return rig;
}

}  // namespace

TEST(GeoToLocal, Identity) {
  const GeoPoint o{46.6, 8.0, 1000.0};
  EXPECT_EQ(geo_to_local(o, o), Vec3(0, 0, 0));
}

TEST(GeoToLocal, LatitudeStepAtEquator) {
  const Vec3 p = geo_to_local({0.01, 0.0, 0.0}, {0.0, 0.0, 0.0});
  EXPECT_NEAR(p.y(), 1113.19, 0.01);
  EXPECT_DOUBLE_EQ(p.y(), kEarthRadiusM * 0.01 * std::numbers::pi / 180.0);
}

TEST(GeoToLocal, LongitudeStepAtMidLatitude) {
  const Vec3 p = geo_to_local({46.6, 8.01, 0.0}, {46.6, 8.0, 0.0});
  EXPECT_NEAR(p.x(), 764.9, 0.1);
}

TEST(GeoToLocal, Errors) {
  EXPECT_THROW(geo_to_local({48.0, 8.0, 0.0}, {46.6, 8.0, 0.0}), InvalidArgument);
  EXPECT_THROW(geo_to_local({91.0, 8.0, 0.0}, {46.6, 8.0, 0.0}), InvalidArgument);
}

TEST(GeoToLocal, RoundTrip) {
  const GeoPoint o{46.6, 8.0, 500.0};
  const Vec3 p(1234.5, -987.25, 42.0);
  const Vec3 q = geo_to_local(local_to_geo(p, o), o);
  EXPECT_NEAR((p - q).norm(), 0.0, 1e-8);
}

TEST(Project, OpticalAxisHitsPrincipalPoint) {
  const Pose pose;
  const auto p = project(world_of_camera_point({0, 0, 5}), kK, pose);
  ASSERT_TRUE(p);
  EXPECT_NEAR(p->pixel.x(), 512.0, 1e-12);
  EXPECT_NEAR(p->pixel.y(), 384.0, 1e-12);
  EXPECT_NEAR(p->depth, 5.0, 1e-12);
}

TEST(Project, OffAxis) {
  const auto p = project_camera_point({1, 0, 5}, kK);
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->pixel.x(), 712.0);
  EXPECT_DOUBLE_EQ(p->pixel.y(), 384.0);
}

TEST(Project, BehindCameraIsNotProjectable) {
  EXPECT_FALSE(project_camera_point({0, 0, -1}, kK));
  EXPECT_FALSE(project(world_of_camera_point({0, 0, -1}), kK, Pose{}));
}

TEST(Project, ScaleConsistent) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(-3, 3), z(0.5, 10), lam(0.1, 20);
  for (int i = 0; i < 200; ++i) {
    const Vec3 c(d(rng), d(rng), z(rng));
    const double l = lam(rng);
    const auto a = project_camera_point(c, kK), b = project_camera_point(l * c, kK);
    EXPECT_NEAR((a->pixel - b->pixel).norm(), 0.0, 1e-9);
  }
}

TEST(Pose, AxesConvention) {
  Pose p;
  // Looking east: a point to the south is on the right, above is up.
  const Vec3 right = p.to_camera({10, -1, 0});
  const Vec3 up = p.to_camera({10, 0, 1});
  EXPECT_GT(right.x(), 0.0);
  EXPECT_LT(up.y(), 0.0);
  p.yaw = std::numbers::pi / 2;  // north
  EXPECT_NEAR(p.to_camera({0, 10, 0}).z(), 10.0, 1e-12);
  p.pitch = 0.3;
  EXPECT_GT(p.forward().z(), 0.0);
}

TEST(Pose, RotationIsOrthonormalAndRoundTrips) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> a(-3.1, 3.1), b(-1.5, 1.5);
  for (int i = 0; i < 100; ++i) {
    Pose p;
    p.yaw = a(rng);
    p.pitch = b(rng);
    p.roll = b(rng);
    p.position = {a(rng), a(rng), a(rng)};
    EXPECT_NO_THROW(p.validate());
    const Pose q = Pose::from_rotation(p.rotation(), p.position);
    EXPECT_NEAR((q.rotation() - p.rotation()).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  }
}

TEST(Pose, YawLeavesHorizonRowUnchanged) {
  // Points on the horizontal plane through the camera project to v = cy.
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ang(-0.5, 0.5), yaw(-3, 3);
  Pose p;
  p.position = {5, 6, 7};
  for (int i = 0; i < 50; ++i) {
    p.yaw = yaw(rng);
    const double a = p.yaw + ang(rng);
    const Vec3 w = p.position + 100.0 * Vec3(std::cos(a), std::sin(a), 0.0);
    EXPECT_NEAR(project(w, kK, p)->pixel.y(), kK.cy, 1e-9);
  }
}

TEST(ReprojectionLoss, Examples) {
  const Pose pose;
  const Vec3 x = world_of_camera_point({1, 0, 5});  // projects to (712, 384)
  EXPECT_DOUBLE_EQ(reprojection_loss({{x, {712, 384}}}, kK, pose), 0.0);
  EXPECT_DOUBLE_EQ(reprojection_loss({{x, {710, 386}}}, kK, pose), 4.0);
  EXPECT_DOUBLE_EQ(reprojection_loss({{x, {710, 386}}, {x, {715, 381}}}, kK, pose), 5.0);
  EXPECT_THROW(reprojection_loss({}, kK, pose), InvalidArgument);
}

TEST(ReprojectionLoss, UnprojectablePenalty) {
  const Vec3 behind = world_of_camera_point({0, 0, -2});
  EXPECT_DOUBLE_EQ(reprojection_loss({{behind, {10, 10}}}, kK, Pose{}), kUnprojectablePenalty);
}

TEST(ReprojectionLoss, NonNegativeAndZeroOnlyAtFit) {
  std::mt19937_64 rng(8);
  CameraRig rig = synthetic_rig(rng, 10);
  EXPECT_NEAR(reprojection_loss(rig.correspondences, rig.intrinsics, rig.pose), 0.0, 1e-9);
  rig.correspondences[3].target.x() += 0.25;
  EXPECT_NEAR(reprojection_loss(rig.correspondences, rig.intrinsics, rig.pose), 0.025, 1e-9);
}

TEST(OptimizeCamera, FixedPointAtOptimum) {
  std::mt19937_64 rng(10);
  CameraRig rig = synthetic_rig(rng, 20);
  // Exact zero loss: targets are the projections computed here.
  for (auto& c : rig.correspondences) c.target = project(c.point, rig.intrinsics, rig.pose)->pixel;
  const auto r = optimize_camera(rig);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.intrinsics, rig.intrinsics);
  EXPECT_EQ(r.pose.yaw, rig.pose.yaw);
}

// Perturbations: every sign combination of +-10% focal and +-5 deg yaw.
class Recovery : public ::testing::TestWithParam<std::tuple<double, double, double>> {};

TEST_P(Recovery, RecoversPerturbedCamera) {
  const auto [sx, sy, syaw] = GetParam();
  std::mt19937_64 rng(12);
  const CameraRig truth = synthetic_rig(rng, 20);
  CameraRig init = truth;
  init.intrinsics.fx *= 1.0 + 0.1 * sx;
  init.intrinsics.fy *= 1.0 + 0.1 * sy;
  init.pose.yaw += deg2rad(5.0 * syaw);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = optimize_camera(init);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(std::abs(r.intrinsics.fx / truth.intrinsics.fx - 1.0), 0.005);
  EXPECT_LT(std::abs(r.intrinsics.fy / truth.intrinsics.fy - 1.0), 0.005);
  EXPECT_LT(std::abs(rad2deg(r.pose.yaw - truth.pose.yaw)), 0.05);
  EXPECT_LT(r.loss, 0.5);
  EXPECT_LT(secs, 10.0);
  EXPECT_LE(r.loss, r.initial_loss);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i) EXPECT_LE(r.loss_trace[i], r.loss_trace[i - 1]);
}

INSTANTIATE_TEST_SUITE_P(SignCombinations, Recovery,
                         ::testing::Combine(::testing::Values(-1.0, 1.0), ::testing::Values(-1.0, 1.0),
                                            ::testing::Values(-1.0, 1.0)));

TEST(OptimizeCamera, RandomPerturbationSweep) {
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    std::mt19937_64 rng(seed);
    const CameraRig truth = synthetic_rig(rng, 20);
    std::uniform_real_distribution<double> pm(-1.0, 1.0);
    CameraRig init = truth;
    init.intrinsics.fx *= 1.0 + 0.1 * pm(rng);
    init.intrinsics.fy *= 1.0 + 0.1 * pm(rng);
    init.pose.yaw += deg2rad(5.0 * pm(rng));
    const auto r = optimize_camera(init);
    EXPECT_LT(std::abs(r.intrinsics.fx / truth.intrinsics.fx - 1.0), 0.005) << "seed " << seed;
    EXPECT_LT(std::abs(r.intrinsics.fy / truth.intrinsics.fy - 1.0), 0.005) << "seed " << seed;
    EXPECT_LT(std::abs(rad2deg(r.pose.yaw - truth.pose.yaw)), 0.05) << "seed " << seed;
    EXPECT_LT(r.loss, 0.5) << "seed " << seed;
  }
}

TEST(OptimizeCamera, NoisyTargets) {
  std::mt19937_64 rng(14);
  CameraRig rig = synthetic_rig(rng, 20);
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  for (auto& c : rig.correspondences) c.target += Vec2(noise(rng), noise(rng));
  rig.intrinsics.fx *= 1.1;
  rig.intrinsics.fy *= 0.9;
  rig.pose.yaw += deg2rad(5.0);
  const auto r = optimize_camera(rig);
  EXPECT_LE(r.loss, 2.0);
}

TEST(OptimizeCamera, NoisyTargetsReachTheTrueParameterLoss) {
  // Uniform pixel noise puts kinks of the L1 surface near the optimum;
  // the optimizer must not stall on one above the loss at the truth.
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    std::mt19937_64 rng(500 + seed);
    const CameraRig truth = synthetic_rig(rng, 20);
    CameraRig rig = truth;
    std::uniform_real_distribution<double> noise(-1.0, 1.0);
    for (auto& c : rig.correspondences) c.target += Vec2(noise(rng), noise(rng));
    const double at_truth = reprojection_loss(rig.correspondences, truth.intrinsics, truth.pose);
    rig.intrinsics.fx *= 1.1;
    rig.intrinsics.fy *= 0.9;
    rig.pose.yaw -= deg2rad(5.0);
    EXPECT_LE(optimize_camera(rig).loss, at_truth + 1e-6) << "seed " << seed;
  }
}

TEST(OptimizeCamera, PitchIsOptIn) {
  std::mt19937_64 rng(16);
  const CameraRig truth = synthetic_rig(rng, 20);
  CameraRig init = truth;
  init.pose.pitch += deg2rad(1.0);
  const auto without = optimize_camera(init);
  EXPECT_EQ(without.pose.pitch, init.pose.pitch);
  OptimizeConfig cfg;
  cfg.free_params = {CameraParam::Fx, CameraParam::Fy, CameraParam::Yaw, CameraParam::Pitch};
  const auto with = optimize_camera(init, cfg);
  EXPECT_LT(with.loss, without.loss);
  EXPECT_LT(std::abs(rad2deg(with.pose.pitch - truth.pose.pitch)), 0.05);
}

TEST(OptimizeCamera, NeverWorseThanInitAndWarnsWhenUnderconstrained) {
  std::mt19937_64 rng(18);
  CameraRig rig = synthetic_rig(rng, 2);
  rig.pose.yaw += 0.1;
  const auto r = optimize_camera(rig);
  EXPECT_LE(r.loss, r.initial_loss);
  EXPECT_FALSE(r.warnings.empty());
  rig.correspondences.clear();
  EXPECT_THROW(optimize_camera(rig), InvalidArgument);
}

TEST(OptimizeCamera, ResidualsAreProjectionsOfResult) {
  std::mt19937_64 rng(20);
  CameraRig rig = synthetic_rig(rng, 8);
  rig.pose.yaw += 0.02;
  const auto r = optimize_camera(rig);
  ASSERT_EQ(r.residuals.size(), 8u);
  double sum = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    const auto p = project(rig.correspondences[i].point, r.intrinsics, r.pose);
    EXPECT_EQ(r.residuals[i].projected, p->pixel);
    EXPECT_DOUBLE_EQ(r.residuals[i].l1, correspondence_l1(rig.correspondences[i], r.intrinsics, r.pose));
    sum += r.residuals[i].l1;
  }
  EXPECT_NEAR(sum / 8.0, r.loss, 1e-12);
}

TEST(Correspondences, TextRoundTrip) {
  const auto dir = testkit::scratch_dir("corr");
  const std::vector<Correspondence> c{{{1.5, -2.25, 3e3}, {10.125, 20.5}}, {{0.1, 0.2, 0.3}, {1.0 / 3.0, 2.0}}};
  save_correspondences(dir / "c.txt", c);
  const auto back = load_correspondences(dir / "c.txt");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].point, c[i].point);
    EXPECT_EQ(back[i].target, c[i].target);
  }
  std::istringstream bad("1 2 3 4\n");
  EXPECT_THROW(parse_correspondences(bad), IoError);
  std::istringstream comments("# header\n\n1 2 3 4 5\n");
  EXPECT_EQ(parse_correspondences(comments).size(), 1u);
  EXPECT_THROW(validate_correspondences({{{0, 0, 0}, {2000, 5}}}, kK), InvalidArgument);
}

TEST(RigDescriptor, JsonRoundTripAndMissingAltitude) {
  const auto j = nlohmann::json::parse(R"({"id":"cam","geo":{"lat":46.601,"lon":8.002},"yaw_deg":30,
      "fx":800,"fy":810,"cx":320,"cy":240,"width":640,"height":480,"timestamp":"2023-10-01T09:00:00Z"})");
  const RigDescriptor d = RigDescriptor::from_json(j);
  EXPECT_FALSE(d.has_alt);
  EXPECT_EQ(RigDescriptor::from_json(d.to_json()).to_json(), d.to_json());
  const CameraRig rig = resolve_rig(d, {46.6, 8.0, 0.0}, [](double, double) { return 1234.0; });
  EXPECT_DOUBLE_EQ(rig.pose.position.z(), 1234.0 + kDefaultMastOffsetM);
  EXPECT_DOUBLE_EQ(rig.pose.yaw, deg2rad(30.0));
  EXPECT_EQ(rig.timestamp, "2023-10-01T09:00:00Z");
  auto missing = j;
  missing.erase("fx");
  EXPECT_THROW(RigDescriptor::from_json(missing), InvalidArgument);
}

namespace {

// Smooth gradient panorama: value depends on azimuth (wrapping) and row.
FloatImage gradient_panorama(int w, int h) {
  FloatImage img(w, h, 2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = static_cast<float>(x + 0.5);
      img.at(x, y, 1) = static_cast<float>(y + 0.5);
    }
  return img;
}

}  // namespace

TEST(Panorama, CenterPixelLooksAtAzimuthZero) {
  const CylindricalPanorama geom{3600, 900};
  const Intrinsics k = Intrinsics::from_hfov(deg2rad(90.0), 900, 600);
  const Vec2 p = subview_to_panorama(k.cx, k.cy, k, 0.0, geom);
  EXPECT_NEAR(p.x(), 1800.0, 1e-9);
  EXPECT_NEAR(p.y(), 450.0, 1e-9);
}

TEST(Panorama, EdgePixelIsAtFortyFiveDegrees) {
  const CylindricalPanorama geom{3600, 900};
  const Intrinsics k = Intrinsics::from_hfov(deg2rad(90.0), 900, 600);
  EXPECT_NEAR(subview_to_panorama(0.0, k.cy, k, 0.0, geom).x(), 1800.0 - 3600.0 / 8.0, 1e-9);
  EXPECT_NEAR(subview_to_panorama(900.0, k.cy, k, 0.0, geom).x(), 1800.0 + 3600.0 / 8.0, 1e-9);
}

TEST(Panorama, FourViewsPartitionTheCircle) {
  const FloatImage pano = gradient_panorama(720, 200);
  const auto views = cylindrical_to_perspective(pano, 4, 90.0, 60.0);
  ASSERT_EQ(views.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(views[i].yaw_offset_deg, 90.0 * i);
  // Adjacent views meet: the right edge of view i is the left edge of view i+1.
  const CylindricalPanorama geom{720, 200};
  for (int i = 0; i < 4; ++i) {
    const auto& k = views[i].intrinsics;
    const Vec2 right = subview_to_panorama(k.width, k.cy, k, deg2rad(views[i].yaw_offset_deg), geom);
    const auto& n = views[(i + 1) % 4];
    const Vec2 left = subview_to_panorama(0.0, k.cy, n.intrinsics, deg2rad(n.yaw_offset_deg), geom);
    EXPECT_NEAR(std::remainder(right.x() - left.x(), 720.0), 0.0, 1e-9);
  }
}

TEST(Panorama, SamplingMatchesInverseMapping) {
  // The gradient panorama stores each pixel's own coordinates, so a sampled
  // sub-image pixel must equal the panorama position its ray maps to.
  const int w = 1440, h = 400;
  const FloatImage pano = gradient_panorama(w, h);
  const CylindricalPanorama geom{w, h};
  for (int count : {4, 5, 6}) {
    const auto views = cylindrical_to_perspective(pano, count, 80.0, 50.0);
    for (const auto& v : views) {
      for (int y = 0; y < v.image.height(); y += 7) {
        for (int x = 0; x < v.image.width(); x += 7) {
          const Vec2 p = subview_to_panorama(x + 0.5, y + 0.5, v.intrinsics, deg2rad(v.yaw_offset_deg), geom);
          double px = std::fmod(p.x(), w);
          if (px < 0) px += w;
          if (p.y() < 0.5 || p.y() > h - 0.5) continue;  // clamped rows
          if (px < 0.5 || px > w - 0.5) continue;        // wrap seam blends both edges
          EXPECT_NEAR(v.image.at(x, y, 0), px, 0.51);
          EXPECT_NEAR(v.image.at(x, y, 1), p.y(), 0.51);
        }
      }
    }
  }
}

TEST(Panorama, Errors) {
  const FloatImage pano = gradient_panorama(100, 50);
  EXPECT_THROW(cylindrical_to_perspective(pano, 3, 90, 60), InvalidArgument);
  EXPECT_THROW(cylindrical_to_perspective(pano, 7, 90, 60), InvalidArgument);
  EXPECT_THROW(cylindrical_to_perspective(pano, 4, 180, 60), InvalidArgument);
}
