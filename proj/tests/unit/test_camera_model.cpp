#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <cmath>
#include <random>

#include "onebev/camera_model.hpp"
#include "onebev/errors.hpp"

using namespace onebev;

TEST(FocalPixels, Division) {
  EXPECT_DOUBLE_EQ(focal_pixels(5.5, 0.005), 1100.0);
  EXPECT_DOUBLE_EQ(focal_pixels(1.0, 1.0), 1.0);
  EXPECT_NEAR(focal_pixels(6.0, 0.0048), 1250.0, 1e-9);
}

TEST(FocalPixels, RejectsNonPositive) {
  EXPECT_THROW(focal_pixels(0.0, 0.005), ValidationError);
  EXPECT_THROW(focal_pixels(5.0, -1.0), ValidationError);
}

TEST(WorldToCamera, IdentityAndTranslation) {
  Extrinsics e;
  EXPECT_TRUE(world_to_camera({1, 2, 3}, e).isApprox(Vec3(1, 2, 3)));
  e.translation = {1, 0, 0};
  EXPECT_TRUE(world_to_camera({0, 0, 0}, e).isApprox(Vec3(1, 0, 0)));
}

TEST(WorldToCamera, MatchesExplicitMultiply) {
  // 90 degrees about z, written out by hand.
  const double r[3][3] = {{0, -1, 0}, {1, 0, 0}, {0, 0, 1}};
  Extrinsics e;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) e.rotation(i, j) = r[i][j];
  const double p[3] = {1, 0, 0};
  double expect[3] = {0, 0, 0};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) expect[i] += r[i][j] * p[j];
  const Vec3 got = world_to_camera({1, 0, 0}, e);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(got[i], expect[i], 1e-15);
}

TEST(ProjectToImage, Examples) {
  Intrinsics k{1000, 1000, 500, 500, 0, 4};
  EXPECT_TRUE(project_to_image({0, 0, 5}, k).isApprox(Vec2(500, 500)));
  const Vec2 p = project_to_image({2, 3, 4}, k);
  EXPECT_NEAR(p.x(), 2.0 / 4.0 * 1000 + 500, 1e-9);
  EXPECT_NEAR(p.y(), 3.0 / 4.0 * 1000 + 500, 1e-9);
  EXPECT_NEAR(p.x(), 1000.0, 1e-9);
  EXPECT_NEAR(p.y(), 1250.0, 1e-9);

  Intrinsics k2{100, 100, 50, 70, 0, 1};
  EXPECT_TRUE(project_to_image({1, 0, 1}, k2).isApprox(Vec2(150, 70)));
}

TEST(ProjectToImage, SkewTerm) {
  Intrinsics k{100, 120, 10, 20, 3, 1};
  const Vec2 p = project_to_image({1, 2, 4}, k);
  EXPECT_NEAR(p.x(), 100 * 0.25 + 3 * 0.5 + 10, 1e-12);
  EXPECT_NEAR(p.y(), 120 * 0.5 + 20, 1e-12);
}

TEST(ProjectToImage, BehindCameraThrows) {
  Intrinsics k{100, 100, 0, 0, 0, 1};
  EXPECT_THROW(project_to_image({0, 0, 0}, k), ValidationError);
  EXPECT_THROW(project_to_image({1, 1, -2}, k), ValidationError);
}

TEST(CameraModelProperty, RoundTripCollinear) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> xy(-5, 5), z(0.1, 50);
  Intrinsics k{900, 950, 640, 360, 1.5, 4};
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p(xy(rng), xy(rng), z(rng));
    const Vec3 ray = backproject(project_to_image(p, k), k);
    // sin of the angle between the two directions
    EXPECT_LT(ray.normalized().cross(p.normalized()).norm(), 1e-12);
    EXPECT_GT(ray.dot(p), 0.0);
  }
}

TEST(CameraModelProperty, ScaleInvariance) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> xy(-5, 5), z(0.1, 50), s(0.01, 100);
  Intrinsics k{1142.48, 1142.48, 800, 640, 0, 4};
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p(xy(rng), xy(rng), z(rng));
    EXPECT_LT((project_to_image(p, k) - project_to_image(s(rng) * p, k)).norm(), 1e-9);
  }
}

TEST(CameraModelProperty, InverseExtrinsicsIsIdentity) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ang(-3, 3), pos(-2000, 2000);
  for (int i = 0; i < 200; ++i) {
    const EulerOffset e{ang(rng), ang(rng) / 3, ang(rng)};
    const Extrinsics ext = extrinsics_from_pose(e, {pos(rng), pos(rng), pos(rng)});
    const Vec3 p(pos(rng), pos(rng), pos(rng));
    EXPECT_LT((world_to_camera(world_to_camera(p, ext), ext.inverse()) - p).norm(), 1e-9);
  }
}

TEST(Rotation, OrthonormalAndForwardAxis) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> ang(-3, 3);
  for (int i = 0; i < 200; ++i) {
    const EulerOffset e{ang(rng), ang(rng) / 2, ang(rng)};
    const Mat3 r = rotation_from_euler(e);
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    // The optical axis (camera z) in world coordinates is the third row.
    const Vec3 fwd(std::cos(e.pitch) * std::sin(e.yaw), std::cos(e.pitch) * std::cos(e.yaw), std::sin(e.pitch));
    EXPECT_LT((r.row(2).transpose() - fwd).norm(), 1e-12);
    EXPECT_LT((forward_direction(e) - fwd).norm(), 1e-12);
  }
}

TEST(Rotation, ImageAxesAtZeroPose) {
  const Mat3 r = rotation_from_euler({0, 0, 0});
  // Camera x is world right (+x), camera y is world down (-z).
  EXPECT_TRUE(r.row(0).isApprox(Vec3(1, 0, 0).transpose()));
  EXPECT_TRUE(r.row(1).isApprox(Vec3(0, 0, -1).transpose()));
}

TEST(Extrinsics, RejectsNonOrthonormal) {
  Extrinsics e;
  e.rotation(0, 1) = 1e-6;
  EXPECT_THROW(e.validate(), ValidationError);
  Extrinsics mirror;
  mirror.rotation(0, 0) = -1;
  EXPECT_THROW(mirror.validate(), ValidationError);
}

TEST(Intrinsics, Validation) {
  EXPECT_THROW((Intrinsics{0, 1, 0, 0, 0, 1}.validate()), ValidationError);
  EXPECT_THROW((Intrinsics{1, 1, 0, 0, 0, 0}.validate()), ValidationError);
  EXPECT_NO_THROW((Intrinsics{1, 1, 0, 0, 0, 1}.validate()));
}
