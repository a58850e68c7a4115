#include "onebev/camera_model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "onebev/errors.hpp"

namespace onebev {

void Intrinsics::validate() const {
  require(fx > 0.0 && std::isfinite(fx), "intrinsics: fx must be positive");
  require(fy > 0.0 && std::isfinite(fy), "intrinsics: fy must be positive");
  require(f_mm > 0.0 && std::isfinite(f_mm), "intrinsics: f_mm must be positive");
  require(std::isfinite(cx) && std::isfinite(cy) && std::isfinite(skew),
          "intrinsics: principal point and skew must be finite");
}

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

void Extrinsics::validate() const {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  require(ortho <= 1e-9, "extrinsics: rotation is not orthonormal");
  require(std::abs(rotation.determinant() - 1.0) <= 1e-9, "extrinsics: rotation determinant must be 1");
  require(translation.allFinite(), "extrinsics: translation must be finite");
}

Extrinsics Extrinsics::inverse() const {
  Extrinsics inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

EulerOffset EulerOffset::from_degrees(double yaw_deg, double pitch_deg, double roll_deg) {
  return {deg2rad(yaw_deg), deg2rad(pitch_deg), deg2rad(roll_deg)};
}

Vec3 forward_direction(const EulerOffset& e) {
  return {std::cos(e.pitch) * std::sin(e.yaw), std::cos(e.pitch) * std::cos(e.yaw), std::sin(e.pitch)};
}

Mat3 rotation_from_euler(const EulerOffset& e) {
  const Vec3 forward = forward_direction(e);
  const Vec3 right{std::cos(e.yaw), -std::sin(e.yaw), 0.0};
  const Vec3 down = forward.cross(right);
  const double c = std::cos(e.roll);
  const double s = std::sin(e.roll);
  Mat3 r;
  r.row(0) = (c * right + s * down).transpose();
  r.row(1) = (-s * right + c * down).transpose();
  r.row(2) = forward.transpose();
  return r;
}

Extrinsics extrinsics_from_pose(const EulerOffset& euler, const Vec3& center_mm) {
  Extrinsics ext;
  ext.rotation = rotation_from_euler(euler);
  ext.translation = -(ext.rotation * center_mm);
  return ext;
}

double focal_pixels(double f_mm, double pixel_size_mm) {
  require(f_mm > 0.0 && pixel_size_mm > 0.0, "focal_pixels: inputs must be positive");
  return f_mm / pixel_size_mm;
}

Vec3 world_to_camera(const Vec3& point_world, const Extrinsics& ext) {
  Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
  h.topLeftCorner<3, 3>() = ext.rotation;
  h.topRightCorner<3, 1>() = ext.translation;
  const Eigen::Vector4d p = h * point_world.homogeneous();
  return p.head<3>();
}

Vec2 project_to_image(const Vec3& point_cam, const Intrinsics& intr) {
  if (!(point_cam.z() > 0.0)) {
    throw ValidationError("project_to_image: point is behind the camera (z = " +
                          std::to_string(point_cam.z()) + ")");
  }
  const Vec3 s = intr.matrix() * point_cam;
  return s.hnormalized();
}

Vec3 backproject(const Vec2& pixel, const Intrinsics& intr) {
  return intr.matrix().inverse() * pixel.homogeneous();
}

}  // namespace onebev
