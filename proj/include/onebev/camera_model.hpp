#pragma once

#include <Eigen/Core>

#include <numbers>

namespace onebev {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Pinhole intrinsics. fx, fy, cx, cy and skew are in pixels; f_mm is the
/// physical focal length used to convert millimeter offsets to pixels.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double skew = 0.0;
  double f_mm = 1.0;

  void validate() const;
  Mat3 matrix() const;
};

/// World-to-camera rigid transform: p_cam = rotation * p_world + translation (mm).
struct Extrinsics {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const;
  Extrinsics inverse() const;
};

/// Orientation offset relative to the reference camera, in radians.
struct EulerOffset {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  static EulerOffset from_degrees(double yaw_deg, double pitch_deg, double roll_deg);
};

// World frame is right-handed with x right, y forward, z up. Camera frame has
// x right, y down, z along the optical axis.

/// Optical axis direction in the world frame: (cos p sin y, cos p cos y, sin p).
Vec3 forward_direction(const EulerOffset& euler);

/// World-to-camera rotation. Yaw is applied about z-up (positive turns toward
/// +x), then pitch raises the optical axis toward +z, then roll spins the
/// image about the optical axis.
Mat3 rotation_from_euler(const EulerOffset& euler);

/// Extrinsics for a camera with the given orientation whose optical center
/// sits at `center_mm` in the world frame.
Extrinsics extrinsics_from_pose(const EulerOffset& euler, const Vec3& center_mm);

/// f_mm / pixel_size. Both arguments must be strictly positive.
double focal_pixels(double f_mm, double pixel_size_mm);

Vec3 world_to_camera(const Vec3& point_world, const Extrinsics& ext);

/// Projects a camera-frame point through K. Throws ValidationError when the
/// point is on or behind the camera plane.
Vec2 project_to_image(const Vec3& point_cam, const Intrinsics& intr);

/// Unit-depth ray K^-1 [u, v, 1] for a pixel.
Vec3 backproject(const Vec2& pixel, const Intrinsics& intr);

}  // namespace onebev
