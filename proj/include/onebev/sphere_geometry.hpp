#pragma once

#include <optional>
#include <utility>

#include "onebev/camera_model.hpp"
#include "onebev/rig.hpp"

namespace onebev {

/// Unit direction of a view line from the sphere center O.
struct ViewRay {
  double alpha = 0.0;
  double beta = 1.0;
  double gamma = 0.0;

  Vec3 vec() const { return {alpha, beta, gamma}; }
};

/// Equirectangular sampling grid. Indices are 0-based and sampled at pixel
/// centers, so column k covers [k, k + 1) and maps to (k + 0.5) / width.
struct AngularGrid {
  int height = 600;
  int width = 9600;
  double h_half_fov = std::numbers::pi;
  double v_half_fov = deg2rad(25.0);

  void validate() const;
};

struct AngularDeviation {
  double du = 0.0;  // azimuth, positive toward +x (right)
  double dv = 0.0;  // elevation, positive up
};

/// A camera placed on its observation sphere: image plane tangent to a
/// sphere of radius r_plane + delta at `tangent`.
struct SphereCamera {
  CameraSpec spec;
  double r_plane = 0.0;
  double delta = 0.0;
  double radius = 0.0;
  Vec3 tangent = Vec3::Zero();
  Vec3 basis_u = Vec3::UnitX();
  Vec3 basis_v = -Vec3::UnitZ();

  /// `origin_mm` is the mean optical center of the rig.
  static SphereCamera build(const CameraSpec& spec, const Vec3& origin_mm);
};

struct PlaneHit {
  Vec3 point;
  double t = 0.0;
};

/// Distance from the optical center to the image plane, (width / 2) / tan(fov / 2).
double image_plane_distance(double width_px, double fov);

/// Optical-center displacement converted to pixels with fx / f and fy / f.
/// Only the horizontal-plane components of `delta_mm` are used.
double center_offset_pixels(const Vec2& delta_mm, const Intrinsics& intr);

double sphere_radius(double r_plane, double delta);

/// Point on the sphere of the given radius in the direction (yaw, pitch).
Vec3 tangent_point(double radius, double yaw, double pitch);

AngularDeviation angular_deviation(const AngularGrid& grid, int row, int col);

ViewRay view_direction(double du, double dv);

/// Intersection of the view line with the plane tangent to the sphere at
/// `tangent`. Empty when the ray is parallel to or points away from the plane.
std::optional<PlaneHit> intersect_plane(const Vec3& tangent, const ViewRay& ray, double radius);

/// Unit u (horizontal, image right) and v (image down) directions spanning the
/// tangent plane.
std::pair<Vec3, Vec3> plane_basis(const Vec3& tangent, double yaw);

/// Source pixel in the camera image for a panorama view ray, or empty when the
/// ray misses the image.
std::optional<Vec2> panorama_to_camera_pixel(const SphereCamera& cam, const ViewRay& ray);

}  // namespace onebev
