#include "onebev/sphere_geometry.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <string>

#include "onebev/errors.hpp"

namespace onebev {

void AngularGrid::validate() const {
  require(height >= 1 && width >= 1, "angular grid: dims must be >= 1");
  require(v_half_fov > 0.0 && v_half_fov <= std::numbers::pi / 2, "angular grid: vertical half-FOV must lie in (0, 90] degrees");
  require(h_half_fov > 0.0 && h_half_fov <= std::numbers::pi, "angular grid: horizontal half-FOV must lie in (0, 180] degrees");
}

SphereCamera SphereCamera::build(const CameraSpec& spec, const Vec3& origin_mm) {
  SphereCamera c;
  c.spec = spec;
  c.r_plane = image_plane_distance(spec.width, spec.fov);
  const Vec3 d = spec.translation_mm - origin_mm;
  c.delta = center_offset_pixels(Vec2(d.x(), d.y()), spec.intr);
  c.radius = sphere_radius(c.r_plane, c.delta);
  c.tangent = tangent_point(c.radius, spec.orientation.yaw, spec.orientation.pitch);
  std::tie(c.basis_u, c.basis_v) = plane_basis(c.tangent, spec.orientation.yaw);
  return c;
}

double image_plane_distance(double width_px, double fov) {
  require(width_px > 0.0, "image_plane_distance: width must be positive");
  require(fov > 0.0 && fov < std::numbers::pi, "image_plane_distance: fov must lie in (0, pi)");
  return (width_px / 2.0) / std::tan(fov / 2.0);
}

double center_offset_pixels(const Vec2& delta_mm, const Intrinsics& intr) {
  require(intr.f_mm != 0.0, "center_offset_pixels: f_mm must be nonzero");
  const double du = delta_mm.x() * intr.fx / intr.f_mm;
  const double dv = delta_mm.y() * intr.fy / intr.f_mm;
  return std::hypot(du, dv);
}

double sphere_radius(double r_plane, double delta) { return r_plane + delta; }

Vec3 tangent_point(double radius, double yaw, double pitch) {
  return radius * Vec3(std::cos(pitch) * std::sin(yaw), std::cos(pitch) * std::cos(yaw), std::sin(pitch));
}

AngularDeviation angular_deviation(const AngularGrid& grid, int row, int col) {
  if (row < 0 || row >= grid.height || col < 0 || col >= grid.width) {
    throw std::out_of_range("angular_deviation: pixel (" + std::to_string(row) + ", " + std::to_string(col) +
                            ") outside " + std::to_string(grid.height) + "x" + std::to_string(grid.width) + " grid");
  }
  const double x = (col + 0.5) / grid.width;   // (0, 1)
  const double y = (row + 0.5) / grid.height;  // (0, 1), top row first
  return {(2.0 * x - 1.0) * grid.h_half_fov, (1.0 - 2.0 * y) * grid.v_half_fov};
}

ViewRay view_direction(double du, double dv) {
  return {std::cos(dv) * std::sin(du), std::cos(dv) * std::cos(du), std::sin(dv)};
}

std::optional<PlaneHit> intersect_plane(const Vec3& tangent, const ViewRay& ray, double radius) {
  const double denom = tangent.dot(ray.vec());
  if (denom <= 1e-12 * radius) return std::nullopt;
  const double t = radius * radius / denom;
  return PlaneHit{t * ray.vec(), t};
}

std::pair<Vec3, Vec3> plane_basis(const Vec3& tangent, double yaw) {
  const double n = tangent.norm();
  require(n > 0.0 && std::isfinite(n), "plane_basis: degenerate tangent point");
  const Vec3 u(std::cos(yaw), -std::sin(yaw), 0.0);
  const Vec3 v = tangent.cross(u).normalized();
  return {u, v};
}

std::optional<Vec2> panorama_to_camera_pixel(const SphereCamera& cam, const ViewRay& ray) {
  const auto hit = intersect_plane(cam.tangent, ray, cam.radius);
  if (!hit) return std::nullopt;
  const Vec3 t = hit->point - cam.tangent;
  // Displacements live on the plane at distance `radius`; the sensor is at r_plane.
  const double scale = cam.r_plane / cam.radius;
  const double u = cam.spec.intr.cx + t.dot(cam.basis_u) * scale;
  const double v = cam.spec.intr.cy + t.dot(cam.basis_v) * scale;
  if (!(u >= 0.0 && u < cam.spec.width && v >= 0.0 && v < cam.spec.height)) return std::nullopt;
  return Vec2(u, v);
}

}  // namespace onebev
