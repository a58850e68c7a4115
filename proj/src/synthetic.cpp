#include "onebev/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

#include "onebev/parallel.hpp"

namespace onebev {

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

}  // namespace

std::array<double, 3> sphere_texture(const Vec3& dir) {
  const Vec3 d = dir.normalized();
  const double az = std::atan2(d.x(), d.y());
  const double el = std::asin(std::clamp(d.z(), -1.0, 1.0));
  return {127.5 + 90.0 * std::sin(3.0 * az) * std::cos(4.0 * el),
          127.5 + 90.0 * std::cos(5.0 * az + 6.0 * el),
          127.5 + 60.0 * std::sin(2.0 * az - 1.0) + 30.0 * std::sin(8.0 * el)};
}

Image render_camera_view(const CameraSpec& cam, int jobs) {
  cam.validate();
  Image img(cam.width, cam.height, 3);
  const Mat3 k_inv = cam.intr.matrix().inverse();
  // Camera-to-world rotation.
  const Mat3 r_t = cam.extrinsics().rotation.transpose();
  parallel_for(static_cast<std::size_t>(cam.height), jobs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t row = begin; row < end; ++row) {
      for (int col = 0; col < cam.width; ++col) {
        const Vec3 ray = r_t * (k_inv * Vec3(col, static_cast<double>(row), 1.0));
        const auto rgb = sphere_texture(ray);
        for (int c = 0; c < 3; ++c) img.at(static_cast<int>(row), col, c) = to_byte(rgb[c]);
      }
    }
  });
  return img;
}

std::map<int, Image> render_rig_views(const Rig& rig, int jobs) {
  std::map<int, Image> out;
  for (const auto& cam : rig.cameras) out.emplace(cam.order_index, render_camera_view(cam, jobs));
  return out;
}

Image render_equirect(const AngularGrid& grid, int jobs) {
  grid.validate();
  Image img(grid.width, grid.height, 3);
  parallel_for(static_cast<std::size_t>(grid.height), jobs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t row = begin; row < end; ++row) {
      for (int col = 0; col < grid.width; ++col) {
        const auto dev = angular_deviation(grid, static_cast<int>(row), col);
        const auto rgb = sphere_texture(view_direction(dev.du, dev.dv).vec());
        for (int c = 0; c < 3; ++c) img.at(static_cast<int>(row), col, c) = to_byte(rgb[c]);
      }
    }
  });
  return img;
}

}  // namespace onebev
