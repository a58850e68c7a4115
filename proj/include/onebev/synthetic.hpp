#pragma once

#include <array>
#include <map>

#include "onebev/image_io.hpp"
#include "onebev/rig.hpp"
#include "onebev/sphere_geometry.hpp"

namespace onebev {

// Test scenes: a smooth colour field defined on view directions only, so
// every camera sees it as if it were infinitely far away and there is no
// parallax between cameras.

/// RGB in [0, 255] for a unit direction in the world frame.
std::array<double, 3> sphere_texture(const Vec3& dir);

/// What the camera would record of the textured sphere, pixel centers on
/// integer coordinates.
Image render_camera_view(const CameraSpec& cam, int jobs = 1);

/// All rig cameras keyed by order_index.
std::map<int, Image> render_rig_views(const Rig& rig, int jobs = 1);

/// The exact equirectangular image of the textured sphere on `grid`.
Image render_equirect(const AngularGrid& grid, int jobs = 1);

}  // namespace onebev
