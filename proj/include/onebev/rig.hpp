#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "onebev/camera_model.hpp"

namespace onebev {

/// One calibrated camera of a surround rig. Angles are radians internally;
/// rig files store degrees.
struct CameraSpec {
  std::string name;
  int order_index = 0;  // 1..6 in the back, back-left, front-left, front, front-right, back-right order
  EulerOffset orientation;
  Vec3 translation_mm = Vec3::Zero();  // optical center in the rig frame
  Intrinsics intr;
  int width = 0;
  int height = 0;
  double fov = 0.0;  // horizontal field of view

  void validate() const;
  Extrinsics extrinsics() const { return extrinsics_from_pose(orientation, translation_mm); }
};

struct Rig {
  std::vector<CameraSpec> cameras;
  Vec3 origin_mm = Vec3::Zero();  // mean optical center O

  /// Validates every camera, rejects duplicate order indices and nonzero
  /// roll, and recomputes origin_mm.
  void finalize();
};

Rig load_rig(const std::filesystem::path& path);
Rig parse_rig(const std::string& json_text);
std::string rig_to_json(const Rig& rig);

}  // namespace onebev
