#include "onebev/rig.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "onebev/errors.hpp"

namespace onebev {

using nlohmann::json;

void CameraSpec::validate() const {
  require(!name.empty(), "camera: name must not be empty");
  intr.validate();
  require(width >= 1 && height >= 1, "camera " + name + ": width and height must be >= 1");
  require(fov > 0.0 && fov < std::numbers::pi, "camera " + name + ": fov must lie in (0, 180) degrees");
  require(std::isfinite(orientation.yaw) && std::isfinite(orientation.pitch) && std::isfinite(orientation.roll),
          "camera " + name + ": orientation must be finite");
  require(translation_mm.allFinite(), "camera " + name + ": translation must be finite");
}

void Rig::finalize() {
  require(!cameras.empty(), "rig: no cameras");
  std::set<int> seen;
  origin_mm.setZero();
  for (const auto& cam : cameras) {
    cam.validate();
    require(seen.insert(cam.order_index).second,
            "rig: duplicate order_index " + std::to_string(cam.order_index) + " (camera " + cam.name + ")");
    // The tangent-plane basis assumes roll-free cameras.
    require(cam.orientation.roll == 0.0, "rig: camera " + cam.name + " has nonzero roll, which is not supported");
    origin_mm += cam.translation_mm;
  }
  origin_mm /= static_cast<double>(cameras.size());
}

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& cam) {
  if (!j.contains(key)) throw ValidationError("rig: camera " + cam + " is missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError("rig: camera " + cam + " field '" + key + "': " + e.what());
  }
}

}  // namespace

Rig parse_rig(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("rig: parse error: ") + e.what());
  }
  const json& list = doc.is_array() ? doc : doc.value("cameras", json::array());
  require(list.is_array(), "rig: 'cameras' must be an array");

  Rig rig;
  for (const auto& j : list) {
    CameraSpec cam;
    cam.name = j.value("name", std::string{});
    const std::string label = cam.name.empty() ? "<unnamed>" : cam.name;
    cam.order_index = field<int>(j, "order_index", label);
    cam.orientation = EulerOffset::from_degrees(field<double>(j, "yaw_deg", label), field<double>(j, "pitch_deg", label),
                                                field<double>(j, "roll_deg", label));
    const auto t = field<std::vector<double>>(j, "translation_mm", label);
    require(t.size() == 3, "rig: camera " + label + " translation_mm must have 3 entries");
    cam.translation_mm = Vec3(t[0], t[1], t[2]);
    cam.intr.fx = field<double>(j, "fx_px", label);
    cam.intr.fy = field<double>(j, "fy_px", label);
    cam.intr.cx = field<double>(j, "cx_px", label);
    cam.intr.cy = field<double>(j, "cy_px", label);
    cam.intr.skew = j.value("skew", 0.0);
    cam.intr.f_mm = field<double>(j, "f_mm", label);
    cam.width = field<int>(j, "width_px", label);
    cam.height = field<int>(j, "height_px", label);
    cam.fov = deg2rad(field<double>(j, "fov_deg", label));
    rig.cameras.push_back(std::move(cam));
  }
  rig.finalize();
  return rig;
}

Rig load_rig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("rig: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_rig(ss.str());
}

std::string rig_to_json(const Rig& rig) {
  json list = json::array();
  for (const auto& c : rig.cameras) {
    list.push_back({{"name", c.name},
                    {"order_index", c.order_index},
                    {"yaw_deg", rad2deg(c.orientation.yaw)},
                    {"pitch_deg", rad2deg(c.orientation.pitch)},
                    {"roll_deg", rad2deg(c.orientation.roll)},
                    {"translation_mm", {c.translation_mm.x(), c.translation_mm.y(), c.translation_mm.z()}},
                    {"fx_px", c.intr.fx},
                    {"fy_px", c.intr.fy},
                    {"cx_px", c.intr.cx},
                    {"cy_px", c.intr.cy},
                    {"skew", c.intr.skew},
                    {"f_mm", c.intr.f_mm},
                    {"width_px", c.width},
                    {"height_px", c.height},
                    {"fov_deg", rad2deg(c.fov)}});
  }
  return json{{"cameras", list}}.dump(2);
}

}  // namespace onebev
