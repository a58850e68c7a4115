#include "onebev/labels.hpp"

#include <array>
#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "onebev/errors.hpp"
#include "onebev/image_io.hpp"

namespace onebev {

void ClassTable::validate() const {
  require(!entries.empty(), "class table: no classes");
  std::set<int> seen;
  for (const auto& e : entries) {
    require(e.index >= 0 && e.index < kIgnoreLabel, "class table: index " + std::to_string(e.index) + " out of range [0, 254]");
    require(seen.insert(e.index).second, "class table: duplicate index " + std::to_string(e.index));
  }
  for (const auto& e : entries) {
    if (!e.merged_into) continue;
    require(contains(*e.merged_into), "class table: " + e.name + " merges into unknown index " + std::to_string(*e.merged_into));
    require(!entry(*e.merged_into).merged_into, "class table: merge target of " + e.name + " is itself merged");
  }
}

bool ClassTable::contains(int index) const {
  return std::any_of(entries.begin(), entries.end(), [&](const ClassEntry& e) { return e.index == index; });
}

const ClassEntry& ClassTable::entry(int index) const {
  for (const auto& e : entries)
    if (e.index == index) return e;
  throw ValidationError("class table: unknown class index " + std::to_string(index));
}

std::vector<int> ClassTable::target_classes() const {
  std::vector<int> out;
  for (const auto& e : entries)
    if (!e.merged_into) out.push_back(e.index);
  return out;
}

ClassTable parse_class_table(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("class table: parse error: ") + e.what());
  }
  ClassTable table;
  try {
    for (const auto& j : doc.at("classes")) {
      ClassEntry e;
      e.index = j.at("index").get<int>();
      e.name = j.at("name").get<std::string>();
      if (j.contains("merged_into") && !j.at("merged_into").is_null()) e.merged_into = j.at("merged_into").get<int>();
      table.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("class table: ") + e.what());
  }
  table.validate();
  return table;
}

ClassTable load_class_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("class table: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_class_table(ss.str());
}

LabelRaster::LabelRaster(int w, int h, std::vector<std::uint8_t> values) : width(w), height(h), data(std::move(values)) {
  require(w >= 0 && h >= 0 && data.size() == static_cast<std::size_t>(w) * h, "label raster: size mismatch");
}

void LabelRaster::check_against(const ClassTable& table) const {
  std::array<bool, 256> known{};
  known[kIgnoreLabel] = true;
  for (const auto& e : table.entries) known[static_cast<std::size_t>(e.index)] = true;
  for (const auto v : data) require(known[v], "label raster: value " + std::to_string(v) + " is not in the class table");
}

LabelRaster read_label_png(const std::filesystem::path& path) {
  Image img = read_png_gray(path);
  return LabelRaster(img.width, img.height, std::move(img.pixels));
}

void write_label_png(const std::filesystem::path& path, const LabelRaster& raster) {
  Image img(raster.width, raster.height, 1);
  img.pixels = raster.data;
  write_png(path, img);
}

std::vector<std::filesystem::path> list_label_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace onebev
