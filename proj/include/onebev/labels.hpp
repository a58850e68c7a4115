#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace onebev {

inline constexpr std::uint8_t kIgnoreLabel = 255;

struct ClassEntry {
  int index = 0;
  std::string name;
  std::optional<int> merged_into;
};

/// Label vocabulary. Entries with `merged_into` are folded into another class
/// by apply_class_merges.
struct ClassTable {
  std::vector<ClassEntry> entries;

  void validate() const;
  bool contains(int index) const;
  const ClassEntry& entry(int index) const;
  /// Indices that survive merging, in table order.
  std::vector<int> target_classes() const;
};

ClassTable parse_class_table(const std::string& json_text);
ClassTable load_class_table(const std::filesystem::path& path);

/// Single-channel class-index raster, row-major.
struct LabelRaster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  LabelRaster() = default;
  LabelRaster(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}
  LabelRaster(int w, int h, std::vector<std::uint8_t> values);

  std::uint8_t at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }
  std::uint8_t& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
  bool operator==(const LabelRaster&) const = default;

  /// Throws unless every value is a table index or the ignore label.
  void check_against(const ClassTable& table) const;
};

LabelRaster read_label_png(const std::filesystem::path& path);
void write_label_png(const std::filesystem::path& path, const LabelRaster& raster);

/// Label PNGs in a directory, sorted by file name.
std::vector<std::filesystem::path> list_label_files(const std::filesystem::path& dir);

}  // namespace onebev
