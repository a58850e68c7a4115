#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "onebev/image_io.hpp"
#include "onebev/rig.hpp"
#include "onebev/sphere_geometry.hpp"

namespace onebev {

struct RemapEntry {
  std::int16_t camera_id = -1;  // camera order_index, -1 when no camera sees the pixel
  float src_u = 0.0f;
  float src_v = 0.0f;

  bool valid() const { return camera_id >= 0; }
  bool operator==(const RemapEntry&) const = default;
};

/// Per-panorama-pixel lookup into the source cameras, row-major.
struct RemapTable {
  int height = 0;
  int width = 0;
  std::vector<RemapEntry> entries;

  RemapTable() = default;
  RemapTable(int h, int w) : height(h), width(w), entries(static_cast<std::size_t>(h) * w) {}

  const RemapEntry& at(int row, int col) const { return entries[static_cast<std::size_t>(row) * width + col]; }
  RemapEntry& at(int row, int col) { return entries[static_cast<std::size_t>(row) * width + col]; }
  std::size_t invalid_count() const;
  bool operator==(const RemapTable&) const = default;
};

enum class OverlapPolicy {
  Nearest,  // camera whose optical axis is closest to the view ray; ties go to the lowest order_index
  Order,    // cameras painted in order_index order, later ones overwrite
};

struct RemapOptions {
  AngularGrid grid;
  OverlapPolicy policy = OverlapPolicy::Nearest;
  int jobs = 1;
};

RemapTable build_remap_table(const Rig& rig, const RemapOptions& options);

/// Resamples the source images through the table. `images` maps camera
/// order_index to its RGB raster; invalid pixels stay black. Throws when a
/// referenced camera has no image or a source coordinate falls outside it.
Image stitch(const std::map<int, Image>& images, const RemapTable& table, int jobs = 1);

/// Checks that every rig camera has an RGB image of the declared size.
void check_images(const Rig& rig, const std::map<int, Image>& images);

/// Bilinear sample of an 8-bit raster with pixel centers on integer
/// coordinates. Neighbors beyond the border are clamped. Returns `channels`
/// values in [0, 255].
void sample_bilinear(const Image& image, double u, double v, double* out);

/// Binary format: "OBRM", u32 version, u32 height, u32 width, then
/// height * width records {i16 camera_id, f32 src_u, f32 src_v}, all
/// little-endian.
void save_remap(const std::filesystem::path& path, const RemapTable& table);
RemapTable load_remap(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_remap(const RemapTable& table);
RemapTable deserialize_remap(const std::vector<std::uint8_t>& bytes);

inline constexpr std::uint32_t kRemapVersion = 1;

}  // namespace onebev
