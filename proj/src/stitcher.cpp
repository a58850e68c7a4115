#include "onebev/stitcher.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "onebev/errors.hpp"
#include "onebev/parallel.hpp"

namespace onebev {

std::size_t RemapTable::invalid_count() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const RemapEntry& e) { return !e.valid(); }));
}

namespace {

float to_source_coord(double x, int extent) {
  float f = static_cast<float>(x);
  if (f >= static_cast<float>(extent)) f = std::nextafter(static_cast<float>(extent), 0.0f);
  return std::max(f, 0.0f);
}

}  // namespace

RemapTable build_remap_table(const Rig& rig, const RemapOptions& options) {
  options.grid.validate();
  require(!rig.cameras.empty(), "build_remap_table: rig has no cameras");

  std::vector<SphereCamera> cams;
  for (const auto& spec : rig.cameras) {
    require(spec.order_index >= 0 && spec.order_index <= std::numeric_limits<std::int16_t>::max(),
            "build_remap_table: order_index of " + spec.name + " does not fit the table format");
    cams.push_back(SphereCamera::build(spec, rig.origin_mm));
  }
  std::sort(cams.begin(), cams.end(),
            [](const SphereCamera& a, const SphereCamera& b) { return a.spec.order_index < b.spec.order_index; });
  std::vector<Vec3> axes;
  for (const auto& c : cams) axes.push_back(c.tangent.normalized());

  const AngularGrid& grid = options.grid;
  RemapTable table(grid.height, grid.width);
  parallel_for(static_cast<std::size_t>(grid.height), options.jobs, [&](std::size_t r0, std::size_t r1) {
    for (auto row = static_cast<int>(r0); row < static_cast<int>(r1); ++row) {
      for (int col = 0; col < grid.width; ++col) {
        const AngularDeviation dev = angular_deviation(grid, row, col);
        const ViewRay ray = view_direction(dev.du, dev.dv);
        RemapEntry best;
        double best_cos = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < cams.size(); ++i) {
          const auto px = panorama_to_camera_pixel(cams[i], ray);
          if (!px) continue;
          const double c = axes[i].dot(ray.vec());
          const bool take = options.policy == OverlapPolicy::Order || c > best_cos;
          if (!take) continue;
          best_cos = c;
          best.camera_id = static_cast<std::int16_t>(cams[i].spec.order_index);
          best.src_u = to_source_coord(px->x(), cams[i].spec.width);
          best.src_v = to_source_coord(px->y(), cams[i].spec.height);
        }
        table.at(row, col) = best;
      }
    }
  });
  return table;
}

void sample_bilinear(const Image& image, double u, double v, double* out) {
  const double x = std::clamp(u, 0.0, static_cast<double>(image.width - 1));
  const double y = std::clamp(v, 0.0, static_cast<double>(image.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, image.width - 1);
  const int y1 = std::min(y0 + 1, image.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  for (int c = 0; c < image.channels; ++c) {
    const double top = (1.0 - fx) * image.at(y0, x0, c) + fx * image.at(y0, x1, c);
    const double bottom = (1.0 - fx) * image.at(y1, x0, c) + fx * image.at(y1, x1, c);
    out[c] = (1.0 - fy) * top + fy * bottom;
  }
}

void check_images(const Rig& rig, const std::map<int, Image>& images) {
  for (const auto& cam : rig.cameras) {
    const auto it = images.find(cam.order_index);
    if (it == images.end()) throw ValidationError("stitch: missing image for camera " + cam.name);
    const Image& img = it->second;
    require(img.channels == 3, "stitch: image for camera " + cam.name + " is not RGB");
    require(img.width == cam.width && img.height == cam.height,
            "stitch: image for camera " + cam.name + " is " + std::to_string(img.width) + "x" +
                std::to_string(img.height) + ", rig declares " + std::to_string(cam.width) + "x" +
                std::to_string(cam.height));
  }
}

Image stitch(const std::map<int, Image>& images, const RemapTable& table, int jobs) {
  require(table.height >= 1 && table.width >= 1, "stitch: empty remap table");
  for (const auto& e : table.entries) {
    if (!e.valid()) continue;
    const auto it = images.find(e.camera_id);
    if (it == images.end()) throw ValidationError("stitch: no image for camera id " + std::to_string(e.camera_id));
    require(it->second.channels == 3, "stitch: source images must be RGB");
    require(e.src_u >= 0.0f && e.src_u < it->second.width && e.src_v >= 0.0f && e.src_v < it->second.height,
            "stitch: remap entry outside camera " + std::to_string(e.camera_id) + " bounds");
  }

  Image pano(table.width, table.height, 3, 0);
  parallel_for(static_cast<std::size_t>(table.height), jobs, [&](std::size_t r0, std::size_t r1) {
    double rgb[3];
    for (auto row = static_cast<int>(r0); row < static_cast<int>(r1); ++row) {
      for (int col = 0; col < table.width; ++col) {
        const RemapEntry& e = table.at(row, col);
        if (!e.valid()) continue;
        sample_bilinear(images.at(e.camera_id), e.src_u, e.src_v, rgb);
        for (int c = 0; c < 3; ++c) {
          pano.at(row, col, c) = static_cast<std::uint8_t>(std::clamp(std::lround(rgb[c]), 0L, 255L));
        }
      }
    }
  });
  return pano;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}

constexpr std::size_t kHeaderBytes = 16;
constexpr std::size_t kRecordBytes = 10;

}  // namespace

std::vector<std::uint8_t> serialize_remap(const RemapTable& table) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + table.entries.size() * kRecordBytes);
  out.insert(out.end(), {'O', 'B', 'R', 'M'});
  put_u32(out, kRemapVersion);
  put_u32(out, static_cast<std::uint32_t>(table.height));
  put_u32(out, static_cast<std::uint32_t>(table.width));
  for (const auto& e : table.entries) {
    const auto id = static_cast<std::uint16_t>(e.camera_id);
    out.push_back(static_cast<std::uint8_t>(id));
    out.push_back(static_cast<std::uint8_t>(id >> 8));
    put_u32(out, std::bit_cast<std::uint32_t>(e.src_u));
    put_u32(out, std::bit_cast<std::uint32_t>(e.src_v));
  }
  return out;
}

RemapTable deserialize_remap(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderBytes) throw IoError("remap: truncated header");
  if (std::memcmp(bytes.data(), "OBRM", 4) != 0) throw IoError("remap: bad magic");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kRemapVersion) throw IoError("remap: unsupported version " + std::to_string(version));
  const std::uint32_t h = get_u32(bytes.data() + 8);
  const std::uint32_t w = get_u32(bytes.data() + 12);
  if (h == 0 || w == 0 || h > std::numeric_limits<int>::max() || w > std::numeric_limits<int>::max()) {
    throw IoError("remap: invalid dimensions");
  }
  const std::uint64_t count = std::uint64_t{h} * w;
  if (bytes.size() != kHeaderBytes + count * kRecordBytes) throw IoError("remap: truncated or oversized payload");
  RemapTable table(static_cast<int>(h), static_cast<int>(w));
  const std::uint8_t* p = bytes.data() + kHeaderBytes;
  for (auto& e : table.entries) {
    e.camera_id = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[0] | p[1] << 8));
    e.src_u = std::bit_cast<float>(get_u32(p + 2));
    e.src_v = std::bit_cast<float>(get_u32(p + 6));
    p += kRecordBytes;
  }
  return table;
}

void save_remap(const std::filesystem::path& path, const RemapTable& table) {
  const auto bytes = serialize_remap(table);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("remap: cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("remap: write failed for " + path.string());
}

RemapTable load_remap(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("remap: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_remap(bytes);
}

}  // namespace onebev
