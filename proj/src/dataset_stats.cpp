#include "onebev/dataset_stats.hpp"

#include <iomanip>
#include <sstream>

#include "onebev/errors.hpp"
#include "onebev/parallel.hpp"

namespace onebev {

FrameHistogram histogram(const LabelRaster& frame) {
  FrameHistogram h{};
  for (const auto v : frame.data) ++h[v];
  return h;
}

std::vector<FrameHistogram> histograms(std::span<const LabelRaster> frames, const ClassTable& table, int jobs) {
  table.validate();
  for (const auto& f : frames) f.check_against(table);
  std::vector<FrameHistogram> out(frames.size());
  parallel_for(frames.size(), jobs, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = histogram(frames[i]);
  });
  return out;
}

namespace {

void check_query(std::span<const FrameHistogram> frames, const ClassTable& table, int class_id) {
  require(!frames.empty(), "dataset stats: no frames");
  require(table.contains(class_id), "dataset stats: unknown class " + std::to_string(class_id));
}

}  // namespace

double pixel_ratio(std::span<const FrameHistogram> frames, const ClassTable& table, int class_id) {
  check_query(frames, table, class_id);
  std::uint64_t hits = 0;
  std::uint64_t labeled = 0;
  for (const auto& h : frames) {
    hits += h[static_cast<std::size_t>(class_id)];
    for (const auto& e : table.entries) labeled += h[static_cast<std::size_t>(e.index)];
  }
  require(labeled > 0, "dataset stats: frames contain no labeled pixels");
  return static_cast<double>(hits) / static_cast<double>(labeled);
}

double pixel_ratio(std::span<const LabelRaster> frames, const ClassTable& table, int class_id) {
  const auto h = histograms(frames, table);
  return pixel_ratio(std::span<const FrameHistogram>(h), table, class_id);
}

double presence_ratio(std::span<const FrameHistogram> frames, const ClassTable& table, int class_id,
                      std::uint64_t min_pixels) {
  check_query(frames, table, class_id);
  std::size_t present = 0;
  for (const auto& h : frames)
    if (h[static_cast<std::size_t>(class_id)] >= min_pixels) ++present;
  return static_cast<double>(present) / static_cast<double>(frames.size());
}

double presence_ratio(std::span<const LabelRaster> frames, const ClassTable& table, int class_id,
                      std::uint64_t min_pixels) {
  const auto h = histograms(frames, table);
  return presence_ratio(std::span<const FrameHistogram>(h), table, class_id, min_pixels);
}

LabelRaster apply_class_merges(const LabelRaster& raster, const ClassTable& table) {
  table.validate();
  std::array<std::uint8_t, 256> lut{};
  for (int v = 0; v < 256; ++v) lut[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(v);
  for (const auto& e : table.entries)
    if (e.merged_into) lut[static_cast<std::size_t>(e.index)] = static_cast<std::uint8_t>(*e.merged_into);
  LabelRaster out = raster;
  for (auto& v : out.data) v = lut[v];
  return out;
}

std::vector<ClassStats> class_stats(std::span<const LabelRaster> frames, const ClassTable& table,
                                    std::uint64_t min_pixels, int jobs) {
  const auto h = histograms(frames, table, jobs);
  const std::span<const FrameHistogram> hs(h);
  std::vector<ClassStats> out;
  for (const auto& e : table.entries) {
    out.push_back({e.index, e.name, pixel_ratio(hs, table, e.index), presence_ratio(hs, table, e.index, min_pixels)});
  }
  return out;
}

std::string stats_csv(const std::vector<ClassStats>& stats) {
  std::ostringstream os;
  os << "class,pixel_ratio,presence_ratio\n" << std::setprecision(17);
  for (const auto& s : stats) os << s.name << ',' << s.pixel_ratio << ',' << s.presence_ratio << '\n';
  return os.str();
}

}  // namespace onebev
