#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "onebev/labels.hpp"

namespace onebev {

/// Pixel count per label value for one frame.
using FrameHistogram = std::array<std::uint64_t, 256>;

FrameHistogram histogram(const LabelRaster& frame);

/// Counts every frame; frames are validated against the table first.
std::vector<FrameHistogram> histograms(std::span<const LabelRaster> frames, const ClassTable& table, int jobs = 1);

/// Pixels of `class_id` over all frames divided by all labeled pixels over all
/// frames. Ignore pixels count toward neither.
double pixel_ratio(std::span<const FrameHistogram> frames, const ClassTable& table, int class_id);
double pixel_ratio(std::span<const LabelRaster> frames, const ClassTable& table, int class_id);

/// Fraction of frames in which `class_id` covers at least `min_pixels` pixels.
double presence_ratio(std::span<const FrameHistogram> frames, const ClassTable& table, int class_id,
                      std::uint64_t min_pixels = 2);
double presence_ratio(std::span<const LabelRaster> frames, const ClassTable& table, int class_id,
                      std::uint64_t min_pixels = 2);

/// Rewrites merged classes to their targets. Idempotent.
LabelRaster apply_class_merges(const LabelRaster& raster, const ClassTable& table);

struct ClassStats {
  int index = 0;
  std::string name;
  double pixel_ratio = 0.0;
  double presence_ratio = 0.0;
};

std::vector<ClassStats> class_stats(std::span<const LabelRaster> frames, const ClassTable& table,
                                    std::uint64_t min_pixels = 2, int jobs = 1);

/// "class,pixel_ratio,presence_ratio" header plus one row per class.
std::string stats_csv(const std::vector<ClassStats>& stats);

}  // namespace onebev
