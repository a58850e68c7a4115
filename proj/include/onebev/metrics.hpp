#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "onebev/labels.hpp"

namespace onebev {

/// Per-class intersection / union / support counts over a set of classes.
/// Pixels whose ground truth is the ignore label are skipped.
class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(std::vector<int> class_ids);

  void add(const LabelRaster& pred, const LabelRaster& gt);
  void merge(const ConfusionAccumulator& other);

  const std::vector<int>& class_ids() const { return class_ids_; }
  std::uint64_t intersection(int class_id) const { return intersection_[slot(class_id)]; }
  std::uint64_t union_count(int class_id) const { return union_[slot(class_id)]; }
  std::uint64_t support(int class_id) const { return support_[slot(class_id)]; }

  /// Empty when the class appears in neither prediction nor ground truth.
  std::optional<double> iou(int class_id) const;

  bool operator==(const ConfusionAccumulator&) const = default;

 private:
  std::size_t slot(int class_id) const;

  std::vector<int> class_ids_;
  std::array<int, 256> slot_of_{};
  std::vector<std::uint64_t> intersection_;
  std::vector<std::uint64_t> union_;
  std::vector<std::uint64_t> support_;
};

std::optional<double> iou(const LabelRaster& pred, const LabelRaster& gt, int class_id);

/// Unweighted mean of the defined per-class IoUs. Throws when none is defined.
double miou(const ConfusionAccumulator& acc);

/// "class,iou" rows (undefined classes print "nan") and a final "mIoU" row.
std::string iou_csv(const ConfusionAccumulator& acc, const ClassTable& table);

}  // namespace onebev
