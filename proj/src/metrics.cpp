#include "onebev/metrics.hpp"

#include <iomanip>
#include <sstream>

#include "onebev/errors.hpp"

namespace onebev {

ConfusionAccumulator::ConfusionAccumulator(std::vector<int> class_ids)
    : class_ids_(std::move(class_ids)),
      intersection_(class_ids_.size()),
      union_(class_ids_.size()),
      support_(class_ids_.size()) {
  require(!class_ids_.empty(), "metrics: no classes");
  slot_of_.fill(-1);
  for (std::size_t i = 0; i < class_ids_.size(); ++i) {
    const int c = class_ids_[i];
    require(c >= 0 && c < kIgnoreLabel, "metrics: class id out of range");
    require(slot_of_[static_cast<std::size_t>(c)] < 0, "metrics: duplicate class id " + std::to_string(c));
    slot_of_[static_cast<std::size_t>(c)] = static_cast<int>(i);
  }
}

std::size_t ConfusionAccumulator::slot(int class_id) const {
  require(class_id >= 0 && class_id < 256 && slot_of_[static_cast<std::size_t>(class_id)] >= 0,
          "metrics: unknown class " + std::to_string(class_id));
  return static_cast<std::size_t>(slot_of_[static_cast<std::size_t>(class_id)]);
}

void ConfusionAccumulator::add(const LabelRaster& pred, const LabelRaster& gt) {
  require(pred.width == gt.width && pred.height == gt.height,
          "metrics: prediction is " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
              " but ground truth is " + std::to_string(gt.width) + "x" + std::to_string(gt.height));
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const std::uint8_t g = gt.data[i];
    if (g == kIgnoreLabel) continue;
    const std::uint8_t p = pred.data[i];
    const int gs = slot_of_[g];
    require(gs >= 0, "metrics: ground-truth value " + std::to_string(g) + " is not an evaluated class");
    const int ps = p == kIgnoreLabel ? -1 : slot_of_[p];
    require(p == kIgnoreLabel || ps >= 0, "metrics: predicted value " + std::to_string(p) + " is not an evaluated class");
    ++support_[static_cast<std::size_t>(gs)];
    ++union_[static_cast<std::size_t>(gs)];
    if (ps == gs) {
      ++intersection_[static_cast<std::size_t>(gs)];
    } else if (ps >= 0) {
      ++union_[static_cast<std::size_t>(ps)];
    }
  }
}

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
  require(other.class_ids_ == class_ids_, "metrics: cannot merge accumulators over different classes");
  for (std::size_t i = 0; i < class_ids_.size(); ++i) {
    intersection_[i] += other.intersection_[i];
    union_[i] += other.union_[i];
    support_[i] += other.support_[i];
  }
}

std::optional<double> ConfusionAccumulator::iou(int class_id) const {
  const std::size_t s = slot(class_id);
  if (union_[s] == 0) return std::nullopt;
  return static_cast<double>(intersection_[s]) / static_cast<double>(union_[s]);
}

std::optional<double> iou(const LabelRaster& pred, const LabelRaster& gt, int class_id) {
  require(pred.width == gt.width && pred.height == gt.height, "iou: dimension mismatch");
  std::uint64_t inter = 0;
  std::uint64_t uni = 0;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    if (gt.data[i] == kIgnoreLabel) continue;
    const bool p = pred.data[i] == class_id;
    const bool g = gt.data[i] == class_id;
    inter += p && g;
    uni += p || g;
  }
  if (uni == 0) return std::nullopt;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double miou(const ConfusionAccumulator& acc) {
  double sum = 0.0;
  int defined = 0;
  for (const int c : acc.class_ids()) {
    if (const auto v = acc.iou(c)) {
      sum += *v;
      ++defined;
    }
  }
  require(defined > 0, "miou: no class has a defined IoU");
  return sum / defined;
}

std::string iou_csv(const ConfusionAccumulator& acc, const ClassTable& table) {
  std::ostringstream os;
  os << "class,iou\n" << std::setprecision(17);
  for (const int c : acc.class_ids()) {
    const auto v = acc.iou(c);
    os << (table.contains(c) ? table.entry(c).name : std::to_string(c)) << ',';
    if (v) {
      os << *v;
    } else {
      os << "nan";
    }
    os << '\n';
  }
  os << "mIoU," << miou(acc) << '\n';
  return os.str();
}

}  // namespace onebev
