#pragma once

#include <cstdint>
#include <vector>

#include "onebev/labels.hpp"
#include "onebev/mvt.hpp"

namespace onebev {

/// Linear warm-up from 0 to base_lr over warmup_steps, then cosine decay to
/// min_lr at total_steps.
struct LrSchedule {
  double base_lr = 5e-3;
  std::size_t warmup_steps = 25;
  std::size_t total_steps = 500;
  double min_lr = 0.0;

  double at(std::size_t step) const;
};

/// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(std::vector<Var> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
        double weight_decay = 0.01);
  void step(double lr);
  void zero_grad();

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  double beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
};

struct ToySample {
  Tensor image;                      // [H, W, input_channels]
  LabelRaster label;                 // out_w x out_h
};

/// Synthetic panorama/BEV pairs. Each sample draws a coarse label map on the
/// query grid (background, a rectangle, a stripe); image region (i, j) of the
/// panorama is filled with a noisy class colour for query cell (i, j), and the
/// label is the coarse map upsampled to the output size. The panorama is
/// `width_factor` times wider per query cell than it is tall.
std::vector<ToySample> make_toy_dataset(const MvtConfig& cfg, std::size_t count, std::uint64_t seed,
                                        std::size_t width_factor = 8);

struct TrainOptions {
  std::size_t steps = 500;
  LrSchedule schedule{};
  double focal_gamma = 2.0;
  double weight_decay = 0.01;
};

struct TrainReport {
  std::vector<double> losses;  // one per step, before the update
  double final_miou = 0.0;
};

/// Full-batch training on `data`; throws std::runtime_error when the loss
/// turns non-finite.
TrainReport train_toy(MvtModel& model, const std::vector<ToySample>& data, const TrainOptions& options);

/// mIoU of the model's predictions over `data` across all classes.
double evaluate_miou(const MvtModel& model, const std::vector<ToySample>& data);

}  // namespace onebev
