#include "onebev/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "onebev/errors.hpp"
#include "onebev/metrics.hpp"

namespace onebev {

double LrSchedule::at(std::size_t step) const {
  if (step < warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (step >= total_steps) return min_lr;
  const double span = static_cast<double>(total_steps - warmup_steps);
  const double progress = static_cast<double>(step - warmup_steps) / span;
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(std::vector<Var> params, double beta1, double beta2, double eps, double weight_decay)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor& g = params_[i].grad();
    Tensor& w = params_[i].mutable_value();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g[k];
      v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g[k] * g[k];
      const double mhat = m_[i][k] / c1;
      const double vhat = v_[i][k] / c2;
      w[k] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * w[k]);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::vector<ToySample> make_toy_dataset(const MvtConfig& cfg, std::size_t count, std::uint64_t seed,
                                        std::size_t width_factor) {
  cfg.validate();
  require(width_factor >= 1, "toy dataset: width_factor must be >= 1");
  const std::size_t k = cfg.num_classes;
  const std::size_t fs = cfg.feature_stride();
  const std::size_t cell_h = fs, cell_w = fs * width_factor;
  const std::size_t img_h = cfg.query_h * cell_h, img_w = cfg.query_w * cell_w;
  const std::size_t ch = cfg.input_channels;

  std::mt19937_64 rng(seed);
  // A fixed random colour per class.
  std::vector<std::vector<double>> palette(k, std::vector<double>(ch));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& colour : palette)
    for (auto& c : colour) c = unit(rng);
  std::normal_distribution<double> noise(0.0, 0.03);

  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };

  std::vector<ToySample> out;
  for (std::size_t s = 0; s < count; ++s) {
    std::vector<std::uint8_t> coarse(cfg.query_h * cfg.query_w, 0);
    for (std::size_t cls = 1; cls < k; ++cls) {
      const bool stripe = cls % 2 == 0;
      if (stripe) {
        const std::size_t col = pick(0, cfg.query_w - 1);
        const std::size_t width = pick(1, std::max<std::size_t>(1, cfg.query_w / 4));
        for (std::size_t i = 0; i < cfg.query_h; ++i)
          for (std::size_t j = col; j < std::min(cfg.query_w, col + width); ++j)
            coarse[i * cfg.query_w + j] = static_cast<std::uint8_t>(cls);
      } else {
        const std::size_t h = pick(1, std::max<std::size_t>(1, cfg.query_h / 2));
        const std::size_t w = pick(1, std::max<std::size_t>(1, cfg.query_w / 2));
        const std::size_t r0 = pick(0, cfg.query_h - h), c0 = pick(0, cfg.query_w - w);
        for (std::size_t i = r0; i < r0 + h; ++i)
          for (std::size_t j = c0; j < c0 + w; ++j) coarse[i * cfg.query_w + j] = static_cast<std::uint8_t>(cls);
      }
    }

    ToySample sample{Tensor({img_h, img_w, ch}), LabelRaster(static_cast<int>(cfg.out_w), static_cast<int>(cfg.out_h))};
    for (std::size_t y = 0; y < img_h; ++y) {
      for (std::size_t x = 0; x < img_w; ++x) {
        const auto& colour = palette[coarse[(y / cell_h) * cfg.query_w + x / cell_w]];
        for (std::size_t c = 0; c < ch; ++c) sample.image[(y * img_w + x) * ch + c] = colour[c] + noise(rng);
      }
    }
    const std::size_t uh = cfg.upsample_h(), uw = cfg.upsample_w();
    for (std::size_t y = 0; y < cfg.out_h; ++y)
      for (std::size_t x = 0; x < cfg.out_w; ++x)
        sample.label.at(static_cast<int>(y), static_cast<int>(x)) = coarse[(y / uh) * cfg.query_w + x / uw];
    out.push_back(std::move(sample));
  }
  return out;
}

namespace {

std::vector<int> class_ids(std::size_t k) {
  std::vector<int> ids(k);
  for (std::size_t i = 0; i < k; ++i) ids[i] = static_cast<int>(i);
  return ids;
}

}  // namespace

double evaluate_miou(const MvtModel& model, const std::vector<ToySample>& data) {
  const NoGradGuard no_grad;
  ConfusionAccumulator acc(class_ids(model.cfg.num_classes));
  for (const auto& s : data) {
    const Tensor logits = forward(model, Var::constant(s.image)).value();
    const LabelRaster pred(static_cast<int>(model.cfg.out_w), static_cast<int>(model.cfg.out_h), predict_labels(logits));
    acc.add(pred, s.label);
  }
  return miou(acc);
}

TrainReport train_toy(MvtModel& model, const std::vector<ToySample>& data, const TrainOptions& options) {
  require(!data.empty(), "train: empty dataset");
  require(options.steps >= 1, "train: steps must be >= 1");
  const std::size_t k = model.cfg.num_classes;
  const std::vector<double> alpha(k, 1.0);
  AdamW opt(model.parameters(), 0.9, 0.999, 1e-8, options.weight_decay);
  const double inv_n = 1.0 / static_cast<double>(data.size());

  TrainReport report;
  for (std::size_t step = 0; step < options.steps; ++step) {
    opt.zero_grad();
    Var total;
    for (const auto& s : data) {
      const Var logits = forward(model, Var::constant(s.image));
      const Var flat = reshape(logits, {model.cfg.out_h * model.cfg.out_w, k});
      std::vector<int> targets(s.label.data.begin(), s.label.data.end());
      const Var loss = scale(focal_loss(flat, std::move(targets), options.focal_gamma, alpha), inv_n);
      total = total.defined() ? add(total, loss) : loss;
    }
    const double value = total.value()[0];
    if (!std::isfinite(value))
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) + " (lr " +
                               std::to_string(options.schedule.at(step)) + ")");
    report.losses.push_back(value);
    backward(total);
    opt.step(options.schedule.at(step));
  }
  report.final_miou = evaluate_miou(model, data);
  return report;
}

}  // namespace onebev
