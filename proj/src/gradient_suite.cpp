#include "onebev/gradient_suite.hpp"

#include <random>

#include "onebev/mvt.hpp"

namespace onebev {

namespace {

class Suite {
 public:
  Suite(std::uint64_t seed, double eps) : rng_(seed), eps_(eps) {}

  std::size_t dim(bool unit) { return unit ? 1 : std::uniform_int_distribution<std::size_t>(2, 4)(rng_); }
  Tensor randn(Shape s, double sd = 1.0) { return Tensor::randn(std::move(s), rng_, sd); }
  Tensor uniform(Shape s, double lo, double hi) { return Tensor::uniform(std::move(s), rng_, lo, hi); }

  void check(std::string name, const DiffFn& fn, std::vector<Tensor> inputs) {
    results_.push_back({std::move(name), grad_check(fn, inputs, eps_, rng_())});
  }

  void check_params(std::string name, const std::function<Var()>& loss, std::vector<Var> params) {
    results_.push_back({std::move(name), grad_check_params(loss, params, eps_)});
  }

  std::mt19937_64& rng() { return rng_; }
  void add(NamedCheck c) { results_.push_back(std::move(c)); }
  std::vector<NamedCheck> take() { return std::move(results_); }

 private:
  std::mt19937_64 rng_;
  double eps_;
  std::vector<NamedCheck> results_;
};

// Samples strictly inside the clamped height range, with some u outside
// [0, 1] so the azimuth wrap is exercised.
Tensor sample_coords(Suite& s, std::size_t m, std::size_t h) {
  Tensor c({m, 2});
  const double margin = 0.6 / static_cast<double>(h);
  std::uniform_real_distribution<double> u(-0.3, 1.3), v(margin, 1.0 - margin);
  for (std::size_t i = 0; i < m; ++i) {
    c[2 * i] = u(s.rng());
    c[2 * i + 1] = h == 1 ? 0.5 : v(s.rng());
  }
  return c;
}

void jitter(const std::vector<Var>& params, std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  for (Var p : params)
    for (auto& v : p.mutable_value().data()) v += n(rng);
}

MvtConfig desk_config(std::size_t depth) {
  MvtConfig c;
  c.emb_dims = 3;
  c.layers = 1;
  c.locs = 2;
  c.points = 4;
  c.vss_depth = depth;
  c.query_h = 2;
  c.query_w = 1;
  c.out_h = 2;
  c.out_w = 2;
  c.num_classes = 3;
  c.state_dim = 2;
  c.encoder_stride = 2;
  return c;
}

}  // namespace

std::vector<NamedCheck> model_gradient_checks(const MvtConfig& config, std::uint64_t seed, double eps) {
  config.validate();
  Suite s(seed, eps);
  MvtModel model = MvtModel::init(config);
  const MvtConfig& cfg = model.cfg;
  jitter(model.parameters(), s.rng(), 0.2);
  const Var f360 = Var::parameter(s.randn({3, 5, cfg.emb_dims}));
  const Tensor weights = s.uniform({cfg.query_h, cfg.query_w, cfg.emb_dims}, -1.0, 1.0);

  std::vector<Var> params{model.state.queries, model.state.pos_embed, model.reference.w, model.reference.b, f360};
  const auto& layer = model.layers[0];
  for (const Projection* p : {&layer.offsets, &layer.sample_proj, &layer.patch}) {
    params.push_back(p->w);
    params.push_back(p->b);
  }
  for (const auto& block : layer.vss) {
    params.push_back(block.norm_gamma);
    params.push_back(block.norm_beta);
    for (const auto& scan : block.scans)
      for (const auto& v : scan.vars()) params.push_back(v);
  }
  s.check_params("mvt_layer",
                 [&] {
                   const Var ref = reference_points(model.state.pos_embed, model.reference, cfg.locs);
                   return weighted_sum(mvt_layer(model.state, ref, f360, layer, cfg), weights);
                 },
                 params);

  const std::size_t fs = cfg.feature_stride();
  const Tensor image = s.uniform({cfg.query_h * fs, cfg.query_w * fs * 2, cfg.input_channels}, 0.0, 1.0);
  std::vector<int> targets;
  for (std::size_t i = 0; i < cfg.out_h * cfg.out_w; ++i) targets.push_back(static_cast<int>(i % cfg.num_classes));
  const std::vector<double> alpha(cfg.num_classes, 1.0);
  s.check_params("model",
                 [&] {
                   const Var logits = forward(model, Var::constant(image));
                   return focal_loss(reshape(logits, {cfg.out_h * cfg.out_w, cfg.num_classes}), targets, 2.0, alpha);
                 },
                 model.parameters());
  return s.take();
}

std::vector<NamedCheck> run_gradient_suite(std::uint64_t seed, double eps) {
  Suite s(seed, eps);

  for (const bool unit : {true, false}) {
    const std::string tag = unit ? "/unit" : "/random";
    const std::size_t r = s.dim(unit), c = s.dim(unit), o = s.dim(unit);

    s.check("add" + tag, [](std::span<const Var> v) { return add(v[0], v[1]); }, {s.randn({r, c}), s.randn({r, c})});
    s.check("mul" + tag, [](std::span<const Var> v) { return mul(v[0], v[1]); }, {s.randn({r, c}), s.randn({r, c})});
    s.check("scale" + tag, [](std::span<const Var> v) { return scale(v[0], -1.7); }, {s.randn({r, c})});
    s.check("reshape" + tag, [r, c](std::span<const Var> v) { return mul(reshape(v[0], {c, r}), v[1]); },
            {s.randn({r, c}), s.randn({c, r})});
    s.check("channel_affine" + tag, [](std::span<const Var> v) { return channel_affine(v[0], v[1], v[2]); },
            {s.randn({r, o, c}), s.randn({c}), s.randn({c})});
    s.check("linear" + tag, [](std::span<const Var> v) { return linear(v[0], v[1], v[2]); },
            {s.randn({r, c}), s.randn({c, o}), s.randn({o})});
    s.check("linear_nobias" + tag, [](std::span<const Var> v) { return linear(v[0], v[1]); },
            {s.randn({r, o, c}), s.randn({c, o})});
    s.check("sigmoid" + tag, [](std::span<const Var> v) { return sigmoid(v[0]); }, {s.randn({r, c}, 3.0)});
    s.check("silu" + tag, [](std::span<const Var> v) { return silu(v[0]); }, {s.randn({r, c}, 3.0)});
    s.check("softplus" + tag, [](std::span<const Var> v) { return softplus(v[0]); }, {s.randn({r, c}, 3.0)});
    s.check("neg_exp" + tag, [](std::span<const Var> v) { return neg_exp(v[0]); }, {s.randn({r, c})});
    s.check("layer_norm" + tag, [](std::span<const Var> v) { return layer_norm(v[0], v[1], v[2]); },
            {s.randn({r, o, c + 1}), s.randn({c + 1}), s.randn({c + 1})});
    s.check("sum" + tag, [](std::span<const Var> v) { return sum(mul(v[0], v[0])); }, {s.randn({r, c})});

    {
      const std::size_t h = s.dim(unit), w = s.dim(unit), m = s.dim(unit) + 2;
      const Tensor coords = sample_coords(s, m, h);
      s.check("bilinear_sample" + tag, [](std::span<const Var> v) { return bilinear_sample(v[0], v[1]); },
              {s.randn({h, w, c}), coords});
    }

    {
      std::vector<std::size_t> index;
      for (std::size_t i = 0; i < r + 2; ++i) index.push_back((i * 7 + 1) % r);
      s.check("gather_rows" + tag, [index](std::span<const Var> v) { return gather_rows(v[0], index); },
              {s.randn({r, c})});
    }

    {
      const std::size_t qh = s.dim(unit), qw = s.dim(unit), l = s.dim(unit);
      s.check("aggregate" + tag, [qh, qw](std::span<const Var> v) { return aggregate(v[0], qh, qw); },
              {s.randn({qh * qw, l, l, c})});
      s.check("patch_unfold" + tag, [l](std::span<const Var> v) { return patch_unfold(v[0], l, l + 1); },
              {s.randn({l * r, (l + 1) * o, c})});
      s.check("upsample_nearest" + tag, [l](std::span<const Var> v) { return upsample_nearest(v[0], l, 2); },
              {s.randn({r, o, c})});
    }

    {
      const std::size_t k = c + 1;
      std::vector<int> targets;
      for (std::size_t i = 0; i < r + 1; ++i) targets.push_back(static_cast<int>(i % k));
      targets.back() = 255;
      std::vector<double> alpha;
      for (std::size_t i = 0; i < k; ++i) alpha.push_back(0.5 + 0.25 * static_cast<double>(i));
      s.check("focal_loss" + tag,
              [targets, alpha](std::span<const Var> v) { return focal_loss(v[0], targets, 2.0, alpha); },
              {s.randn({r + 1, k}, 2.0)});
      s.check("focal_loss_gamma0" + tag,
              [targets, alpha](std::span<const Var> v) { return focal_loss(v[0], targets, 0.0, alpha); },
              {s.randn({r + 1, k}, 2.0)});
    }

    {
      const std::size_t t = s.dim(unit) + (unit ? 0 : 3), n = s.dim(unit);
      for (const auto algorithm : {ScanAlgorithm::Sequential, ScanAlgorithm::Chunked}) {
        ScanOptions opts;
        opts.algorithm = algorithm;
        opts.chunk = 2;
        const std::string name = algorithm == ScanAlgorithm::Sequential ? "scan_core_seq" : "scan_core_chunked";
        s.check(name + tag,
                [opts](std::span<const Var> v) { return selective_scan_core(v[0], v[1], v[2], v[3], v[4], v[5], opts); },
                {s.randn({t, c}), s.uniform({t, c}, 0.05, 1.5), s.uniform({c, n}, -2.0, -0.1), s.randn({t, n}),
                 s.randn({t, n}), s.randn({c})});
      }

      ScanParams p = ScanParams::init(c, n, s.rng(), 1.0);
      jitter(p.vars(), s.rng(), 0.3);
      const Var x = Var::parameter(s.randn({t, c}));
      const Tensor weights = s.uniform({t, c}, -1.0, 1.0);
      auto params = p.vars();
      params.push_back(x);
      s.check_params("selective_scan" + tag, [&] { return weighted_sum(selective_scan(x, p), weights); }, params);

      const std::size_t h = s.dim(unit), w = s.dim(unit) + 1;
      std::array<ScanParams, 4> dirs;
      std::vector<Var> all;
      for (auto& d : dirs) {
        d = ScanParams::init(c, n, s.rng(), 1.0);
        jitter(d.vars(), s.rng(), 0.3);
        for (const auto& v : d.vars()) all.push_back(v);
      }
      const Var grid = Var::parameter(s.randn({h, w, c}));
      all.push_back(grid);
      const Tensor gw = s.uniform({h, w, c}, -1.0, 1.0);
      s.check_params("ss2d" + tag, [&] { return weighted_sum(ss2d(grid, dirs), gw); }, all);
    }
  }

  for (const std::size_t depth : {std::size_t{1}, std::size_t{2}}) {
    MvtConfig cfg = desk_config(depth);
    cfg.seed = s.rng()();
    for (auto& r : model_gradient_checks(cfg, s.rng()(), eps)) {
      r.name += "/depth" + std::to_string(depth);
      s.add(std::move(r));
    }
  }
  return s.take();
}

}  // namespace onebev
