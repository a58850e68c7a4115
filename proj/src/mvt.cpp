#include "onebev/mvt.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "onebev/errors.hpp"
#include "onebev/kernels.hpp"

namespace onebev {

using nlohmann::json;

void MvtConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    require(v >= 1, std::string("mvt config: ") + name + " must be >= 1");
  };
  positive(emb_dims, "emb_dims");
  positive(layers, "layers");
  positive(locs, "locs");
  positive(points, "points");
  positive(vss_depth, "vss_depth");
  positive(query_h, "query_h");
  positive(query_w, "query_w");
  positive(out_h, "out_h");
  positive(out_w, "out_w");
  positive(num_classes, "num_classes");
  positive(state_dim, "state_dim");
  positive(input_channels, "input_channels");
  positive(encoder_stride, "encoder_stride");
  require(points == locs * locs, "mvt config: points must equal locs^2 (locs " + std::to_string(locs) +
                                     ", points " + std::to_string(points) + ")");
  require(out_h % query_h == 0 && out_w % query_w == 0,
          "mvt config: output size must be a multiple of the query grid");
  require(num_classes <= 255, "mvt config: at most 255 classes (255 is the ignore label)");
}

MvtConfig MvtConfig::paper() { return MvtConfig{}; }

MvtConfig MvtConfig::toy() {
  MvtConfig c;
  c.emb_dims = 16;
  c.layers = 1;
  c.locs = 2;
  c.points = 4;
  c.vss_depth = 1;
  c.query_h = 8;
  c.query_w = 8;
  c.out_h = 16;
  c.out_w = 16;
  c.num_classes = 3;
  c.state_dim = 4;
  c.encoder_stride = 2;
  return c;
}

namespace {

const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys{"emb_dims", "layers",  "locs",        "points",      "vss_depth",
                                          "query_h",  "query_w", "out_h",       "out_w",       "num_classes",
                                          "state_dim", "input_channels", "encoder_stride", "seed"};
  return keys;
}

MvtConfig config_from_json(const json& j) {
  require(j.is_object(), "mvt config: expected a JSON object");
  for (const auto& [key, _] : j.items()) require(config_keys().count(key) > 0, "mvt config: unknown field '" + key + "'");
  MvtConfig c;
  auto get = [&](const char* key, std::size_t& field) {
    if (!j.contains(key)) return;
    require(j[key].is_number_integer() && j[key].get<long long>() >= 0,
            std::string("mvt config: ") + key + " must be a non-negative integer");
    field = j[key].get<std::size_t>();
  };
  get("emb_dims", c.emb_dims);
  get("layers", c.layers);
  get("locs", c.locs);
  c.points = c.locs * c.locs;
  get("points", c.points);
  get("vss_depth", c.vss_depth);
  get("query_h", c.query_h);
  get("query_w", c.query_w);
  get("out_h", c.out_h);
  get("out_w", c.out_w);
  get("num_classes", c.num_classes);
  get("state_dim", c.state_dim);
  get("input_channels", c.input_channels);
  get("encoder_stride", c.encoder_stride);
  if (j.contains("seed")) {
    require(j["seed"].is_number_unsigned(), "mvt config: seed must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  c.validate();
  return c;
}

json config_to_json(const MvtConfig& c) {
  return json{{"emb_dims", c.emb_dims},       {"layers", c.layers},
              {"locs", c.locs},               {"points", c.points},
              {"vss_depth", c.vss_depth},     {"query_h", c.query_h},
              {"query_w", c.query_w},         {"out_h", c.out_h},
              {"out_w", c.out_w},             {"num_classes", c.num_classes},
              {"state_dim", c.state_dim},     {"input_channels", c.input_channels},
              {"encoder_stride", c.encoder_stride}, {"seed", c.seed}};
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string(what) + ": " + e.what());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Projection make_projection(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {Var::parameter(Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)))),
          Var::parameter(Tensor({out}))};
}

Projection zero_projection(std::size_t in, std::size_t out) {
  return {Var::parameter(Tensor({in, out})), Var::parameter(Tensor({out}))};
}

Var apply(const Var& x, const Projection& p) { return linear(x, p.w, p.b); }

}  // namespace

MvtConfig parse_mvt_config(const std::string& json_text) { return config_from_json(parse_json(json_text, "mvt config")); }

MvtConfig load_mvt_config(const std::filesystem::path& path) { return parse_mvt_config(read_text(path)); }

std::string mvt_config_to_json(const MvtConfig& cfg) { return config_to_json(cfg).dump(2); }

std::vector<MvtConfig> ablation_configs(const MvtConfig& base) {
  // (layers, depth) of the MVT rows; dims, locs and points stay at 128 / 5 / 25.
  const std::pair<std::size_t, std::size_t> rows[] = {{1, 1}, {2, 1}, {4, 1}, {4, 2}, {6, 2}};
  std::vector<MvtConfig> out;
  for (const auto& [layers, depth] : rows) {
    MvtConfig c = base;
    c.layers = layers;
    c.vss_depth = depth;
    c.locs = 5;
    c.points = 25;
    out.push_back(c);
  }
  return out;
}

BevState init_state(const MvtConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const Shape s{cfg.query_h, cfg.query_w, cfg.emb_dims};
  BevState st;
  st.queries = Var::parameter(Tensor::randn(s, rng, 0.02));
  st.pos_embed = Var::parameter(Tensor::randn(s, rng, 0.02));
  return st;
}

Tensor reference_grid(std::size_t query_h, std::size_t query_w, std::size_t locs) {
  Tensor bias({query_h, query_w, 2 * locs});
  auto logit = [](double p) { return std::log(p / (1.0 - p)); };
  for (std::size_t i = 0; i < query_h; ++i) {
    for (std::size_t j = 0; j < query_w; ++j) {
      const double u = (static_cast<double>(j) + 0.5) / static_cast<double>(query_w);
      for (std::size_t l = 0; l < locs; ++l) {
        const double v = (static_cast<double>(i) + (static_cast<double>(l) + 0.5) / static_cast<double>(locs)) /
                         static_cast<double>(query_h);
        double* cell = bias.ptr() + ((i * query_w + j) * locs + l) * 2;
        cell[0] = logit(u);
        cell[1] = logit(v);
      }
    }
  }
  return bias;
}

Var reference_points(const Var& pos_embed, const Projection& proj, std::size_t locs) {
  require(pos_embed.value().rank() == 3, "reference_points: Z must be [Hq, Wq, C]");
  const std::size_t h = pos_embed.shape()[0], w = pos_embed.shape()[1];
  require(proj.w.shape() == Shape{pos_embed.shape()[2], 2 * locs},
          "reference_points: projection " + shape_str(proj.w.shape()) + " must map C to 2L");
  Var logits;
  if (proj.b.shape() == Shape{2 * locs}) {
    logits = linear(pos_embed, proj.w, proj.b);
  } else {
    require(proj.b.shape() == Shape{h, w, 2 * locs}, "reference_points: bias must be [2L] or [Hq, Wq, 2L]");
    logits = add(linear(pos_embed, proj.w), proj.b);
  }
  return reshape(sigmoid(logits), {h, w, locs, 2});
}

Var sampling_offsets(const Var& queries, const Projection& proj, std::size_t points) {
  require(queries.value().rank() == 3, "sampling_offsets: Q must be [Hq, Wq, C]");
  require(proj.w.shape() == Shape{queries.shape()[2], 2 * points},
          "sampling_offsets: projection " + shape_str(proj.w.shape()) + " must map C to 2N");
  return reshape(apply(queries, proj), {queries.shape()[0], queries.shape()[1], points, 2});
}

Var gather_samples(const Var& f360, const Var& ref, const Var& offsets, const Projection& proj) {
  require(ref.value().rank() == 4 && ref.shape()[3] == 2, "gather_samples: reference points must be [Hq, Wq, L, 2]");
  const std::size_t qh = ref.shape()[0], qw = ref.shape()[1], l = ref.shape()[2];
  const std::size_t d = l;
  require(offsets.shape() == Shape{qh, qw, l * d, 2},
          "gather_samples: offsets " + shape_str(offsets.shape()) + " must be [Hq, Wq, L*L, 2]");
  require(f360.value().rank() == 3, "gather_samples: f360 must be [Hf, Wf, C]");
  const std::size_t c = f360.shape()[2];
  const std::size_t q = qh * qw;

  std::vector<std::size_t> repeat(q * l * d);
  for (std::size_t i = 0; i < q * l; ++i)
    for (std::size_t k = 0; k < d; ++k) repeat[i * d + k] = i;
  const Var base = gather_rows(reshape(ref, {q * l, 2}), std::move(repeat));
  const Var coords = add(base, reshape(offsets, {q * l * d, 2}));
  const Var sampled = apply(bilinear_sample(f360, coords), proj);
  return reshape(sampled, {q, l, d, c});
}

Var patch_embed(const Var& grid, const Projection& proj, std::size_t locs, std::size_t samples_per_loc) {
  require(grid.value().rank() == 3, "patch_embed: expected [L*Hq, D*Wq, C]");
  const std::size_t h = grid.shape()[0], w = grid.shape()[1], c = grid.shape()[2];
  require(h % locs == 0 && w % samples_per_loc == 0, "patch_embed: grid " + shape_str(grid.shape()) +
                                                         " is not divisible into " + std::to_string(locs) + "x" +
                                                         std::to_string(samples_per_loc) + " patches");
  require(proj.w.shape() == Shape{locs * samples_per_loc * c, proj.w.shape().at(1)},
          "patch_embed: projection must map L*D*C inputs");
  const Var embedded = apply(patch_unfold(grid, locs, samples_per_loc), proj);
  return reshape(embedded, {h / locs, w / samples_per_loc, proj.w.shape()[1]});
}

Var vss_block(const Var& x, const VssBlock& block, const ScanOptions& options) {
  return add(x, ss2d(layer_norm(x, block.norm_gamma, block.norm_beta), block.scans, options));
}

Var mvt_layer(const BevState& state, const Var& ref, const Var& f360, const MvtLayerParams& params,
              const MvtConfig& cfg, const ScanOptions& options) {
  const Var offsets = sampling_offsets(state.queries, params.offsets, cfg.points);
  const Var samples = gather_samples(f360, ref, offsets, params.sample_proj);
  const Var grid = aggregate(samples, cfg.query_h, cfg.query_w);
  Var x = patch_embed(grid, params.patch, cfg.locs, cfg.samples_per_loc());
  for (const auto& block : params.vss) x = vss_block(x, block, options);
  return x;
}

MvtModel MvtModel::init(const MvtConfig& cfg) {
  cfg.validate();
  MvtModel m;
  m.cfg = cfg;
  std::mt19937_64 rng(cfg.seed);
  const std::size_t c = cfg.emb_dims;
  const std::size_t s = cfg.encoder_stride;
  m.encoder.push_back(make_projection(s * s * cfg.input_channels, c, rng));
  m.encoder.push_back(make_projection(s * s * c, c, rng));
  m.state = init_state(cfg, rng());
  m.reference = {Var::parameter(Tensor({c, 2 * cfg.locs})),
                 Var::parameter(reference_grid(cfg.query_h, cfg.query_w, cfg.locs))};
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    MvtLayerParams layer;
    layer.offsets = zero_projection(c, 2 * cfg.points);
    layer.sample_proj = make_projection(c, c, rng);
    layer.patch = make_projection(cfg.locs * cfg.samples_per_loc() * c, c, rng);
    for (std::size_t k = 0; k < cfg.vss_depth; ++k) {
      VssBlock block{Var::parameter(Tensor({c}, 1.0)), Var::parameter(Tensor({c})), {}};
      for (auto& scan : block.scans) scan = ScanParams::init(c, cfg.state_dim, rng);
      layer.vss.push_back(std::move(block));
    }
    m.layers.push_back(std::move(layer));
  }
  m.decoder_hidden = make_projection(c, c, rng);
  m.decoder_out = make_projection(c, cfg.num_classes, rng);
  return m;
}

std::vector<std::pair<std::string, Var>> MvtModel::named_parameters() const {
  std::vector<std::pair<std::string, Var>> out;
  auto proj = [&](const std::string& name, const Projection& p) {
    out.emplace_back(name + ".w", p.w);
    out.emplace_back(name + ".b", p.b);
  };
  for (std::size_t i = 0; i < encoder.size(); ++i) proj("encoder." + std::to_string(i), encoder[i]);
  out.emplace_back("bev.queries", state.queries);
  out.emplace_back("bev.pos_embed", state.pos_embed);
  proj("reference", reference);
  static constexpr std::array<const char*, 6> scan_names{"a_log", "w_in", "w_out", "dt_weight", "dt_bias", "skip"};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string prefix = "layer." + std::to_string(i);
    proj(prefix + ".offsets", layers[i].offsets);
    proj(prefix + ".sample_proj", layers[i].sample_proj);
    proj(prefix + ".patch", layers[i].patch);
    for (std::size_t k = 0; k < layers[i].vss.size(); ++k) {
      const auto& block = layers[i].vss[k];
      const std::string bp = prefix + ".vss." + std::to_string(k);
      out.emplace_back(bp + ".norm.gamma", block.norm_gamma);
      out.emplace_back(bp + ".norm.beta", block.norm_beta);
      for (std::size_t dir = 0; dir < 4; ++dir) {
        const auto vars = block.scans[dir].vars();
        for (std::size_t v = 0; v < vars.size(); ++v)
          out.emplace_back(bp + ".scan" + std::to_string(dir) + "." + scan_names[v], vars[v]);
      }
    }
  }
  proj("decoder.hidden", decoder_hidden);
  proj("decoder.out", decoder_out);
  return out;
}

std::vector<Var> MvtModel::parameters() const {
  std::vector<Var> out;
  for (auto& [_, v] : named_parameters()) out.push_back(v);
  return out;
}

std::size_t MvtModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : named_parameters()) n += v.value().size();
  return n;
}

std::size_t MvtModel::mvt_parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : named_parameters()) {
    if (name.starts_with("encoder.") || name.starts_with("decoder.")) continue;
    n += v.value().size();
  }
  return n;
}

Var encode(const MvtModel& model, const Var& image) {
  const MvtConfig& cfg = model.cfg;
  require(image.value().rank() == 3 && image.shape()[2] == cfg.input_channels,
          "encode: image must be [H, W, " + std::to_string(cfg.input_channels) + "], got " + shape_str(image.shape()));
  const std::size_t s = cfg.encoder_stride;
  require(image.shape()[0] % cfg.feature_stride() == 0 && image.shape()[1] % cfg.feature_stride() == 0,
          "encode: image size " + shape_str(image.shape()) + " must be divisible by " +
              std::to_string(cfg.feature_stride()));
  Var x = image;
  for (const auto& stage : model.encoder) {
    const std::size_t h = x.shape()[0] / s, w = x.shape()[1] / s;
    x = reshape(silu(apply(patch_unfold(x, s, s), stage)), {h, w, cfg.emb_dims});
  }
  return x;
}

Var decode(const MvtModel& model, const Var& queries) {
  const MvtConfig& cfg = model.cfg;
  const Var hidden = silu(apply(queries, model.decoder_hidden));
  const Var up = upsample_nearest(hidden, cfg.upsample_h(), cfg.upsample_w());
  return apply(up, model.decoder_out);
}

Var forward_features(const MvtModel& model, const Var& f360, const ScanOptions& options) {
  const MvtConfig& cfg = model.cfg;
  require(f360.value().rank() == 3 && f360.shape()[2] == cfg.emb_dims,
          "forward: features must be [Hf, Wf, " + std::to_string(cfg.emb_dims) + "], got " + shape_str(f360.shape()));
  const Var ref = reference_points(model.state.pos_embed, model.reference, cfg.locs);
  BevState st = model.state;
  for (const auto& layer : model.layers) st.queries = mvt_layer(st, ref, f360, layer, cfg, options);
  return decode(model, st.queries);
}

Var forward(const MvtModel& model, const Var& image, const ScanOptions& options) {
  return forward_features(model, encode(model, image), options);
}

std::vector<std::uint8_t> predict_labels(const Tensor& logits) {
  require(logits.rank() == 3, "predict_labels: expected [H, W, K]");
  const std::size_t k = logits.dim(2);
  std::vector<std::uint8_t> out(logits.size() / k);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* row = logits.ptr() + i * k;
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (row[j] > row[best]) best = j;
    out[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

void save_checkpoint(const MvtModel& model, const std::filesystem::path& stem) {
  json manifest{{"config", config_to_json(model.cfg)}, {"parameters", json::array()}};
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw IoError("cannot write " + bin.string());
  for (const auto& [name, v] : model.named_parameters()) {
    manifest["parameters"].push_back({{"name", name}, {"shape", v.shape()}});
    write_tensor(out, v.value());
  }
  if (!out) throw IoError("write failed: " + bin.string());
  std::filesystem::path meta = stem;
  meta += ".json";
  std::ofstream mout(meta);
  if (!mout) throw IoError("cannot write " + meta.string());
  mout << manifest.dump(2) << "\n";
}

MvtModel load_checkpoint(const std::filesystem::path& stem) {
  std::filesystem::path meta = stem;
  meta += ".json";
  const json manifest = parse_json(read_text(meta), "checkpoint manifest");
  require(manifest.contains("config") && manifest.contains("parameters"), "checkpoint: manifest is incomplete");
  MvtModel model = MvtModel::init(config_from_json(manifest["config"]));
  const auto params = model.named_parameters();
  require(manifest["parameters"].size() == params.size(), "checkpoint: parameter count does not match config");

  std::filesystem::path bin = stem;
  bin += ".bin";
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw IoError("cannot open " + bin.string());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = manifest["parameters"][i];
    const auto& [name, var] = params[i];
    require(entry.value("name", "") == name, "checkpoint: expected parameter " + name);
    Tensor t = read_tensor(in);
    require(t.shape() == var.shape(), "checkpoint: " + name + " has shape " + shape_str(t.shape()));
    Var handle = var;
    handle.mutable_value() = std::move(t);
  }
  return model;
}

}  // namespace onebev
