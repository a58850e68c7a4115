#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "onebev/autograd.hpp"
#include "onebev/tensor.hpp"

namespace onebev {

struct MvtConfig {
  std::size_t emb_dims = 128;
  std::size_t layers = 4;
  std::size_t locs = 5;
  std::size_t points = 25;
  std::size_t vss_depth = 2;
  std::size_t query_h = 50;
  std::size_t query_w = 50;
  std::size_t out_h = 200;
  std::size_t out_w = 200;
  std::size_t num_classes = 6;
  std::size_t state_dim = 16;
  std::size_t input_channels = 3;
  std::size_t encoder_stride = 4;  // per stage, two stages
  std::uint64_t seed = 0;

  /// Sampling points per location.
  std::size_t samples_per_loc() const { return locs; }
  std::size_t upsample_h() const { return out_h / query_h; }
  std::size_t upsample_w() const { return out_w / query_w; }
  std::size_t feature_stride() const { return encoder_stride * encoder_stride; }
  void validate() const;

  static MvtConfig paper();
  static MvtConfig toy();
};

MvtConfig parse_mvt_config(const std::string& json_text);
MvtConfig load_mvt_config(const std::filesystem::path& path);
std::string mvt_config_to_json(const MvtConfig& cfg);

/// MVT ablation variants of `base`: (layers, depth) in {(1,1), (2,1), (4,1), (4,2), (6,2)}
/// with 5 locations and 25 points.
std::vector<MvtConfig> ablation_configs(const MvtConfig& base);

struct BevState {
  Var queries;    // Q [Hq, Wq, C]
  Var pos_embed;  // Z [Hq, Wq, C]
};

/// Q and Z drawn from normal(0, 0.02).
BevState init_state(const MvtConfig& cfg, std::uint64_t seed);

struct Projection {
  Var w;  // [in, out]
  Var b;  // [out]
};

struct VssBlock {
  Var norm_gamma;
  Var norm_beta;
  std::array<ScanParams, 4> scans;
};

struct MvtLayerParams {
  Projection offsets;      // C -> 2N, zero at init
  Projection sample_proj;  // C -> C, applied to each sample
  Projection patch;        // L * D * C -> C
  std::vector<VssBlock> vss;
};

/// Reference-point bias that places the L points of query (i, j) at
/// u = (j + 0.5) / Wq, v = (i + (l + 0.5) / L) / Hq once passed through the
/// sigmoid, laid out [Hq, Wq, 2L] so a zero weight gives exactly that grid.
Tensor reference_grid(std::size_t query_h, std::size_t query_w, std::size_t locs);

/// sigmoid(linear(Z)) as [Hq, Wq, L, 2]. The bias may be [2L] or the full
/// per-query grid [Hq, Wq, 2L].
Var reference_points(const Var& pos_embed, const Projection& proj, std::size_t locs);

/// linear(Q) as [Hq, Wq, N, 2].
Var sampling_offsets(const Var& queries, const Projection& proj, std::size_t points);

/// Samples f360 [Hf, Wf, C] at p + dp and projects every sample. Point
/// (l, k) of a query uses reference location l and offset l * D + k.
/// Returns [Hq * Wq, L, D, C].
Var gather_samples(const Var& f360, const Var& ref, const Var& offsets, const Projection& proj);

Var patch_embed(const Var& grid, const Projection& proj, std::size_t locs, std::size_t samples_per_loc);

Var vss_block(const Var& x, const VssBlock& block, const ScanOptions& options = {});

/// One layer: returns the updated queries.
Var mvt_layer(const BevState& state, const Var& ref, const Var& f360, const MvtLayerParams& params,
              const MvtConfig& cfg, const ScanOptions& options = {});

struct MvtModel {
  MvtConfig cfg;
  std::vector<Projection> encoder;  // one per stage
  BevState state;
  Projection reference;  // shared by all layers; bias is [Hq, Wq, 2L]
  std::vector<MvtLayerParams> layers;
  Projection decoder_hidden;
  Projection decoder_out;

  static MvtModel init(const MvtConfig& cfg);

  /// Name and handle of every learnable tensor, in a fixed order.
  std::vector<std::pair<std::string, Var>> named_parameters() const;
  std::vector<Var> parameters() const;
  std::size_t parameter_count() const;
  /// Reference projection, BEV queries and embeddings, and every layer.
  std::size_t mvt_parameter_count() const;
};

/// Raw image [H, W, input_channels] with H, W divisible by the feature stride
/// -> f360 [H / s, W / s, C].
Var encode(const MvtModel& model, const Var& image);
/// Queries [Hq, Wq, C] -> logits [out_h, out_w, K].
Var decode(const MvtModel& model, const Var& queries);
Var forward_features(const MvtModel& model, const Var& f360, const ScanOptions& options = {});
Var forward(const MvtModel& model, const Var& image, const ScanOptions& options = {});

/// Per-pixel argmax of logits [H, W, K].
std::vector<std::uint8_t> predict_labels(const Tensor& logits);

/// Writes `<stem>.json` (config plus parameter manifest) and `<stem>.bin`
/// (tensors in manifest order).
void save_checkpoint(const MvtModel& model, const std::filesystem::path& stem);
MvtModel load_checkpoint(const std::filesystem::path& stem);

}  // namespace onebev
