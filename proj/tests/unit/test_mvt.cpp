#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "onebev/errors.hpp"
#include "onebev/kernels.hpp"
#include "onebev/mvt.hpp"

using namespace onebev;

namespace {

const std::string kDataDir = ONEBEV_DATA_DIR;

MvtConfig small_config() {
  MvtConfig c = MvtConfig::toy();
  c.emb_dims = 4;
  c.query_h = 3;
  c.query_w = 4;
  c.out_h = 6;
  c.out_w = 8;
  c.state_dim = 2;
  c.layers = 2;
  c.vss_depth = 2;
  return c;
}

void randomize(const std::vector<Var>& params, std::uint64_t seed, double sd) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  for (Var p : params)
    for (auto& v : p.mutable_value().data()) v += n(rng);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(MvtConfig, DefaultsAndValidation) {
  const MvtConfig p = MvtConfig::paper();
  EXPECT_EQ(p.emb_dims, 128u);
  EXPECT_EQ(p.layers, 4u);
  EXPECT_EQ(p.locs, 5u);
  EXPECT_EQ(p.points, 25u);
  EXPECT_EQ(p.vss_depth, 2u);
  EXPECT_EQ(p.out_h, 200u);
  EXPECT_EQ(p.num_classes, 6u);
  MvtConfig bad = p;
  bad.points = 24;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = p;
  bad.out_h = 201;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = p;
  bad.num_classes = 256;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(MvtConfig, JsonRoundTripAndBundledFiles) {
  const MvtConfig t = MvtConfig::toy();
  EXPECT_EQ(mvt_config_to_json(parse_mvt_config(mvt_config_to_json(t))), mvt_config_to_json(t));
  EXPECT_EQ(mvt_config_to_json(load_mvt_config(kDataDir + "/configs/toy.json")), mvt_config_to_json(t));
  EXPECT_EQ(mvt_config_to_json(load_mvt_config(kDataDir + "/configs/paper.json")),
            mvt_config_to_json(MvtConfig::paper()));
  EXPECT_THROW(parse_mvt_config(R"({"emb_dim": 4})"), ValidationError);
  EXPECT_THROW(parse_mvt_config(R"({"layers": "two"})"), ValidationError);
  EXPECT_THROW(load_mvt_config("/nonexistent.json"), IoError);
}

TEST(MvtConfig, AblationRows) {
  const auto rows = ablation_configs(MvtConfig::paper());
  ASSERT_EQ(rows.size(), 5u);
  const std::vector<std::pair<std::size_t, std::size_t>> want{{1, 1}, {2, 1}, {4, 1}, {4, 2}, {6, 2}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].layers, want[i].first);
    EXPECT_EQ(rows[i].vss_depth, want[i].second);
    EXPECT_EQ(rows[i].emb_dims, 128u);
    EXPECT_EQ(rows[i].points, 25u);
  }
}

TEST(Mvt, ReferenceGridThroughSigmoid) {
  const Tensor bias = reference_grid(3, 4, 2);
  const Var z = Var::constant(Tensor({3, 4, 5}, 0.7));
  const Var ref = reference_points(z, {Var::constant(Tensor({5, 4})), Var::constant(bias)}, 2);
  ASSERT_EQ(ref.shape(), (Shape{3, 4, 2, 2}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t l = 0; l < 2; ++l) {
        const double* p = ref.value().ptr() + ((i * 4 + j) * 2 + l) * 2;
        EXPECT_NEAR(p[0], (j + 0.5) / 4.0, 1e-14);
        EXPECT_NEAR(p[1], (i + (l + 0.5) / 2.0) / 3.0, 1e-14);
      }
}

TEST(Mvt, ZeroOffsetsSampleReferenceLattice) {
  // A 6x8 feature map and a 3x4 query grid with L = 2: every reference point
  // is a pixel center, so sampling returns stored features.
  std::mt19937_64 rng(1);
  const Tensor f = Tensor::randn({6, 4, 3}, rng);
  const Var ref = reference_points(Var::constant(Tensor({3, 4, 2})),
                                   {Var::constant(Tensor({2, 4})), Var::constant(reference_grid(3, 4, 2))}, 2);
  const Var offsets = Var::constant(Tensor({3, 4, 4, 2}));
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye[i * 4] = 1.0;
  const Var s = gather_samples(Var::constant(f), ref, offsets, {Var::constant(eye), Var::constant(Tensor({3}))});
  ASSERT_EQ(s.shape(), (Shape{12, 2, 2, 3}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t d = 0; d < 2; ++d)
          for (std::size_t c = 0; c < 3; ++c)
            EXPECT_NEAR(s.value()[(((i * 4 + j) * 2 + l) * 2 + d) * 3 + c], f[((2 * i + l) * 4 + j) * 3 + c], 1e-12);
}

TEST(Mvt, GatherSamplesMatchesPerPointLoop) {
  std::mt19937_64 rng(2);
  const std::size_t qh = 2, qw = 3, l = 3, c = 2;
  const Tensor f = Tensor::randn({5, 7, c}, rng);
  const Tensor ref = Tensor::uniform({qh, qw, l, 2}, rng, 0.0, 1.0);
  const Tensor off = Tensor::uniform({qh, qw, l * l, 2}, rng, -0.2, 0.2);
  const Tensor w = Tensor::randn({c, c}, rng), b = Tensor::randn({c}, rng);
  const Tensor got = gather_samples(Var::constant(f), Var::constant(ref), Var::constant(off),
                                    {Var::constant(w), Var::constant(b)})
                         .value();
  for (std::size_t q = 0; q < qh * qw; ++q)
    for (std::size_t a = 0; a < l; ++a)
      for (std::size_t k = 0; k < l; ++k) {
        const double u = ref[(q * l + a) * 2] + off[(q * l * l + a * l + k) * 2];
        const double v = ref[(q * l + a) * 2 + 1] + off[(q * l * l + a * l + k) * 2 + 1];
        const Tensor sample = kernels::bilinear_sample(f, Tensor({1, 2}, {u, v}));
        for (std::size_t o = 0; o < c; ++o) {
          double want = b[o];
          for (std::size_t i = 0; i < c; ++i) want += sample[i] * w[i * c + o];
          EXPECT_NEAR(got[((q * l + a) * l + k) * c + o], want, 1e-12);
        }
      }
}

TEST(Mvt, InitialOffsetsAreZero) {
  const MvtModel m = MvtModel::init(small_config());
  const Var off = sampling_offsets(m.state.queries, m.layers[0].offsets, m.cfg.points);
  ASSERT_EQ(off.shape(), (Shape{3, 4, 4, 2}));
  for (const double v : off.value().data()) EXPECT_EQ(v, 0.0);
  // With a zero reference weight the points sit on the grid.
  const Var ref = reference_points(m.state.pos_embed, m.reference, m.cfg.locs);
  EXPECT_NEAR(ref.value()[0], sigmoid(reference_grid(3, 4, 2)[0]), 1e-15);
}

TEST(Mvt, SilentScansReduceLayerToPatchEmbedding) {
  MvtModel m = MvtModel::init(small_config());
  randomize(m.parameters(), 3, 0.3);
  for (auto& block : m.layers[0].vss)
    for (auto& scan : block.scans) {
      scan.w_out.mutable_value().fill(0.0);
      scan.skip.mutable_value().fill(0.0);
    }
  std::mt19937_64 rng(4);
  const Var f360 = Var::constant(Tensor::randn({6, 16, 4}, rng));
  const Var ref = reference_points(m.state.pos_embed, m.reference, m.cfg.locs);
  const auto& layer = m.layers[0];
  const Var out = mvt_layer(m.state, ref, f360, layer, m.cfg);
  const Var samples =
      gather_samples(f360, ref, sampling_offsets(m.state.queries, layer.offsets, m.cfg.points), layer.sample_proj);
  const Var embedded = patch_embed(aggregate(samples, 3, 4), layer.patch, 2, 2);
  EXPECT_LE(max_abs_diff(out.value(), embedded.value()), 1e-13);
}

TEST(Mvt, LayerDependsOnScanOrderOfQueries) {
  // Swapping two BEV cells of the patch embedding changes more than those two
  // cells once the directional scans are active.
  MvtModel m = MvtModel::init(small_config());
  randomize(m.parameters(), 5, 0.3);
  std::mt19937_64 rng(6);
  const Tensor x = Tensor::randn({3, 4, 4}, rng);
  Tensor swapped = x;
  for (std::size_t c = 0; c < 4; ++c) std::swap(swapped[c], swapped[(2 * 4 + 3) * 4 + c]);
  const Tensor a = vss_block(Var::constant(x), m.layers[0].vss[0]).value();
  const Tensor b = vss_block(Var::constant(swapped), m.layers[0].vss[0]).value();
  double changed = 0;
  for (std::size_t cell = 1; cell < 11; ++cell)
    for (std::size_t c = 0; c < 4; ++c) changed = std::max(changed, std::abs(a[cell * 4 + c] - b[cell * 4 + c]));
  EXPECT_GT(changed, 1e-6);
}

TEST(Mvt, ForwardShapesAndDeterminism) {
  const MvtConfig cfg = small_config();
  const MvtModel m = MvtModel::init(cfg);
  std::mt19937_64 rng(7);
  const std::size_t fs = cfg.feature_stride();
  const Var image = Var::constant(Tensor::uniform({cfg.query_h * fs, cfg.query_w * fs * 2, 3}, rng, 0, 1));
  EXPECT_EQ(encode(m, image).shape(), (Shape{cfg.query_h, cfg.query_w * 2, cfg.emb_dims}));
  const Tensor a = forward(m, image).value();
  ASSERT_EQ(a.shape(), (Shape{cfg.out_h, cfg.out_w, cfg.num_classes}));
  EXPECT_EQ(forward(MvtModel::init(cfg), image).value(), a);
  ScanOptions seq;
  seq.algorithm = ScanAlgorithm::Sequential;
  EXPECT_LE(max_abs_diff(forward(m, image, seq).value(), a), 1e-12);
  MvtConfig other = cfg;
  other.seed = 1;
  EXPECT_NE(forward(MvtModel::init(other), image).value(), a);
  EXPECT_THROW(forward(m, Var::constant(Tensor({5, 5, 3}))), ValidationError);
}

TEST(Mvt, PredictLabelsArgmax) {
  const Tensor logits({1, 2, 3}, {0.1, 0.5, 0.2, 3.0, -1.0, 3.0});
  EXPECT_EQ(predict_labels(logits), (std::vector<std::uint8_t>{1, 0}));
}

TEST(Mvt, ParameterCounts) {
  const MvtConfig p = MvtConfig::paper();
  const MvtModel m = MvtModel::init(p);
  EXPECT_EQ(m.state.queries.value().size(), 320000u);
  const std::size_t c = p.emb_dims, l = p.locs, n = p.points, q = p.query_h * p.query_w, s = p.state_dim;
  const std::size_t reference = c * 2 * l + q * 2 * l;
  const std::size_t bev = 2 * q * c;
  const std::size_t scan = 3 * c * s + 3 * c;
  const std::size_t block = 2 * c + 4 * scan;
  const std::size_t layer = (c * 2 * n + 2 * n) + (c * c + c) + (l * l * c * c + c) + p.vss_depth * block;
  EXPECT_EQ(m.mvt_parameter_count(), reference + bev + p.layers * layer);
  const std::size_t st = p.encoder_stride * p.encoder_stride;
  const std::size_t encoder = (st * 3 * c + c) + (st * c * c + c);
  const std::size_t decoder = (c * c + c) + (c * p.num_classes + p.num_classes);
  EXPECT_EQ(m.parameter_count(), m.mvt_parameter_count() + encoder + decoder);
  std::size_t total = 0;
  for (const auto& [name, v] : m.named_parameters()) total += v.value().size();
  EXPECT_EQ(total, m.parameter_count());
}

TEST(Mvt, CheckpointRoundTrip) {
  const MvtConfig cfg = small_config();
  MvtModel m = MvtModel::init(cfg);
  randomize(m.parameters(), 8, 0.1);
  const auto stem = std::filesystem::temp_directory_path() / "onebev_ckpt_test";
  save_checkpoint(m, stem);
  const MvtModel back = load_checkpoint(stem);
  const auto a = m.named_parameters(), b = back.named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(a[i].second.value(), b[i].second.value()) << a[i].first;
  }
  std::filesystem::resize_file(stem.string() + ".bin", 100);
  EXPECT_THROW(load_checkpoint(stem), IoError);
  std::filesystem::remove(stem.string() + ".bin");
  std::filesystem::remove(stem.string() + ".json");
  EXPECT_THROW(load_checkpoint(stem), IoError);
}

TEST(Mvt, AzimuthPermutationChangesOutput) {
  MvtModel m = MvtModel::init(small_config());
  randomize(m.parameters(), 9, 0.2);
  std::mt19937_64 rng(10);
  const Tensor f = Tensor::randn({6, 16, 4}, rng);
  Tensor rolled(f.shape());
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t q = 0; q < 16; ++q)
      for (std::size_t c = 0; c < 4; ++c) rolled[(r * 16 + (q + 5) % 16) * 4 + c] = f[(r * 16 + q) * 4 + c];
  const Tensor a = forward_features(m, Var::constant(f)).value();
  const Tensor b = forward_features(m, Var::constant(rolled)).value();
  EXPECT_GT(max_abs_diff(a, b), 1e-6);
}

TEST(Mvt, ParameterCountStableAcrossRuns) {
  const MvtConfig p = MvtConfig::paper();
  MvtConfig other = p;
  other.seed = 99;
  EXPECT_EQ(MvtModel::init(p).parameter_count(), MvtModel::init(other).parameter_count());
  EXPECT_EQ(MvtModel::init(p).mvt_parameter_count(), MvtModel::init(p).mvt_parameter_count());
}
