#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../common/scan_oracle.hpp"
#include "onebev/errors.hpp"
#include "onebev/scan.hpp"

using namespace onebev;

namespace {

struct Instance {
  Tensor u, delta, a, b, c, d;
  ScanInputs inputs() const { return {u, delta, a, b, c, d}; }
};

Instance random_instance(std::mt19937_64& rng, std::size_t t, std::size_t ch, std::size_t n) {
  return {Tensor::randn({t, ch}, rng), Tensor::uniform({t, ch}, rng, 0.01, 2.0),
          Tensor::uniform({ch, n}, rng, -3.0, -0.05), Tensor::randn({t, n}, rng),
          Tensor::randn({t, n}, rng), Tensor::randn({ch}, rng)};
}

}  // namespace

TEST(ZohPhi, ValuesAndSmallArgument) {
  EXPECT_NEAR(zoh_phi(1.0), std::exp(1.0) - 1.0, 1e-15);
  EXPECT_NEAR(zoh_phi(-2.0), (std::exp(-2.0) - 1.0) / -2.0, 1e-15);
  EXPECT_DOUBLE_EQ(zoh_phi(0.0), 1.0);
  // Series 1 + z/2 + z^2/6 near zero.
  EXPECT_NEAR(zoh_phi(1e-9), 1.0 + 5e-10, 1e-15);
  for (const double z : {-1.5, -1e-4, 1e-6, 0.7}) {
    const double h = 1e-6;
    EXPECT_NEAR(zoh_phi_derivative(z), (zoh_phi(z + h) - zoh_phi(z - h)) / (2 * h), 1e-8) << z;
  }
}

TEST(SelectiveScan, SingleStepByHand) {
  // T = C = N = 1: y = c h + d u with h = (e^{delta a} - 1) / a * b * u.
  const Tensor u({1, 1}, {2.0}), delta({1, 1}, {0.5}), a({1, 1}, {-1.0}), b({1, 1}, {3.0}), c({1, 1}, {0.25}),
      d({1}, {0.1});
  const ScanResult r = selective_scan_forward({u, delta, a, b, c, d});
  const double h = (std::exp(-0.5) - 1.0) / -1.0 * 3.0 * 2.0;
  EXPECT_NEAR(r.y[0], 0.25 * h + 0.2, 1e-15);
}

TEST(SelectiveScan, MatchesOracleBothAlgorithms) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t t = 1 + rng() % 70, ch = 1 + rng() % 5, n = 1 + rng() % 6;
    const Instance in = random_instance(rng, t, ch, n);
    const Tensor want = oracle::scan(in.u, in.delta, in.a, in.b, in.c, in.d);
    for (const auto algorithm : {ScanAlgorithm::Sequential, ScanAlgorithm::Chunked}) {
      ScanOptions o;
      o.algorithm = algorithm;
      o.chunk = 1 + rng() % 9;
      EXPECT_LE(oracle::relative_error(selective_scan_forward(in.inputs(), o).y, want), 1e-12);
    }
  }
}

TEST(SelectiveScan, ChunkSizeAndJobsDoNotChangeResult) {
  std::mt19937_64 rng(3);
  const Instance in = random_instance(rng, 50, 4, 3);
  ScanOptions seq;
  seq.algorithm = ScanAlgorithm::Sequential;
  seq.keep_states = true;
  const ScanResult ref = selective_scan_forward(in.inputs(), seq);
  for (const std::size_t chunk : {1, 2, 7, 50, 64}) {
    for (const int jobs : {1, 3}) {
      ScanOptions o;
      o.chunk = chunk;
      o.jobs = jobs;
      o.keep_states = true;
      const ScanResult r = selective_scan_forward(in.inputs(), o);
      EXPECT_LE(max_abs_diff(r.y, ref.y), 1e-12);
      EXPECT_LE(max_abs_diff(r.states, ref.states), 1e-12);
    }
  }
}

TEST(SelectiveScan, CausalPrefix) {
  std::mt19937_64 rng(11);
  Instance in = random_instance(rng, 20, 2, 3);
  const Tensor before = selective_scan_forward(in.inputs()).y;
  for (std::size_t k = 10 * 2; k < in.u.size(); ++k) in.u[k] += 1.0;
  const Tensor after = selective_scan_forward(in.inputs()).y;
  for (std::size_t k = 0; k < 10 * 2; ++k) EXPECT_EQ(before[k], after[k]);
}

TEST(SelectiveScan, BackwardMatchesFiniteDifference) {
  std::mt19937_64 rng(5);
  Instance in = random_instance(rng, 6, 2, 2);
  const Tensor gy = Tensor::uniform({6, 2}, rng, -1.0, 1.0);
  ScanOptions o;
  o.keep_states = true;
  const ScanResult r = selective_scan_forward(in.inputs(), o);
  const ScanGrads g = selective_scan_backward(in.inputs(), r.states, gy);
  auto objective = [&] {
    const Tensor y = selective_scan_forward(in.inputs()).y;
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * gy[i];
    return s;
  };
  auto check = [&](Tensor& x, const Tensor& grad) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double keep = x[i], h = 1e-6;
      x[i] = keep + h;
      const double up = objective();
      x[i] = keep - h;
      const double down = objective();
      x[i] = keep;
      EXPECT_NEAR(grad[i], (up - down) / (2 * h), 1e-6);
    }
  };
  check(in.u, g.du);
  check(in.delta, g.ddelta);
  check(in.a, g.da);
  check(in.b, g.db);
  check(in.c, g.dc);
  check(in.d, g.dd);
}

TEST(SelectiveScan, RejectsNonPositiveStepAndBadShapes) {
  std::mt19937_64 rng(1);
  Instance in = random_instance(rng, 4, 2, 2);
  in.delta[3] = 0.0;
  EXPECT_THROW(selective_scan_forward(in.inputs()), ValidationError);
  Instance bad = random_instance(rng, 4, 2, 2);
  bad.b = Tensor({3, 2});
  EXPECT_THROW(selective_scan_forward(bad.inputs()), ValidationError);
}

TEST(Ss2d, MatchesDirectionalOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t h = 1 + rng() % 6, w = 1 + rng() % 6, c = 1 + rng() % 4, n = 1 + rng() % 4;
    std::array<ScanParams, 4> p;
    for (auto& d : p) d = ScanParams::init(c, n, rng, 1.0);
    const Tensor x = Tensor::randn({h, w, c}, rng);
    const Tensor got = ss2d(Var::constant(x), p).value();
    EXPECT_LE(oracle::relative_error(got, oracle::ss2d(x, p)), 1e-12);
  }
}

TEST(Ss2d, OrdersArePermutations) {
  const auto orders = ss2d_orders(3, 4);
  EXPECT_EQ(orders[2][0], 0u);
  EXPECT_EQ(orders[2][1], 4u);
  EXPECT_EQ(orders[2][2], 8u);
  EXPECT_EQ(orders[3][0], 11u);
  for (const auto& o : orders) {
    std::vector<std::size_t> sorted(o);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
  }
}
