#include "onebev/scan.hpp"

#include <cmath>
#include <vector>

#include "onebev/errors.hpp"
#include "onebev/parallel.hpp"

namespace onebev {

double zoh_phi(double z) {
  if (std::abs(z) < 1e-5) return 1.0 + z / 2.0 + z * z / 6.0;
  return std::expm1(z) / z;
}

double zoh_phi_derivative(double z) {
  if (std::abs(z) < 1e-3) return 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0;
  return (z * std::exp(z) - std::expm1(z)) / (z * z);
}

void ScanInputs::validate() const {
  require(u.rank() == 2 && u.dim(0) >= 1 && u.dim(1) >= 1, "selective_scan: u must be [T, C] with T, C >= 1");
  const std::size_t t = u.dim(0);
  const std::size_t ch = u.dim(1);
  require(delta.shape() == u.shape(), "selective_scan: delta must match u " + shape_str(u.shape()));
  require(a.rank() == 2 && a.dim(0) == ch && a.dim(1) >= 1, "selective_scan: a must be [C, N]");
  const std::size_t n = a.dim(1);
  require(b.shape() == Shape{t, n}, "selective_scan: b must be [T, N]");
  require(c.shape() == Shape{t, n}, "selective_scan: c must be [T, N]");
  require(d.shape() == Shape{ch}, "selective_scan: d must be [C]");
  for (const double v : delta.data()) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("selective_scan: non-positive step size");
  }
}

namespace {

// Discretized coefficients for one (t, c, n) triple.
struct Step {
  double decay;  // exp(delta a)
  double gain;   // delta phi(delta a)
};

inline Step discretize(double delta, double a) {
  const double z = delta * a;
  return {std::exp(z), delta * zoh_phi(z)};
}

}  // namespace

ScanResult selective_scan_forward(const ScanInputs& in, const ScanOptions& options) {
  in.validate();
  const std::size_t T = in.steps();
  const std::size_t C = in.channels();
  const std::size_t N = in.state_dim();
  ScanResult result{Tensor({T, C}), options.keep_states ? Tensor({T, C, N}) : Tensor()};
  double* y = result.y.ptr();

  if (options.algorithm == ScanAlgorithm::Sequential) {
    std::vector<double> h(C * N, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t c = 0; c < C; ++c) {
        const double u = in.u[t * C + c];
        const double dt = in.delta[t * C + c];
        double acc = in.d[c] * u;
        for (std::size_t n = 0; n < N; ++n) {
          const Step s = discretize(dt, in.a[c * N + n]);
          double& hv = h[c * N + n];
          hv = s.decay * hv + s.gain * in.b[t * N + n] * u;
          acc += in.c[t * N + n] * hv;
        }
        y[t * C + c] = acc;
      }
      if (options.keep_states) std::copy(h.begin(), h.end(), result.states.ptr() + t * C * N);
    }
    return result;
  }

  // Chunked: each chunk scans from a zero state while tracking the running
  // product of decays; a carry pass then injects each chunk's entry state.
  const std::size_t chunk = options.chunk == 0 ? T : options.chunk;
  const std::size_t chunks = (T + chunk - 1) / chunk;
  std::vector<double> local(T * C * N);
  std::vector<double> decay_prod(T * C * N);
  parallel_for(chunks, options.jobs, [&](std::size_t k0, std::size_t k1) {
    for (std::size_t k = k0; k < k1; ++k) {
      const std::size_t s = k * chunk;
      const std::size_t e = std::min(T, s + chunk);
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t n = 0; n < N; ++n) {
          double h = 0.0;
          double p = 1.0;
          for (std::size_t t = s; t < e; ++t) {
            const Step st = discretize(in.delta[t * C + c], in.a[c * N + n]);
            h = st.decay * h + st.gain * in.b[t * N + n] * in.u[t * C + c];
            p *= st.decay;
            local[(t * C + c) * N + n] = h;
            decay_prod[(t * C + c) * N + n] = p;
          }
        }
      }
    }
  });

  std::vector<double> entry(chunks * C * N, 0.0);
  for (std::size_t k = 1; k < chunks; ++k) {
    const std::size_t last = k * chunk - 1;
    for (std::size_t i = 0; i < C * N; ++i) {
      entry[k * C * N + i] = local[last * C * N + i] + decay_prod[last * C * N + i] * entry[(k - 1) * C * N + i];
    }
  }

  parallel_for(chunks, options.jobs, [&](std::size_t k0, std::size_t k1) {
    for (std::size_t k = k0; k < k1; ++k) {
      const std::size_t s = k * chunk;
      const std::size_t e = std::min(T, s + chunk);
      for (std::size_t t = s; t < e; ++t) {
        for (std::size_t c = 0; c < C; ++c) {
          double acc = in.d[c] * in.u[t * C + c];
          for (std::size_t n = 0; n < N; ++n) {
            const std::size_t i = (t * C + c) * N + n;
            const double h = local[i] + decay_prod[i] * entry[k * C * N + c * N + n];
            acc += in.c[t * N + n] * h;
            if (options.keep_states) result.states[i] = h;
          }
          y[t * C + c] = acc;
        }
      }
    }
  });
  return result;
}

ScanGrads selective_scan_backward(const ScanInputs& in, const Tensor& states, const Tensor& grad_y) {
  in.validate();
  const std::size_t T = in.steps();
  const std::size_t C = in.channels();
  const std::size_t N = in.state_dim();
  require(states.shape() == Shape{T, C, N}, "selective_scan_backward: states must be [T, C, N]");
  require(grad_y.shape() == in.u.shape(), "selective_scan_backward: grad shape mismatch");

  ScanGrads g{Tensor(in.u.shape()), Tensor(in.delta.shape()), Tensor(in.a.shape()),
              Tensor(in.b.shape()), Tensor(in.c.shape()), Tensor(in.d.shape())};
  std::vector<double> dh(C * N, 0.0);  // gradient flowing into h_t from h_{t+1}
  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t c = 0; c < C; ++c) {
      const double gy = grad_y[t * C + c];
      const double u = in.u[t * C + c];
      const double dt = in.delta[t * C + c];
      g.du[t * C + c] += gy * in.d[c];
      g.dd[c] += gy * u;
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t i = (t * C + c) * N + n;
        const double h = states[i];
        const double hprev = t > 0 ? states[i - C * N] : 0.0;
        g.dc[t * N + n] += gy * h;
        const double gh = dh[c * N + n] + gy * in.c[t * N + n];

        const double a = in.a[c * N + n];
        const double z = dt * a;
        const double decay = std::exp(z);
        const double gain = dt * zoh_phi(z);
        const double bn = in.b[t * N + n];

        const double g_decay = gh * hprev;
        const double g_gain = gh * bn * u;
        g.db[t * N + n] += gh * gain * u;
        g.du[t * C + c] += gh * gain * bn;
        // d(decay)/d(delta) = decay a, d(gain)/d(delta) = decay.
        g.ddelta[t * C + c] += g_decay * decay * a + g_gain * decay;
        g.da[c * N + n] += g_decay * decay * dt + g_gain * dt * dt * zoh_phi_derivative(z);
        dh[c * N + n] = gh * decay;
      }
    }
  }
  return g;
}

}  // namespace onebev
