#pragma once

#include "onebev/tensor.hpp"

namespace onebev {

/// Diagonal linear state-space recurrence, per channel c and state n:
///
///   h_t = exp(delta_t * a) h_{t-1} + delta_t * phi(delta_t * a) * b_t * u_t
///   y_t = sum_n c_t h_t + d * u_t,     phi(z) = (e^z - 1) / z
///
/// which is the zero-order-hold discretization of dh/dt = a h + b u with step
/// delta_t. Shapes: u, delta [T, C]; a [C, N]; b, c [T, N]; d [C].
struct ScanInputs {
  const Tensor& u;
  const Tensor& delta;
  const Tensor& a;
  const Tensor& b;
  const Tensor& c;
  const Tensor& d;

  void validate() const;
  std::size_t steps() const { return u.dim(0); }
  std::size_t channels() const { return u.dim(1); }
  std::size_t state_dim() const { return a.dim(1); }
};

enum class ScanAlgorithm {
  Sequential,  // one pass over time
  Chunked,     // independent per-chunk scans joined by a carry pass
};

struct ScanOptions {
  ScanAlgorithm algorithm = ScanAlgorithm::Chunked;
  std::size_t chunk = 64;
  int jobs = 1;
  bool keep_states = false;
};

struct ScanResult {
  Tensor y;       // [T, C]
  Tensor states;  // [T, C, N] when keep_states, otherwise empty
};

ScanResult selective_scan_forward(const ScanInputs& in, const ScanOptions& options = {});

struct ScanGrads {
  Tensor du, ddelta, da, db, dc, dd;
};

/// Reverse pass given the hidden states from the forward pass.
ScanGrads selective_scan_backward(const ScanInputs& in, const Tensor& states, const Tensor& grad_y);

/// (e^z - 1) / z and its derivative, stable near z = 0.
double zoh_phi(double z);
double zoh_phi_derivative(double z);

}  // namespace onebev
