#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mdepth/params.hpp"
#include "mdepth/tensor.hpp"

// Selective state-space (S6) recurrence
//
//   x_k = Abar_k * x_{k-1} + Bbar_k * u_k,   x_0 = 0
//   y_k = C_k . x_k + D * u_k
//
// with a diagonal state matrix A < 0 per channel, input-dependent step size
// delta = softplus(.) > 0, Abar = exp(delta * A) and Bbar = delta * B(u).
namespace mdepth {

inline constexpr std::size_t kScanBlock = 64;

/// Learnable parameters of one S6 block over `channels` input channels.
struct SsmParams {
  Tensor a_log;    // [D, N]; A = -exp(a_log)
  Tensor b_proj;   // [D, N]; B_k = u_k . b_proj
  Tensor c_proj;   // [D, N]; C_k = u_k . c_proj
  Tensor dt_down;  // [D, R]  low-rank step-size projection
  Tensor dt_up;    // [R, D]
  Tensor dt_bias;  // [D]
  Tensor d_skip;   // [D]

  std::size_t channels() const { return a_log.dim(0); }
  std::size_t state_dim() const { return a_log.dim(1); }

  /// -A spans [1, N] in every channel; softplus(dt_bias) is log-uniform in
  /// [1e-3, 1e-1]; projections are Xavier-uniform; D = 1.
  static SsmParams init(std::size_t channels, std::size_t state_dim, std::size_t dt_rank, Rng& rng);
  void collect(ParamSet& out, const std::string& prefix) const;
};

/// Input-dependent selection tensors, all on the tape.
struct Selection {
  Tensor delta;  // [L, D]
  Tensor a;      // [D, N]
  Tensor b;      // [L, N]
  Tensor c;      // [L, N]
};

Selection select(const SsmParams& params, const Tensor& u);

/// Discretized recurrence coefficients as plain values.
struct DiscreteSsm {
  std::size_t length = 0, channels = 0, state = 0;
  std::vector<double> a_bar;  // [L, D, N]
  std::vector<double> b_bar;  // [L, D, N]
  std::vector<double> c;      // [L, N]
  std::vector<double> d;      // [D]
};

/// Abar = exp(delta * A), Bbar = delta * B. Throws std::domain_error on
/// non-finite delta or A.
DiscreteSsm discretize(std::span<const double> delta, std::span<const double> a, std::span<const double> b,
                       std::span<const double> c, std::span<const double> d, std::size_t length,
                       std::size_t channels, std::size_t state);
DiscreteSsm discretize(const SsmParams& params, const Tensor& u);

/// Reference executor. When `states` is given it receives x_k as [L, D, N].
std::vector<double> scan_sequential(const DiscreteSsm& ssm, std::span<const double> u,
                                    std::vector<double>* states = nullptr);

/// Blocked associative-scan executor over (Abar, Bbar*u) pairs. Blocks are
/// independent in the first and last phase and run through parallel_for.
std::vector<double> scan_parallel(const DiscreteSsm& ssm, std::span<const double> u,
                                  std::size_t block = kScanBlock, std::vector<double>* states = nullptr);

std::vector<double> scan_sequential(const SsmParams& params, const Tensor& u);
std::vector<double> scan_parallel(const SsmParams& params, const Tensor& u);

/// Affine map x -> a*x + b. compose(later, earlier) applies `earlier` first:
/// (a2, b2) o (a1, b1) = (a1*a2, a2*b1 + b2).
struct AffinePair {
  double a = 1.0;
  double b = 0.0;
};
inline AffinePair compose(AffinePair later, AffinePair earlier) {
  return {earlier.a * later.a, later.a * earlier.b + later.b};
}

enum class ScanExecutor { kSequential, kParallel };

/// Differentiable scan. u, delta: [L, D]; a: [D, N]; b, c: [L, N]; d: [D].
/// Returns y [L, D].
Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c,
                      const Tensor& d, ScanExecutor executor = ScanExecutor::kParallel);

/// select() followed by selective_scan().
Tensor s6_forward(const SsmParams& params, const Tensor& u, ScanExecutor executor = ScanExecutor::kParallel);

}  // namespace mdepth
