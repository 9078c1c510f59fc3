#include "mdepth/ssm.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "mdepth/ops.hpp"
#include "mdepth/parallel.hpp"

namespace mdepth {

SsmParams SsmParams::init(std::size_t channels, std::size_t state_dim, std::size_t dt_rank, Rng& rng) {
  SsmParams p;
  std::vector<double> a_log(channels * state_dim);
  for (std::size_t d = 0; d < channels; ++d)
    for (std::size_t n = 0; n < state_dim; ++n) a_log[d * state_dim + n] = std::log(static_cast<double>(n + 1));
  p.a_log = Tensor::from({channels, state_dim}, std::move(a_log), true);
  p.b_proj = xavier_uniform({channels, state_dim}, channels, state_dim, rng);
  p.c_proj = xavier_uniform({channels, state_dim}, channels, state_dim, rng);
  p.dt_down = xavier_uniform({channels, dt_rank}, channels, dt_rank, rng);
  p.dt_up = xavier_uniform({dt_rank, channels}, dt_rank, channels, rng);
  std::vector<double> bias(channels);
  for (double& v : bias) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    v = dt + std::log(-std::expm1(-dt));  // softplus^-1(dt)
  }
  p.dt_bias = Tensor::from({channels}, std::move(bias), true);
  p.d_skip = Tensor::full({channels}, 1.0, true);
  return p;
}

void SsmParams::collect(ParamSet& out, const std::string& prefix) const {
  out.add(prefix + "a_log", a_log);
  out.add(prefix + "b_proj", b_proj);
  out.add(prefix + "c_proj", c_proj);
  out.add(prefix + "dt_down", dt_down);
  out.add(prefix + "dt_up", dt_up);
  out.add(prefix + "dt_bias", dt_bias);
  out.add(prefix + "d_skip", d_skip);
}

Selection select(const SsmParams& params, const Tensor& u) {
  if (u.rank() != 2 || u.dim(1) != params.channels()) throw_shape_error("s6.select", u.shape(), params.a_log.shape());
  Selection s;
  s.a = neg(exp(params.a_log));
  s.b = matmul(u, params.b_proj);
  s.c = matmul(u, params.c_proj);
  s.delta = softplus(add(matmul(matmul(u, params.dt_down), params.dt_up), params.dt_bias));
  return s;
}

DiscreteSsm discretize(std::span<const double> delta, std::span<const double> a, std::span<const double> b,
                       std::span<const double> c, std::span<const double> d, std::size_t length,
                       std::size_t channels, std::size_t state) {
  if (delta.size() != length * channels || a.size() != channels * state || b.size() != length * state ||
      c.size() != length * state || d.size() != channels) {
    throw ShapeError("discretize: inconsistent selection sizes for L=" + std::to_string(length) +
                     " D=" + std::to_string(channels) + " N=" + std::to_string(state));
  }
  for (double v : delta)
    if (!std::isfinite(v)) throw std::domain_error("discretize: non-finite step size delta");
  for (double v : a)
    if (!std::isfinite(v)) throw std::domain_error("discretize: non-finite state matrix A");
  DiscreteSsm out;
  out.length = length;
  out.channels = channels;
  out.state = state;
  out.a_bar.resize(length * channels * state);
  out.b_bar.resize(length * channels * state);
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const double dt = delta[t * channels + ch];
      for (std::size_t n = 0; n < state; ++n) {
        const std::size_t k = (t * channels + ch) * state + n;
        out.a_bar[k] = std::exp(dt * a[ch * state + n]);
        out.b_bar[k] = dt * b[t * state + n];
      }
    }
  out.c.assign(c.begin(), c.end());
  out.d.assign(d.begin(), d.end());
  return out;
}

DiscreteSsm discretize(const SsmParams& params, const Tensor& u) {
  NoGradGuard no_grad;
  const Selection s = select(params, u);
  return discretize(s.delta.data(), s.a.data(), s.b.data(), s.c.data(), params.d_skip.data(), u.dim(0),
                    params.channels(), params.state_dim());
}

namespace {

void check_input(const DiscreteSsm& ssm, std::span<const double> u) {
  if (u.size() != ssm.length * ssm.channels) {
    throw ShapeError("scan: input holds " + std::to_string(u.size()) + " values, expected L*D = " +
                     std::to_string(ssm.length * ssm.channels));
  }
}

}  // namespace

std::vector<double> scan_sequential(const DiscreteSsm& ssm, std::span<const double> u, std::vector<double>* states) {
  check_input(ssm, u);
  const std::size_t L = ssm.length, D = ssm.channels, N = ssm.state;
  std::vector<double> y(L * D, 0.0);
  std::vector<double> x(D * N, 0.0);
  if (states) states->assign(L * D * N, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t ch = 0; ch < D; ++ch) {
      const double ut = u[t * D + ch];
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t k = (t * D + ch) * N + n;
        double& xs = x[ch * N + n];
        xs = ssm.a_bar[k] * xs + ssm.b_bar[k] * ut;
        acc += ssm.c[t * N + n] * xs;
      }
      y[t * D + ch] = acc + ssm.d[ch] * ut;
    }
    if (states) std::copy(x.begin(), x.end(), states->begin() + t * D * N);
  }
  return y;
}

std::vector<double> scan_parallel(const DiscreteSsm& ssm, std::span<const double> u, std::size_t block,
                                  std::vector<double>* states) {
  check_input(ssm, u);
  if (block == 0) throw std::invalid_argument("scan_parallel: block size must be positive");
  const std::size_t L = ssm.length, D = ssm.channels, N = ssm.state;
  const std::size_t lanes = D * N;
  const std::size_t blocks = (L + block - 1) / block;

  // Phase 1: inclusive scan of the affine pairs inside each block, starting
  // from the identity map.
  std::vector<AffinePair> local(L * lanes);
  parallel_for(blocks, [&](std::size_t bi) {
    const std::size_t t0 = bi * block, t1 = std::min(L, t0 + block);
    for (std::size_t t = t0; t < t1; ++t)
      for (std::size_t lane = 0; lane < lanes; ++lane) {
        const std::size_t k = t * lanes + lane;
        const AffinePair prev = t == t0 ? AffinePair{} : local[k - lanes];
        local[k] = compose({ssm.a_bar[k], ssm.b_bar[k] * u[t * D + lane / N]}, prev);
      }
  });

  // Phase 2: exclusive scan of block aggregates gives each block's carry-in state.
  std::vector<double> carry(blocks * lanes, 0.0);
  for (std::size_t bi = 1; bi < blocks; ++bi) {
    const std::size_t last = std::min(L, bi * block) - 1;
    for (std::size_t lane = 0; lane < lanes; ++lane) {
      const AffinePair agg = local[last * lanes + lane];
      carry[bi * lanes + lane] = agg.a * carry[(bi - 1) * lanes + lane] + agg.b;
    }
  }

  // Phase 3: apply the carry and read out y.
  std::vector<double> y(L * D, 0.0);
  if (states) states->assign(L * lanes, 0.0);
  parallel_for(blocks, [&](std::size_t bi) {
    const std::size_t t0 = bi * block, t1 = std::min(L, t0 + block);
    for (std::size_t t = t0; t < t1; ++t)
      for (std::size_t ch = 0; ch < D; ++ch) {
        double acc = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t lane = ch * N + n;
          const AffinePair p = local[t * lanes + lane];
          const double xs = p.a * carry[bi * lanes + lane] + p.b;
          if (states) (*states)[t * lanes + lane] = xs;
          acc += ssm.c[t * N + n] * xs;
        }
        y[t * D + ch] = acc + ssm.d[ch] * u[t * D + ch];
      }
  });
  return y;
}

std::vector<double> scan_sequential(const SsmParams& params, const Tensor& u) {
  return scan_sequential(discretize(params, u), u.data());
}

std::vector<double> scan_parallel(const SsmParams& params, const Tensor& u) {
  return scan_parallel(discretize(params, u), u.data());
}

Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c,
                      const Tensor& d, ScanExecutor executor) {
  if (u.rank() != 2) throw_shape_error("selective_scan", "u must be [L, D], got " + shape_str(u.shape()));
  const std::size_t L = u.dim(0), D = u.dim(1);
  if (a.rank() != 2 || a.dim(0) != D) throw_shape_error("selective_scan(A)", u.shape(), a.shape());
  const std::size_t N = a.dim(1);
  if (delta.shape() != u.shape()) throw_shape_error("selective_scan(delta)", u.shape(), delta.shape());
  if (b.shape() != Shape{L, N}) throw_shape_error("selective_scan(B)", Shape{L, N}, b.shape());
  if (c.shape() != Shape{L, N}) throw_shape_error("selective_scan(C)", Shape{L, N}, c.shape());
  if (d.shape() != Shape{D}) throw_shape_error("selective_scan(D)", Shape{D}, d.shape());

  const DiscreteSsm ssm = discretize(delta.data(), a.data(), b.data(), c.data(), d.data(), L, D, N);
  const bool recording = Tape::should_record({&u, &delta, &a, &b, &c, &d});
  auto states = std::make_shared<std::vector<double>>();
  std::vector<double> y = executor == ScanExecutor::kSequential
                              ? scan_sequential(ssm, u.data(), recording ? states.get() : nullptr)
                              : scan_parallel(ssm, u.data(), kScanBlock, recording ? states.get() : nullptr);
  Tensor result = Tensor::from({L, D}, std::move(y));
  if (!recording) return result;

  auto a_bar = std::make_shared<std::vector<double>>(ssm.a_bar);
  return record_op({u, delta, a, b, c, d}, result,
                   [u, delta, a, b, c, d, states, a_bar, L, D, N](std::span<const double> gy) {
                     const auto ud = u.data(), dd = delta.data(), ad = a.data(), bd = b.data(), cd = c.data(),
                                skip = d.data();
                     const auto& x = *states;
                     const auto& ab = *a_bar;
                     std::vector<double> gu(L * D, 0.0), gdelta(L * D, 0.0), ga(D * N, 0.0), gb(L * N, 0.0),
                         gc(L * N, 0.0), gd(D, 0.0);
                     for (std::size_t ch = 0; ch < D; ++ch)
                       for (std::size_t n = 0; n < N; ++n) {
                         double lam = 0.0;  // adjoint of x_t
                         for (std::size_t t = L; t-- > 0;) {
                           const std::size_t k = (t * D + ch) * N + n;
                           const double g = gy[t * D + ch];
                           if (t + 1 < L) lam *= ab[((t + 1) * D + ch) * N + n];
                           lam += cd[t * N + n] * g;
                           gc[t * N + n] += g * x[k];
                           const double x_prev = t > 0 ? x[k - D * N] : 0.0;
                           const double da = lam * x_prev * ab[k];
                           const double dt = dd[t * D + ch];
                           const double ut = ud[t * D + ch];
                           const double bt = bd[t * N + n];
                           gdelta[t * D + ch] += da * ad[ch * N + n] + lam * bt * ut;
                           ga[ch * N + n] += da * dt;
                           gb[t * N + n] += lam * dt * ut;
                           gu[t * D + ch] += lam * dt * bt;
                         }
                       }
                     for (std::size_t t = 0; t < L; ++t)
                       for (std::size_t ch = 0; ch < D; ++ch) {
                         gu[t * D + ch] += gy[t * D + ch] * skip[ch];
                         gd[ch] += gy[t * D + ch] * ud[t * D + ch];
                       }
                     auto accumulate = [](const Tensor& t, const std::vector<double>& g) {
                       if (!t.requires_grad()) return;
                       auto& dst = t.impl()->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                     };
                     accumulate(u, gu);
                     accumulate(delta, gdelta);
                     accumulate(a, ga);
                     accumulate(b, gb);
                     accumulate(c, gc);
                     accumulate(d, gd);
                   });
}

Tensor s6_forward(const SsmParams& params, const Tensor& u, ScanExecutor executor) {
  const Selection s = select(params, u);
  return selective_scan(u, s.delta, s.a, s.b, s.c, params.d_skip, executor);
}

}  // namespace mdepth
