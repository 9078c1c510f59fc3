#include "mdepth/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mdepth {

namespace {

std::vector<double>& grad_of(const Tensor& t) { return t.impl()->ensure_grad(); }

// Maps every output element of a broadcast to its source offsets in a and b.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> ia, ib;
  bool same = false;
};

Broadcast plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape ea(rank, 1), eb(rank, 1);
  std::copy(a.begin(), a.end(), ea.begin() + (rank - a.size()));
  std::copy(b.begin(), b.end(), eb.begin() + (rank - b.size()));
  p.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (ea[i] != eb[i] && ea[i] != 1 && eb[i] != 1) throw_shape_error(op, a, b);
    p.out[i] = std::max(ea[i], eb[i]);
  }
  std::vector<std::size_t> sa(rank, 0), sb(rank, 0);
  std::size_t stride_a = 1, stride_b = 1;
  for (std::size_t i = rank; i-- > 0;) {
    sa[i] = ea[i] == 1 ? 0 : stride_a;
    sb[i] = eb[i] == 1 ? 0 : stride_b;
    stride_a *= ea[i];
    stride_b *= eb[i];
  }
  const std::size_t n = shape_numel(p.out);
  p.ia.resize(n);
  p.ib.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t k = 0; k < n; ++k) {
    p.ia[k] = oa;
    p.ib[k] = ob;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < p.out[d]) {
        oa += sa[d];
        ob += sb[d];
        break;
      }
      oa -= sa[d] * (idx[d] - 1);
      ob -= sb[d] * (idx[d] - 1);
      idx[d] = 0;
    }
  }
  return p;
}

// Shared machinery for elementwise binary ops. `f` computes the value,
// `dfa`/`dfb` the partial derivatives given (a, b, out).
template <class F, class Da, class Db>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f, Da dfa, Db dfb) {
  auto plan = std::make_shared<Broadcast>(plan_broadcast(name, a.shape(), b.shape()));
  const std::size_t n = shape_numel(plan->out);
  std::vector<double> out(n);
  const auto ad = a.data();
  const auto bd = b.data();
  if (plan->same) {
    for (std::size_t k = 0; k < n; ++k) out[k] = f(ad[k], bd[k]);
  } else {
    for (std::size_t k = 0; k < n; ++k) out[k] = f(ad[plan->ia[k]], bd[plan->ib[k]]);
  }
  Tensor result = Tensor::from(plan->out, std::move(out));
  return record_op({a, b}, result, [a, b, result, plan, dfa, dfb](std::span<const double> g) {
    const auto ad = a.data();
    const auto bd = b.data();
    const auto od = result.data();
    const std::size_t n = g.size();
    auto ia = [&](std::size_t k) { return plan->same ? k : plan->ia[k]; };
    auto ib = [&](std::size_t k) { return plan->same ? k : plan->ib[k]; };
    if (a.requires_grad()) {
      auto& ga = grad_of(a);
      for (std::size_t k = 0; k < n; ++k) ga[ia(k)] += g[k] * dfa(ad[ia(k)], bd[ib(k)], od[k]);
    }
    if (b.requires_grad()) {
      auto& gb = grad_of(b);
      for (std::size_t k = 0; k < n; ++k) gb[ib(k)] += g[k] * dfb(ad[ia(k)], bd[ib(k)], od[k]);
    }
  });
}

template <class F, class D>
Tensor unary_op(const Tensor& x, F f, D df) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t k = 0; k < xd.size(); ++k) out[k] = f(xd[k]);
  Tensor result = Tensor::from(x.shape(), std::move(out));
  return record_op({x}, result, [x, result, df](std::span<const double> g) {
    auto& gx = grad_of(x);
    const auto xd = x.data();
    const auto od = result.data();
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * df(xd[k], od[k]);
  });
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

std::size_t reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return static_cast<std::size_t>(i < n ? i : period - i);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_op(
      "minimum", a, b, [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary_op(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double s) {
  return unary_op(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

Tensor exp(const Tensor& x) {
  return unary_op(x, [](double v) { return std::exp(v); }, [](double, double o) { return o; });
}

Tensor log(const Tensor& x) {
  return unary_op(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(x, [](double v) { return std::sqrt(v); }, [](double, double o) { return 0.5 / o; });
}

Tensor square(const Tensor& x) {
  return unary_op(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(x, stable_sigmoid, [](double, double o) { return o * (1.0 - o); });
}

Tensor silu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v * stable_sigmoid(v); },
      [](double v, double) {
        const double s = stable_sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
      [](double v, double) { return stable_sigmoid(v); });
}

Tensor sum(const Tensor& x) {
  const auto xd = x.data();
  double s = 0.0;
  for (double v : xd) s += v;
  Tensor result = Tensor::scalar(s);
  return record_op({x}, result, [x](std::span<const double> g) {
    auto& gx = grad_of(x);
    for (double& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw_shape_error("mean", "empty tensor");
  return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw_shape_error("sum_axis", "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  const std::size_t outer = shape_numel(Shape(s.begin(), s.begin() + axis));
  const std::size_t len = s[axis];
  const std::size_t inner = shape_numel(Shape(s.begin() + axis + 1, s.end()));
  Shape out_shape = s;
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + axis);
  }
  std::vector<double> out(outer * inner, 0.0);
  const auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xd[(o * len + l) * inner + i];
  Tensor result = Tensor::from(out_shape, std::move(out));
  return record_op({x}, result, [x, outer, len, inner](std::span<const double> g) {
    auto& gx = grad_of(x);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t i = 0; i < inner; ++i) gx[(o * len + l) * inner + i] += g[o * inner + i];
  });
}

Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  const double n = static_cast<double>(x.shape().at(axis));
  return mul_scalar(sum_axis(x, axis, keepdim), 1.0 / n);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) throw_shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      const double* brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  Tensor result = Tensor::from({m, n}, std::move(out));
  return record_op({a, b}, result, [a, b, m, k, n](std::span<const double> g) {
    const auto ad = a.data();
    const auto bd = b.data();
    if (a.requires_grad()) {
      auto& ga = grad_of(a);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bd[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (b.requires_grad()) {
      auto& gb = grad_of(b);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = ad[i * k + p];
          double* grow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) grow[j] += av * g[i * n + j];
        }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() < 1 || weight.rank() != 2 || x.shape().back() != weight.dim(0)) {
    throw_shape_error("linear", x.shape(), weight.shape());
  }
  const std::size_t k = weight.dim(0), n = weight.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != n)) throw_shape_error("linear(bias)", weight.shape(), bias.shape());
  const std::size_t m = x.numel() / k;
  Shape out_shape = x.shape();
  out_shape.back() = n;
  std::vector<double> out(m * n, 0.0);
  const auto xd = x.data();
  const auto wd = weight.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    if (bias.defined()) std::copy_n(bias.data().begin(), n, orow);
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = xd[i * k + p];
      if (xv == 0.0) continue;
      const double* wrow = wd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += xv * wrow[j];
    }
  }
  Tensor result = Tensor::from(std::move(out_shape), std::move(out));
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return record_op(std::move(inputs), result, [x, weight, bias, m, k, n](std::span<const double> g) {
    const auto xd = x.data();
    const auto wd = weight.data();
    if (x.requires_grad()) {
      auto& gx = grad_of(x);
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* wrow = wd.data() + p * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * wrow[j];
          gx[i * k + p] += s;
        }
      }
    }
    if (weight.requires_grad()) {
      auto& gw = grad_of(weight);
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = xd[i * k + p];
          if (xv == 0.0) continue;
          double* gwrow = gw.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gwrow[j] += xv * grow[j];
        }
      }
    }
    if (bias.defined() && bias.requires_grad()) {
      auto& gb = grad_of(bias);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  if (x.rank() != 3 || weight.rank() != 4 || weight.dim(2) != x.dim(2)) throw_shape_error("conv2d", x.shape(), weight.shape());
  if (stride == 0) throw_shape_error("conv2d", "stride must be positive");
  const std::size_t h = x.dim(0), w = x.dim(1), ci = x.dim(2);
  const std::size_t kh = weight.dim(0), kw = weight.dim(1), co = weight.dim(3);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co)) throw_shape_error("conv2d(bias)", weight.shape(), bias.shape());
  if (h + 2 * pad < kh || w + 2 * pad < kw) throw_shape_error("conv2d", x.shape(), weight.shape());
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(oh * ow * co, 0.0);
  const auto xd = x.data();
  const auto wd = weight.data();
  auto for_taps = [=](auto&& body) {
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            body((oy * ow + ox) * co, (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * ci,
                 (ky * kw + kx) * ci * co);
          }
        }
  };
  for_taps([&](std::size_t o, std::size_t xi, std::size_t wi) {
    double* orow = out.data() + o;
    for (std::size_t c = 0; c < ci; ++c) {
      const double xv = xd[xi + c];
      const double* wrow = wd.data() + wi + c * co;
      for (std::size_t j = 0; j < co; ++j) orow[j] += xv * wrow[j];
    }
  });
  if (bias.defined()) {
    const auto bd = bias.data();
    for (std::size_t p = 0; p < oh * ow; ++p)
      for (std::size_t j = 0; j < co; ++j) out[p * co + j] += bd[j];
  }
  Tensor result = Tensor::from({oh, ow, co}, std::move(out));
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return record_op(std::move(inputs), result,
                   [x, weight, bias, for_taps, ci, co, oh, ow](std::span<const double> g) {
                     const auto xd = x.data();
                     const auto wd = weight.data();
                     const bool need_x = x.requires_grad(), need_w = weight.requires_grad();
                     double* gx = need_x ? grad_of(x).data() : nullptr;
                     double* gw = need_w ? grad_of(weight).data() : nullptr;
                     for_taps([&](std::size_t o, std::size_t xi, std::size_t wi) {
                       const double* grow = g.data() + o;
                       for (std::size_t c = 0; c < ci; ++c) {
                         const double* wrow = wd.data() + wi + c * co;
                         if (need_x) {
                           double s = 0.0;
                           for (std::size_t j = 0; j < co; ++j) s += grow[j] * wrow[j];
                           gx[xi + c] += s;
                         }
                         if (need_w) {
                           const double xv = xd[xi + c];
                           double* gwrow = gw + wi + c * co;
                           for (std::size_t j = 0; j < co; ++j) gwrow[j] += xv * grow[j];
                         }
                       }
                     });
                     if (bias.defined() && bias.requires_grad()) {
                       auto& gb = grad_of(bias);
                       for (std::size_t p = 0; p < oh * ow; ++p)
                         for (std::size_t j = 0; j < co; ++j) gb[j] += g[p * co + j];
                     }
                   });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        std::size_t stride, std::size_t pad) {
  if (x.rank() != 3 || weight.rank() != 3 || weight.dim(2) != x.dim(2)) {
    throw_shape_error("depthwise_conv2d", x.shape(), weight.shape());
  }
  if (stride == 0) throw_shape_error("depthwise_conv2d", "stride must be positive");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t kh = weight.dim(0), kw = weight.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c)) throw_shape_error("depthwise_conv2d(bias)", weight.shape(), bias.shape());
  if (h + 2 * pad < kh || w + 2 * pad < kw) throw_shape_error("depthwise_conv2d", x.shape(), weight.shape());
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(oh * ow * c, 0.0);
  const auto xd = x.data();
  const auto wd = weight.data();
  auto for_taps = [=](auto&& body) {
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            body((oy * ow + ox) * c, (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c,
                 (ky * kw + kx) * c);
          }
        }
  };
  for_taps([&](std::size_t o, std::size_t xi, std::size_t wi) {
    for (std::size_t j = 0; j < c; ++j) out[o + j] += xd[xi + j] * wd[wi + j];
  });
  if (bias.defined()) {
    const auto bd = bias.data();
    for (std::size_t p = 0; p < oh * ow; ++p)
      for (std::size_t j = 0; j < c; ++j) out[p * c + j] += bd[j];
  }
  Tensor result = Tensor::from({oh, ow, c}, std::move(out));
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return record_op(std::move(inputs), result, [x, weight, bias, for_taps, c, oh, ow](std::span<const double> g) {
    const auto xd = x.data();
    const auto wd = weight.data();
    const bool need_x = x.requires_grad(), need_w = weight.requires_grad();
    double* gx = need_x ? grad_of(x).data() : nullptr;
    double* gw = need_w ? grad_of(weight).data() : nullptr;
    for_taps([&](std::size_t o, std::size_t xi, std::size_t wi) {
      for (std::size_t j = 0; j < c; ++j) {
        if (need_x) gx[xi + j] += g[o + j] * wd[wi + j];
        if (need_w) gw[wi + j] += g[o + j] * xd[xi + j];
      }
    });
    if (bias.defined() && bias.requires_grad()) {
      auto& gb = grad_of(bias);
      for (std::size_t p = 0; p < oh * ow; ++p)
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[p * c + j];
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 1) throw_shape_error("layer_norm", "rank-0 input");
  const std::size_t c = x.shape().back();
  if (gamma.defined() && gamma.numel() != c) throw_shape_error("layer_norm(gamma)", x.shape(), gamma.shape());
  if (beta.defined() && beta.numel() != c) throw_shape_error("layer_norm(beta)", x.shape(), beta.shape());
  const std::size_t rows = x.numel() / c;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const double xh = (xr[j] - mu) * is;
      (*xhat)[r * c + j] = xh;
      out[r * c + j] = (gamma.defined() ? gamma[j] : 1.0) * xh + (beta.defined() ? beta[j] : 0.0);
    }
  }
  Tensor result = Tensor::from(x.shape(), std::move(out));
  std::vector<Tensor> inputs{x};
  if (gamma.defined()) inputs.push_back(gamma);
  if (beta.defined()) inputs.push_back(beta);
  return record_op(std::move(inputs), result, [x, gamma, beta, xhat, inv_std, rows, c](std::span<const double> g) {
    const auto& xh = *xhat;
    if (gamma.defined() && gamma.requires_grad()) {
      auto& gg = grad_of(gamma);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) gg[j] += g[r * c + j] * xh[r * c + j];
    }
    if (beta.defined() && beta.requires_grad()) {
      auto& gb = grad_of(beta);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
    }
    if (!x.requires_grad()) return;
    auto& gx = grad_of(x);
    std::vector<double> dxh(c);
    for (std::size_t r = 0; r < rows; ++r) {
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        dxh[j] = g[r * c + j] * (gamma.defined() ? gamma[j] : 1.0);
        m1 += dxh[j];
        m2 += dxh[j] * xh[r * c + j];
      }
      m1 /= static_cast<double>(c);
      m2 /= static_cast<double>(c);
      const double is = (*inv_std)[r];
      for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += is * (dxh[j] - m1 - xh[r * c + j] * m2);
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw_shape_error("concat", "no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw_shape_error("concat", "axis out of range for " + shape_str(s0));
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw_shape_error("concat", s0, s);
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != s0[d]) throw_shape_error("concat", s0, s);
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = shape_numel(Shape(s0.begin(), s0.begin() + axis));
  const std::size_t inner = shape_numel(Shape(s0.begin() + axis + 1, s0.end()));
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t chunk = p.dim(axis) * inner;
    const auto pd = p.data();
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(pd.begin() + o * chunk, chunk, out.begin() + o * out_row + off);
    off += chunk;
  }
  Tensor result = Tensor::from(std::move(out_shape), std::move(out));
  return record_op(parts, result, [parts, offsets, outer, inner, out_row, axis](std::span<const double> g) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (!parts[k].requires_grad()) continue;
      auto& gp = grad_of(parts[k]);
      const std::size_t chunk = parts[k].dim(axis) * inner;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += g[o * out_row + offsets[k] + i];
    }
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = x.shape();
  if (axis >= s.size() || start + length > s[axis] || length == 0) {
    throw_shape_error("slice", "range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                   ") on axis " + std::to_string(axis) + " of " + shape_str(s));
  }
  const std::size_t outer = shape_numel(Shape(s.begin(), s.begin() + axis));
  const std::size_t inner = shape_numel(Shape(s.begin() + axis + 1, s.end()));
  Shape out_shape = s;
  out_shape[axis] = length;
  std::vector<double> out(outer * length * inner);
  const auto xd = x.data();
  const std::size_t src_row = s[axis] * inner, dst_row = length * inner;
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xd.begin() + o * src_row + start * inner, dst_row, out.begin() + o * dst_row);
  Tensor result = Tensor::from(std::move(out_shape), std::move(out));
  return record_op({x}, result, [x, outer, src_row, dst_row, start, inner](std::span<const double> g) {
    auto& gx = grad_of(x);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < dst_row; ++i) gx[o * src_row + start * inner + i] += g[o * dst_row + i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& s = x.shape();
  const std::size_t rank = s.size();
  std::vector<bool> seen(rank, false);
  if (order.size() != rank) throw_shape_error("permute", "order has wrong length for " + shape_str(s));
  for (std::size_t d : order) {
    if (d >= rank || seen[d]) throw_shape_error("permute", "invalid axis order for " + shape_str(s));
    seen[d] = true;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t d = rank; d-- > 1;) in_strides[d - 1] = in_strides[d] * s[d];
  Shape out_shape(rank);
  for (std::size_t d = 0; d < rank; ++d) out_shape[d] = s[order[d]];
  const std::size_t n = x.numel();
  auto src = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t k = 0; k < n; ++k) {
    (*src)[k] = off;
    for (std::size_t d = rank; d-- > 0;) {
      const std::size_t st = in_strides[order[d]];
      if (++idx[d] < out_shape[d]) {
        off += st;
        break;
      }
      off -= st * (idx[d] - 1);
      idx[d] = 0;
    }
  }
  std::vector<double> out(n);
  const auto xd = x.data();
  for (std::size_t k = 0; k < n; ++k) out[k] = xd[(*src)[k]];
  Tensor result = Tensor::from(std::move(out_shape), std::move(out));
  return record_op({x}, result, [x, src](std::span<const double> g) {
    auto& gx = grad_of(x);
    for (std::size_t k = 0; k < g.size(); ++k) gx[(*src)[k]] += g[k];
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw_shape_error("transpose", "expected a matrix, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) throw_shape_error("reshape", x.shape(), shape);
  Tensor result = Tensor::from(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  return record_op({x}, result, [x](std::span<const double> g) {
    auto& gx = grad_of(x);
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
  });
}

Tensor pad(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left, std::size_t right,
           PadMode mode) {
  if (x.rank() != 3) throw_shape_error("pad", "expected [H,W,C], got " + shape_str(x.shape()));
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (mode == PadMode::kReflect && (top >= h || bottom >= h || left >= w || right >= w)) {
    throw_shape_error("pad", "reflection pad wider than input " + shape_str(x.shape()));
  }
  const std::size_t oh = h + top + bottom, ow = w + left + right;
  // Source pixel for each output pixel; -1 marks zero padding.
  auto src = std::make_shared<std::vector<long>>(oh * ow, -1);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t xx = 0; xx < ow; ++xx) {
      const long iy = static_cast<long>(y) - static_cast<long>(top);
      const long ix = static_cast<long>(xx) - static_cast<long>(left);
      if (mode == PadMode::kReflect) {
        (*src)[y * ow + xx] = static_cast<long>(reflect_index(iy, static_cast<long>(h)) * w +
                                                reflect_index(ix, static_cast<long>(w)));
      } else if (iy >= 0 && ix >= 0 && iy < static_cast<long>(h) && ix < static_cast<long>(w)) {
        (*src)[y * ow + xx] = iy * static_cast<long>(w) + ix;
      }
    }
  std::vector<double> out(oh * ow * c, 0.0);
  const auto xd = x.data();
  for (std::size_t p = 0; p < oh * ow; ++p) {
    const long s = (*src)[p];
    if (s < 0) continue;
    for (std::size_t j = 0; j < c; ++j) out[p * c + j] = xd[static_cast<std::size_t>(s) * c + j];
  }
  Tensor result = Tensor::from({oh, ow, c}, std::move(out));
  return record_op({x}, result, [x, src, c](std::span<const double> g) {
    auto& gx = grad_of(x);
    for (std::size_t p = 0; p < src->size(); ++p) {
      const long s = (*src)[p];
      if (s < 0) continue;
      for (std::size_t j = 0; j < c; ++j) gx[static_cast<std::size_t>(s) * c + j] += g[p * c + j];
    }
  });
}

Tensor index_select(const Tensor& x, const std::vector<std::size_t>& index) {
  if (x.rank() < 1) throw_shape_error("index_select", "rank-0 input");
  const std::size_t rows = x.dim(0);
  const std::size_t row = x.numel() / std::max<std::size_t>(rows, 1);
  for (std::size_t i : index)
    if (i >= rows) throw_shape_error("index_select", "index " + std::to_string(i) + " out of range for " + shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape[0] = index.size();
  std::vector<double> out(index.size() * row);
  const auto xd = x.data();
  for (std::size_t k = 0; k < index.size(); ++k) std::copy_n(xd.begin() + index[k] * row, row, out.begin() + k * row);
  Tensor result = Tensor::from(std::move(out_shape), std::move(out));
  return record_op({x}, result, [x, index, row](std::span<const double> g) {
    auto& gx = grad_of(x);
    for (std::size_t k = 0; k < index.size(); ++k)
      for (std::size_t j = 0; j < row; ++j) gx[index[k] * row + j] += g[k * row + j];
  });
}

Tensor avg_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  if (x.rank() != 3 || kernel == 0 || stride == 0 || x.dim(0) < kernel || x.dim(1) < kernel) {
    throw_shape_error("avg_pool2d", "kernel " + std::to_string(kernel) + " does not fit " + shape_str(x.shape()));
  }
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t oh = (h - kernel) / stride + 1, ow = (w - kernel) / stride + 1;
  const double scale = 1.0 / static_cast<double>(kernel * kernel);
  std::vector<double> out(oh * ow * c, 0.0);
  const auto xd = x.data();
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t ky = 0; ky < kernel; ++ky)
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const std::size_t xi = ((oy * stride + ky) * w + ox * stride + kx) * c;
          for (std::size_t j = 0; j < c; ++j) out[(oy * ow + ox) * c + j] += xd[xi + j] * scale;
        }
  Tensor result = Tensor::from({oh, ow, c}, std::move(out));
  return record_op({x}, result, [x, kernel, stride, w, c, oh, ow, scale](std::span<const double> g) {
    auto& gx = grad_of(x);
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t xi = ((oy * stride + ky) * w + ox * stride + kx) * c;
            for (std::size_t j = 0; j < c; ++j) gx[xi + j] += g[(oy * ow + ox) * c + j] * scale;
          }
  });
}

Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 3 || out_h == 0 || out_w == 0) throw_shape_error("upsample_bilinear", "expected [h,w,C] input, got " + shape_str(x.shape()));
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  struct Tap {
    std::size_t i0, i1;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double src = std::max(0.0, (static_cast<double>(o) + 0.5) * scale - 0.5);
      const auto i0 = std::min(static_cast<std::size_t>(src), in - 1);
      t[o] = {i0, std::min(i0 + 1, in - 1), src - static_cast<double>(i0)};
    }
    return t;
  };
  auto ty = std::make_shared<std::vector<Tap>>(taps(h, out_h));
  auto tx = std::make_shared<std::vector<Tap>>(taps(w, out_w));
  std::vector<double> out(out_h * out_w * c);
  const auto xd = x.data();
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const Tap& a = (*ty)[oy];
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const Tap& b = (*tx)[ox];
      for (std::size_t j = 0; j < c; ++j) {
        const double v00 = xd[(a.i0 * w + b.i0) * c + j], v01 = xd[(a.i0 * w + b.i1) * c + j];
        const double v10 = xd[(a.i1 * w + b.i0) * c + j], v11 = xd[(a.i1 * w + b.i1) * c + j];
        out[(oy * out_w + ox) * c + j] = (1 - a.frac) * ((1 - b.frac) * v00 + b.frac * v01) +
                                         a.frac * ((1 - b.frac) * v10 + b.frac * v11);
      }
    }
  }
  Tensor result = Tensor::from({out_h, out_w, c}, std::move(out));
  return record_op({x}, result, [x, ty, tx, w, c, out_w](std::span<const double> g) {
    auto& gx = grad_of(x);
    for (std::size_t oy = 0; oy < ty->size(); ++oy) {
      const Tap& a = (*ty)[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const Tap& b = (*tx)[ox];
        for (std::size_t j = 0; j < c; ++j) {
          const double gv = g[(oy * out_w + ox) * c + j];
          gx[(a.i0 * w + b.i0) * c + j] += gv * (1 - a.frac) * (1 - b.frac);
          gx[(a.i0 * w + b.i1) * c + j] += gv * (1 - a.frac) * b.frac;
          gx[(a.i1 * w + b.i0) * c + j] += gv * a.frac * (1 - b.frac);
          gx[(a.i1 * w + b.i1) * c + j] += gv * a.frac * b.frac;
        }
      }
    }
  });
}

}  // namespace mdepth
