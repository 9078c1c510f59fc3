#include "mdepth/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mdepth/losses.hpp"
#include "mdepth/md_block.hpp"
#include "mdepth/ops.hpp"
#include "mdepth/params.hpp"

namespace mdepth {

double gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs, const GradcheckOptions& options) {
  Rng rng(options.seed);
  Tensor weights;
  std::vector<std::vector<double>> analytic;
  {
    for (auto t : inputs) t.zero_grad();
    Tape tape;
    const Tensor y = f();
    std::vector<double> w(y.numel());
    for (auto& v : w) v = rng.normal();
    weights = Tensor::from(y.shape(), std::move(w));
    tape.backward(sum(mul(y, weights)));
    for (const auto& t : inputs) analytic.push_back(t.grad());
  }
  auto objective = [&] {
    NoGradGuard guard;
    const Tensor y = f();
    double s = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += y[i] * weights[i];
    return s;
  };

  std::vector<std::pair<std::size_t, std::size_t>> probes;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) probes.emplace_back(k, i);
  if (probes.size() > options.max_probes) {
    std::shuffle(probes.begin(), probes.end(), rng.engine());
    probes.resize(options.max_probes);
  }

  double worst = 0.0;
  for (const auto& [k, i] : probes) {
    Tensor t = inputs[k];
    const double saved = t[i];
    t.mutable_data()[i] = saved + options.step;
    const double plus = objective();
    t.mutable_data()[i] = saved - options.step;
    const double minus = objective();
    t.mutable_data()[i] = saved;
    const double numeric = (plus - minus) / (2.0 * options.step);
    worst = std::max(worst, std::abs(analytic[k][i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

namespace {

Tensor random(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Magnitudes in [lo, hi] with random sign, keeping away from kinks at zero.
Tensor random_away_from_zero(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t = random(std::move(shape), rng, lo, hi);
  for (auto& x : t.mutable_data()) x = rng.bernoulli(0.5) ? x : -x;
  return t;
}

void leaves(const ParamSet& params) {
  for (const auto& p : params.items()) Tensor(p.tensor).set_requires_grad(true);
}

std::vector<Tensor> tensors_of(const ParamSet& params) {
  std::vector<Tensor> out;
  for (const auto& p : params.items()) out.push_back(p.tensor);
  return out;
}

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng(seed), seed_(seed) {}

  void check(const std::string& name, double tol, const std::function<Tensor()>& f, const std::vector<Tensor>& inputs) {
    GradcheckOptions opt;
    opt.seed = seed_ + reports.size();
    reports.push_back({name, gradcheck(f, inputs, opt), tol});
  }
  void primitive(const std::string& name, const std::function<Tensor()>& f, const std::vector<Tensor>& inputs) {
    check(name, kPrimitiveTolerance, f, inputs);
  }
  void composite(const std::string& name, const std::function<Tensor()>& f, const std::vector<Tensor>& inputs) {
    check(name, kCompositeTolerance, f, inputs);
  }

  Rng rng;
  std::vector<GradcheckReport> reports;

 private:
  std::uint64_t seed_;
};

void primitive_suites(Suite& s) {
  Rng& r = s.rng;
  {
    Tensor a = random({3, 4}, r), b = random({4}, r), c = random({3, 1}, r);
    s.primitive("add", [=] { return add(a, b); }, {a, b});
    s.primitive("sub", [=] { return sub(a, c); }, {a, c});
    s.primitive("mul", [=] { return mul(a, b); }, {a, b});
    Tensor d = random_away_from_zero({4}, r, 0.5, 2.0);
    s.primitive("div", [=] { return div(a, d); }, {a, d});
    Tensor e = random({3, 4}, r);
    for (std::size_t i = 0; i < e.numel(); ++i)
      if (std::abs(e[i] - a[i]) < 1e-2) e.mutable_data()[i] += 0.1;
    s.primitive("minimum", [=] { return minimum(a, e); }, {a, e});
    s.primitive("add_scalar", [=] { return add_scalar(a, 0.7); }, {a});
    s.primitive("mul_scalar", [=] { return mul_scalar(a, -1.3); }, {a});
    s.primitive("neg", [=] { return neg(a); }, {a});
  }
  {
    Tensor x = random({2, 5}, r, -2.0, 2.0), pos = random({2, 5}, r, 0.5, 2.0);
    Tensor nz = random_away_from_zero({2, 5}, r, 0.05, 1.0);
    s.primitive("exp", [=] { return exp(x); }, {x});
    s.primitive("log", [=] { return log(pos); }, {pos});
    s.primitive("abs", [=] { return abs(nz); }, {nz});
    s.primitive("sqrt", [=] { return sqrt(pos); }, {pos});
    s.primitive("square", [=] { return square(x); }, {x});
    s.primitive("sigmoid", [=] { return sigmoid(x); }, {x});
    s.primitive("silu", [=] { return silu(x); }, {x});
    s.primitive("softplus", [=] { return softplus(x); }, {x});
  }
  {
    Tensor x = random({3, 4, 2}, r);
    s.primitive("sum", [=] { return sum(x); }, {x});
    s.primitive("mean", [=] { return mean(x); }, {x});
    s.primitive("sum_axis", [=] { return sum_axis(x, 1, true); }, {x});
    s.primitive("mean_axis", [=] { return mean_axis(x, 2); }, {x});
    s.primitive("concat", [=] { return concat({x, mul_scalar(x, 2.0)}, 1); }, {x});
    s.primitive("slice", [=] { return slice(x, 1, 1, 2); }, {x});
    s.primitive("permute", [=] { return permute(x, {2, 0, 1}); }, {x});
    s.primitive("reshape", [=] { return reshape(x, {4, 6}); }, {x});
    s.primitive("index_select", [=] { return index_select(x, {2, 0, 2}); }, {x});
    s.primitive("pad_zero", [=] { return pad(x, 1, 0, 2, 1, PadMode::kZero); }, {x});
    s.primitive("pad_reflect", [=] { return pad(x, 2, 1, 1, 2, PadMode::kReflect); }, {x});
  }
  {
    Tensor a = random({3, 4}, r), b = random({4, 5}, r), bias = random({5}, r), x = random({2, 3, 4}, r);
    s.primitive("transpose", [=] { return transpose(a); }, {a});
    s.primitive("matmul", [=] { return matmul(a, b); }, {a, b});
    s.primitive("linear", [=] { return linear(x, b, bias); }, {x, b, bias});
  }
  {
    Tensor x = random({5, 6, 3}, r), w = random({3, 3, 3, 4}, r), b = random({4}, r);
    s.primitive("conv2d", [=] { return conv2d(x, w, b, 1, 1); }, {x, w, b});
    s.primitive("conv2d_stride2", [=] { return conv2d(x, w, b, 2, 1); }, {x, w, b});
    Tensor dw = random({3, 3, 3}, r), db = random({3}, r);
    s.primitive("depthwise_conv2d", [=] { return depthwise_conv2d(x, dw, db, 1, 1); }, {x, dw, db});
    Tensor g = random({3}, r, 0.5, 1.5), beta = random({3}, r);
    s.primitive("layer_norm", [=] { return layer_norm(x, g, beta); }, {x, g, beta});
    Tensor y = random({4, 6, 2}, r);
    s.primitive("avg_pool2d", [=] { return avg_pool2d(y, 2, 2); }, {y});
    s.primitive("upsample_bilinear", [=] { return upsample_bilinear(y, 8, 12); }, {y});
  }
  {
    const std::size_t len = 150, d = 3, n = 4;  // spans several parallel blocks
    Tensor u = random({len, d}, r), delta = random({len, d}, r, 0.05, 0.5), a = random({d, n}, r, -2.0, -0.2);
    Tensor b = random({len, n}, r), c = random({len, n}, r), skip = random({d}, r);
    for (auto ex : {ScanExecutor::kSequential, ScanExecutor::kParallel}) {
      s.primitive(ex == ScanExecutor::kSequential ? "selective_scan_sequential" : "selective_scan_parallel",
                  [=] { return selective_scan(u, delta, a, b, c, skip, ex); }, {u, delta, a, b, c, skip});
    }
  }
  {
    Tensor w = random({3}, r, -1.0, 1.0), tiny = random({3}, r, -1e-4, 1e-4);
    s.primitive("axis_angle", [=] { return axis_angle_to_rotation(w); }, {w});
    s.primitive("axis_angle_small", [=] { return axis_angle_to_rotation(tiny); }, {tiny});
  }
  {
    const CameraModel cam{20.0, 22.0, 4.5, 3.5, 10, 8};
    Tensor pts = random({4, 5, 3}, r);
    for (std::size_t i = 2; i < pts.numel(); i += 3) pts.mutable_data()[i] = r.uniform(1.0, 5.0);
    s.primitive("project", [=] { return project(pts, cam).coords; }, {pts});
    Tensor depth = random({8, 10, 1}, r, 1.0, 5.0);
    s.primitive("backproject", [=] { return backproject(depth, cam); }, {depth});
    Tensor rot = random({3, 3}, r), trans = random({3}, r);
    s.primitive("transform_points", [=] { return transform_points(pts, PoseTransform{rot, trans}); }, {pts, rot, trans});
    Tensor disp = random({4, 4, 1}, r, 0.05, 0.95);
    s.primitive("disparity_to_depth", [=] { return disparity_to_depth(disp, 0.1, 100.0); }, {disp});
  }
}

void composite_suites(Suite& s) {
  Rng& r = s.rng;
  {
    SsmParams p = SsmParams::init(4, 3, 1, r);
    ParamSet ps;
    p.collect(ps, "");
    leaves(ps);
    Tensor u = random({70, 4}, r);
    auto inputs = tensors_of(ps);
    inputs.push_back(u);
    s.composite("s6_forward", [=] { return s6_forward(p, u); }, inputs);
  }
  {
    Ss2dParams p = Ss2dParams::init(3, 2, 1, r);
    ParamSet ps;
    p.collect(ps, "");
    leaves(ps);
    Tensor x = random({3, 4, 3}, r);
    auto inputs = tensors_of(ps);
    inputs.push_back(x);
    s.composite("ss2d", [=] { return ss2d_forward(x, p); }, inputs);
  }
  {
    MdBlockParams p = MdBlockParams::init(4, 2, r);
    ParamSet ps;
    p.collect(ps, "");
    leaves(ps);
    Tensor x = random({4, 4, 4}, r);
    auto inputs = tensors_of(ps);
    inputs.push_back(x);
    s.composite("md_block", [=] { return md_block_forward(x, p); }, inputs);
  }
  {
    Tensor image = random({6, 7, 2}, r);
    Tensor coords = Tensor::zeros({4, 5, 2}, true);
    for (std::size_t i = 0; i < 20; ++i) {
      // Fractional parts stay clear of the integer kinks.
      coords.mutable_data()[2 * i] = static_cast<double>(r.uniform(0, 5.0) > 2.5 ? 4 : 1) + r.uniform(0.1, 0.9);
      coords.mutable_data()[2 * i + 1] = static_cast<double>(i % 4) + r.uniform(0.1, 0.9);
    }
    s.composite("bilinear_sample", [=] { return bilinear_sample(image, coords).image; }, {image, coords});
  }
  const CameraModel cam{12.0, 12.0, 7.5, 5.5, 16, 12};
  auto small_pose = [&](double tx) {
    Tensor w = random({3}, r, -0.02, 0.02), t = random({3}, r, -0.02, 0.02);
    t.mutable_data()[0] = tx;
    return std::pair{w, t};
  };
  {
    Tensor src = random({12, 16, 3}, r, 0.0, 1.0), depth = random({12, 16, 1}, r, 2.0, 4.0);
    auto [w, t] = small_pose(0.3);
    s.composite("synthesize_view",
                [=] { return synthesize_view(src, depth, PoseTransform{axis_angle_to_rotation(w), t}, cam).image; },
                {src, depth, w, t});
  }
  {
    Tensor a = random({6, 7, 3}, r, 0.0, 1.0), b = random({6, 7, 3}, r, 0.0, 1.0);
    s.composite("ssim", [=] { return ssim(a, b); }, {a, b});
    s.composite("photometric_error", [=] { return photometric_error(a, b); }, {a, b});
    Tensor disp = random({6, 7, 1}, r, 0.1, 0.9);
    s.composite("smoothness", [=] { return smoothness_loss(disp, a); }, {disp, a});
  }
  {
    Tensor target = random({12, 16, 3}, r, 0.0, 1.0);
    std::vector<Tensor> sources{random({12, 16, 3}, r, 0.0, 1.0), random({12, 16, 3}, r, 0.0, 1.0)};
    for (auto& t : sources) t.set_requires_grad(false);
    target.set_requires_grad(false);
    std::vector<Tensor> up, native, inputs;
    for (std::size_t sc = 0; sc < 2; ++sc) {
      const std::size_t f = std::size_t{1} << sc;
      native.push_back(random({12 / f, 16 / f, 1}, r, 0.2, 0.8));
      inputs.push_back(native.back());
    }
    auto [w0, t0] = small_pose(0.2);
    auto [w1, t1] = small_pose(-0.2);
    for (auto* t : {&w0, &t0, &w1, &t1}) inputs.push_back(*t);
    s.composite("total_loss",
                [=] {
                  std::vector<Tensor> ups;
                  for (const auto& d : native) ups.push_back(upsample_bilinear(d, 12, 16));
                  const std::vector<PoseTransform> poses{{axis_angle_to_rotation(w0), t0},
                                                         {axis_angle_to_rotation(w1), t1}};
                  return total_loss_from_disparities(target, sources, ups, native, poses, cam, 0.1, 100.0).total;
                },
                inputs);
  }
}

}  // namespace

std::vector<GradcheckReport> run_gradient_suites(std::uint64_t seed) {
  Suite s(seed);
  primitive_suites(s);
  composite_suites(s);
  return s.reports;
}

ScanCheckReport run_scan_check(std::uint64_t seed_begin, std::uint64_t seed_end, std::size_t cases_per_seed) {
  ScanCheckReport report;
  for (std::uint64_t seed = seed_begin; seed < seed_end; ++seed) {
    Rng rng(seed);
    for (std::size_t k = 0; k < cases_per_seed; ++k) {
      const auto len = static_cast<std::size_t>(rng.uniform(1, 258));  // 1..257
      const auto d = static_cast<std::size_t>(rng.uniform(1, 9));
      const auto n = static_cast<std::size_t>(rng.uniform(1, 17));
      std::vector<double> delta(len * d), a(d * n), b(len * n), c(len * n), skip(d), u(len * d);
      for (auto& v : delta) v = std::log1p(std::exp(rng.normal(-1.0, 1.5)));
      for (auto& v : a) v = -std::exp(rng.normal(0.0, 1.0));
      for (auto* vec : {&b, &c, &skip, &u})
        for (auto& v : *vec) v = rng.normal();
      const DiscreteSsm ssm = discretize(delta, a, b, c, skip, len, d, n);
      const auto block = static_cast<std::size_t>(rng.uniform(1, 130));
      const auto seq = scan_sequential(ssm, u);
      const auto par = scan_parallel(ssm, u, block);
      for (std::size_t i = 0; i < seq.size(); ++i) report.max_abs_diff = std::max(report.max_abs_diff, std::abs(seq[i] - par[i]));
      ++report.cases;
    }
  }
  return report;
}

}  // namespace mdepth
