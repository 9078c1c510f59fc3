#include <doctest.h>

#include <cmath>
#include <string>

#include "mdepth/gradcheck.hpp"
#include "mdepth/ops.hpp"
#include "mdepth/parallel.hpp"
#include "test_util.hpp"

using namespace mdepth;
using testutil::random;

TEST_CASE("tensor construction and shape bookkeeping") {
  const Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == shape_numel(t.shape()));
  CHECK(t.rank() == 2);
  CHECK(t[4] == 5.0);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(t.item(), ShapeError);
  CHECK(Tensor::scalar(3.5).item() == 3.5);
}

TEST_CASE("unit values of activations and normalization") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(silu(Tensor::scalar(0.0)).item() == 0.0);
  const Tensor c = Tensor::full({5}, 3.25);
  const Tensor ln = layer_norm(c, Tensor::full({5}, 1.0), Tensor::zeros({5}));
  for (double v : ln.data()) CHECK(v == 0.0);
  CHECK(softplus(Tensor::scalar(0.0)).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("broadcasting forward values") {
  const Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor row = Tensor::from({3}, {10, 20, 30});
  const Tensor col = Tensor::from({2, 1}, {100, 200});
  CHECK(add(a, row).data()[5] == 36.0);
  CHECK(mul(a, col).data()[3] == 800.0);
  CHECK(minimum(a, Tensor::from({3}, {2, 2, 2})).data()[2] == 2.0);
}

TEST_CASE("shape mismatch names the op and both shapes") {
  const Tensor a = Tensor::zeros({2, 3}), b = Tensor::zeros({4});
  try {
    (void)add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  CHECK_THROWS_AS(conv2d(Tensor::zeros({4, 4, 2}), Tensor::zeros({3, 3, 3, 1}), {}, 1, 1), ShapeError);
}

TEST_CASE("conv2d, pad and pooling forward values") {
  const Tensor x = Tensor::from({3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor ones = Tensor::full({3, 3, 1, 1}, 1.0);
  const Tensor y = conv2d(x, ones, {}, 1, 1);
  CHECK(y.shape() == Shape{3, 3, 1});
  CHECK(y[4] == 45.0);
  CHECK(y[0] == 1 + 2 + 4 + 5);
  CHECK(conv2d(x, ones, {}, 2, 1).shape() == Shape{2, 2, 1});

  const Tensor r = pad(x, 1, 0, 1, 0, PadMode::kReflect);
  CHECK(r.shape() == Shape{4, 4, 1});
  CHECK(r[0] == 5.0);  // reflected across both edges
  CHECK(r[1] == 4.0);
  const Tensor z = pad(x, 0, 1, 0, 1);
  CHECK(z[15] == 0.0);

  const Tensor p = avg_pool2d(Tensor::from({2, 2, 1}, {1, 2, 3, 6}), 2, 2);
  CHECK(p.item() == 3.0);
}

TEST_CASE("backward of elementary losses") {
  SUBCASE("sum of squares") {
    Tensor x = Tensor::from({3}, {1, 2, 3}, true);
    Tape tape;
    tape.backward(sum(mul(x, x)));
    CHECK(x.grad() == std::vector<double>{2, 4, 6});
  }
  SUBCASE("mean") {
    Tensor x = Tensor::from({4}, {5, -1, 2, 0}, true);
    Tape tape;
    tape.backward(mean(x));
    CHECK(x.grad() == std::vector<double>(4, 0.25));
  }
  SUBCASE("fan-out accumulates contributions of all consumers") {
    Tensor x = Tensor::from({2}, {1.5, -2.0}, true);
    Tape tape;
    tape.backward(sum(add(mul(x, x), mul_scalar(x, 3.0))));
    CHECK(x.grad()[0] == doctest::Approx(2 * 1.5 + 3));
    CHECK(x.grad()[1] == doctest::Approx(2 * -2.0 + 3));
  }
  SUBCASE("untouched leaves have zero grad") {
    Tensor used = Tensor::from({2}, {1, 2}, true), unused = Tensor::from({3}, {1, 2, 3}, true);
    Tape tape;
    tape.backward(sum(used));
    CHECK(unused.grad() == std::vector<double>(3, 0.0));
  }
}

TEST_CASE("backward rejects non-scalar and unrecorded losses") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tape tape;
  const Tensor y = mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
  CHECK_THROWS_AS(tape.backward(Tensor::scalar(1.0)), std::logic_error);
}

TEST_CASE("no recording without a tape, under NoGradGuard, or without grad inputs") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  CHECK_FALSE(mul(x, x).requires_grad());
  Tape tape;
  {
    NoGradGuard guard;
    CHECK_FALSE(mul(x, x).requires_grad());
  }
  CHECK(tape.size() == 0);
  (void)mul(Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4}));
  CHECK(tape.size() == 0);
  CHECK(mul(x, x).requires_grad());
  CHECK(tape.size() == 1);
}

TEST_CASE("tape entries are topologically ordered and replayed in reverse") {
  Rng rng(1);
  Tensor a = random({3, 3}, rng, -1, 1, true), b = random({3}, rng, -1, 1, true);
  Tape tape;
  const Tensor h = silu(add(matmul(a, a), b));
  const Tensor loss = mean(mul(h, sigmoid(h)));
  const auto info = tape.entries_info();
  for (std::size_t k = 0; k < info.size(); ++k) {
    for (const TensorImpl* in : info[k].inputs) {
      for (std::size_t later = k; later < info.size(); ++later) CHECK(info[later].output != in);
    }
  }

  std::vector<int> visits;
  Tensor x = Tensor::scalar(1.0, true);
  Tensor y1 = record_op({x}, Tensor::scalar(2.0), [&](std::span<const double>) { visits.push_back(1); });
  Tensor y2 = record_op({y1}, Tensor::scalar(3.0), [&, y1](std::span<const double>) {
    visits.push_back(2);
    Tensor(y1).mutable_grad()[0] += 1.0;
  });
  Tensor y3 = record_op({y2}, Tensor::scalar(4.0), [&, y2](std::span<const double>) {
    visits.push_back(3);
    Tensor(y2).mutable_grad()[0] += 1.0;
  });
  tape.backward(y3);
  CHECK(visits == std::vector<int>{3, 2, 1});
  CHECK(tape.size() == 0);  // discarded after backward
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(2);
  Tensor x = random({4, 3}, rng, -1, 1, true);
  auto f = [&] { return sum(mul(exp(x), x)); };
  auto g = [&] { return mean(square(silu(x))); };
  auto grad_of = [&](auto&& build) {
    x.zero_grad();
    Tape tape;
    tape.backward(build());
    return x.grad();
  };
  const double a = 0.7, b = -2.5;
  const auto gf = grad_of(f), gg = grad_of(g);
  const auto gc = grad_of([&] { return add(mul_scalar(f(), a), mul_scalar(g(), b)); });
  for (std::size_t i = 0; i < gc.size(); ++i) CHECK(std::abs(gc[i] - (a * gf[i] + b * gg[i])) < 1e-12);
}

TEST_CASE("forward and backward are bit-identical across runs") {
  set_thread_override(1);
  auto run = [] {
    Rng rng(9);
    Tensor x = random({6, 6, 4}, rng, -1, 1, true), w = random({3, 3, 4, 5}, rng, -1, 1, true);
    Tape tape;
    const Tensor y = mean(silu(conv2d(x, w, {}, 1, 1)));
    tape.backward(y);
    std::vector<double> out{y.item()};
    for (double v : w.grad()) out.push_back(v);
    return out;
  };
  CHECK(run() == run());
  set_thread_override(0);
}

TEST_CASE("every primitive passes the finite-difference check") {
  for (const auto& r : run_gradient_suites(0)) {
    if (r.tolerance != kPrimitiveTolerance) continue;
    INFO(r.name << " max rel err " << r.max_rel_error);
    CHECK(r.passed());
  }
}

TEST_CASE("gradcheck detects a wrong backward") {
  Tensor x = Tensor::from({3}, {0.3, -0.2, 0.9}, true);
  auto broken = [x] {
    Tensor y = Tensor::from({3}, {x[0] * x[0], x[1] * x[1], x[2] * x[2]});
    return record_op({x}, y, [x](std::span<const double> g) {
      auto& gx = x.impl()->ensure_grad();
      for (std::size_t i = 0; i < 3; ++i) gx[i] += g[i] * x[i];  // missing factor 2
    });
  };
  CHECK(gradcheck(broken, {x}) > 1e-3);
}

TEST_CASE("parallel_for covers every index once") {
  set_thread_override(3);
  std::vector<int> hits(101, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  set_thread_override(0);
}
