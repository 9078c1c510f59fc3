#include <benchmark/benchmark.h>

#include "mdepth/losses.hpp"
#include "mdepth/md_block.hpp"
#include "mdepth/network.hpp"
#include "mdepth/ops.hpp"
#include "mdepth/parallel.hpp"
#include "mdepth/ssm.hpp"
#include "mdepth/synthetic.hpp"

using namespace mdepth;

namespace {

DiscreteSsm random_system(std::size_t length, std::size_t channels, std::size_t state, std::vector<double>& u) {
  Rng rng(0);
  DiscreteSsm s;
  s.length = length;
  s.channels = channels;
  s.state = state;
  for (std::size_t i = 0; i < length * channels * state; ++i) {
    s.a_bar.push_back(rng.uniform(0.5, 1.0));
    s.b_bar.push_back(rng.uniform(-0.1, 0.1));
  }
  for (std::size_t i = 0; i < length * state; ++i) s.c.push_back(rng.uniform(-1, 1));
  s.d.assign(channels, 1.0);
  u.resize(length * channels);
  for (auto& v : u) v = rng.uniform(-1, 1);
  return s;
}

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(0, 1);
  return Tensor::from(std::move(shape), std::move(v));
}

void BM_ScanSequential(benchmark::State& state) {
  std::vector<double> u;
  const DiscreteSsm s = random_system(static_cast<std::size_t>(state.range(0)), 16, 16, u);
  for (auto _ : state) benchmark::DoNotOptimize(scan_sequential(s, u));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ScanParallel(benchmark::State& state) {
  std::vector<double> u;
  const DiscreteSsm s = random_system(static_cast<std::size_t>(state.range(0)), 16, 16, u);
  for (auto _ : state) benchmark::DoNotOptimize(scan_parallel(s, u));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MdBlockForward(benchmark::State& state) {
  Rng rng(1);
  const auto side = static_cast<std::size_t>(state.range(0));
  const MdBlockParams p = MdBlockParams::init(8, 4, rng);
  const Tensor x = random_tensor({side, side, 8}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(md_block_forward(x, p));
}

void BM_DepthNetForward(benchmark::State& state) {
  const DepthNet net(NetConfig::desk(), 0);
  const Tensor img = random_tensor({64, 64, 3}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(img));
}

void BM_DepthNetForwardBackward(benchmark::State& state) {
  const DepthNet net(NetConfig::desk(), 0);
  const ParamSet params = net.parameters();
  for (const auto& p : params.items()) p.tensor.impl()->requires_grad = true;
  const Tensor img = random_tensor({64, 64, 3}, 3);
  for (auto _ : state) {
    Tape tape;
    const DepthOutputs out = net.forward(img);
    tape.backward(mean(out.disparities[0]));
  }
}

void BM_TotalLossGroundTruth(benchmark::State& state) {
  const SyntheticScene scene = make_synthetic_scene({});
  const FrameTriplet t = make_triplets(scene.sequence).at(3);
  std::vector<double> d;
  for (double z : t.depth.data()) d.push_back((1.0 / z - 0.01) / (10.0 - 0.01));
  const std::vector<Tensor> disp(4, Tensor::from(t.depth.shape(), d));
  for (auto _ : state) {
    benchmark::DoNotOptimize(total_loss_from_disparities(t.frames[1], {t.frames[0], t.frames[2]}, disp, disp,
                                                         {(*t.poses)[0], (*t.poses)[1]}, t.camera, 0.1, 100.0));
  }
}

}  // namespace

BENCHMARK(BM_ScanSequential)->Arg(256)->Arg(4096);
BENCHMARK(BM_ScanParallel)->Arg(256)->Arg(4096);
BENCHMARK(BM_MdBlockForward)->Arg(8)->Arg(16);
BENCHMARK(BM_DepthNetForward)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DepthNetForwardBackward)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TotalLossGroundTruth)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
