#include <benchmark/benchmark.h>

#include "hdk/blockgraph.hpp"
#include "hdk/cost.hpp"
#include "hdk/loss.hpp"
#include "hdk/model.hpp"
#include "hdk/netspec.hpp"
#include "hdk/ops.hpp"
#include "hdk/postproc.hpp"
#include "hdk/rng.hpp"

using namespace hdk;

namespace {

Tensor random_tensor(Tensor::Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (float& v : t.values()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

}  // namespace

// args: channels, side, kernel
static void BM_Conv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int side = static_cast<int>(state.range(1));
  const int k = static_cast<int>(state.range(2));
  const Tensor x = random_tensor({1, c, side, side}, 1);
  const Tensor w = random_tensor({c, c, k, k}, 2);
  for (auto _ : state) {
    Tensor y = engine::conv2d(x, w, nullptr, {1, k / 2, 1});
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t{c} * c * k * k * side * side);
}
BENCHMARK(BM_Conv2d)
    ->Args({32, 64, 3})
    ->Args({64, 64, 3})
    ->Args({128, 32, 3})
    ->Args({128, 64, 1})
    ->Unit(benchmark::kMillisecond);

static void BM_BuildBlock(benchmark::State& state) {
  graph::BlockSpec spec;
  spec.depth = static_cast<int>(state.range(0));
  spec.growth = 16;
  for (auto _ : state) {
    auto g = graph::build_block(spec, 64);
    benchmark::DoNotOptimize(g.block_out_channels);
  }
}
BENCHMARK(BM_BuildBlock)->Arg(9)->Arg(15)->Arg(24);

static void BM_AnalyzeDefault(benchmark::State& state) {
  const auto net = graph::load_netspec_file(graph::resolve_config("hardnetv2-53"));
  for (auto _ : state) {
    auto r = graph::analyze(net, {1, 3, 512, 512});
    benchmark::DoNotOptimize(r.totals.macs);
  }
}
BENCHMARK(BM_AnalyzeDefault);

static void BM_Forward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto net = graph::load_netspec_file(graph::resolve_config("hardnetv2-53"));
  const auto w = engine::init_weights(net, 0);
  const engine::Model model(net);
  const Tensor img = random_tensor({1, 3, side, side}, 3);
  for (auto _ : state) {
    auto out = model.forward(w, img);
    benchmark::DoNotOptimize(out.main.data());
  }
}
BENCHMARK(BM_Forward)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond)->Iterations(3);

static void BM_FillHoles(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  BinaryMask m(side, side);
  Rng rng(4);
  for (auto& v : m.data) v = rng.bernoulli(0.45) ? 1 : 0;
  for (auto _ : state) {
    auto f = post::fill_holes(m);
    benchmark::DoNotOptimize(f.data.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t{side} * side);
}
BENCHMARK(BM_FillHoles)->Arg(64)->Arg(512);

static void BM_CompositeLoss(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  Rng rng(5);
  loss::LossInputs in;
  in.g = BinaryMask(side, side);
  for (auto& v : in.g.data) v = rng.bernoulli(0.3) ? 1 : 0;
  auto logits = [&] {
    loss::Map m(side, side);
    for (auto& v : m.data) v = rng.uniform(-3, 3);
    return m;
  };
  in.main = logits();
  in.deep = {logits(), logits()};
  in.boundary = logits();
  const auto all = loss::parse_enable("d1,d2,b");
  for (auto _ : state) {
    auto r = loss::composite_loss(in, all);
    benchmark::DoNotOptimize(r.total);
  }
}
BENCHMARK(BM_CompositeLoss)->Arg(64)->Arg(512);

BENCHMARK_MAIN();
