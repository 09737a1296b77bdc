#include <benchmark/benchmark.h>

#include <vector>

#include "hman/hmrnn_cell.hpp"
#include "hman/model.hpp"
#include "hman/rng.hpp"
#include "hman/stochastic.hpp"
#include "hman/tensor.hpp"

using namespace hman;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, bool requires_grad = false) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return Tensor::from(shape, std::move(v), requires_grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  for (auto _ : state) {
    Tensor a = random_tensor({n, n}, rng, true), b = random_tensor({n, n}, rng, true);
    Tensor loss = sum(matmul(a, b));
    loss.backward();
    benchmark::DoNotOptimize(a.grad());
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(32)->Arg(64);

void BM_GumbelSoftmax(benchmark::State& state) {
  Rng rng(3);
  const Tensor logits = random_tensor({64, 49}, rng);
  NoGradGuard no_grad;
  for (auto _ : state) {
    const GumbelNoise g = sample_gumbel(logits.shape(), rng);
    benchmark::DoNotOptimize(gumbel_softmax(logits, g, Temperature::constant(0.3)));
  }
}
BENCHMARK(BM_GumbelSoftmax);

void BM_CellStep(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const std::size_t batch = 32;
  Rng rng(4);
  const LayerParams params = LayerParams::init(hidden, hidden, hidden, rng);
  const LayerState prev{random_tensor({batch, hidden}, rng), random_tensor({batch, hidden}, rng),
                        Tensor::zeros({batch, 1})};
  const Tensor below = random_tensor({batch, hidden}, rng), above = random_tensor({batch, hidden}, rng);
  const Tensor z_below = Tensor::full({batch, 1}, 1.0);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(step(prev, below, z_below, &above, params, {}, rng));
}
BENCHMARK(BM_CellStep)->Arg(32)->Arg(128);

ModelConfig bench_config(AttentionMode mode) {
  ModelConfig c;
  c.hidden = 32;
  c.grid = 4;
  c.depth = 16;
  c.classes = 8;
  c.attention = mode;
  return c;
}

std::vector<Tensor> bench_clips(std::size_t batch, std::size_t frames, Rng& rng) {
  std::vector<Tensor> clips;
  for (std::size_t i = 0; i < batch; ++i) clips.push_back(random_tensor({frames, 16, 16}, rng));
  return clips;
}

void BM_ModelForwardEval(benchmark::State& state) {
  const HmanModel model(bench_config(AttentionMode::Soft), 5);
  Rng rng(5);
  const auto clips = bench_clips(32, 30, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(clips, rng, Phase::Eval));
}
BENCHMARK(BM_ModelForwardEval)->Unit(benchmark::kMillisecond);

void BM_ModelForwardBackward(benchmark::State& state) {
  const auto mode = static_cast<AttentionMode>(state.range(0));
  HmanModel model(bench_config(mode), 6);
  Rng rng(6);
  const auto clips = bench_clips(32, 30, rng);
  std::vector<std::size_t> labels(clips.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 8;
  for (auto _ : state) {
    model.zero_grad();
    const ForwardResult r = model.forward(clips, rng, Phase::Train);
    Tensor loss = sequence_loss(r, labels).loss;
    loss.backward();
  }
  state.SetLabel(to_string(mode));
}
BENCHMARK(BM_ModelForwardBackward)
    ->Arg(static_cast<int>(AttentionMode::Soft))
    ->Arg(static_cast<int>(AttentionMode::Reinforce))
    ->Arg(static_cast<int>(AttentionMode::GumbelAdaptive))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
