#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "laneseg/augment.hpp"
#include "laneseg/losses.hpp"
#include "laneseg/metrics.hpp"
#include "laneseg/models.hpp"
#include "laneseg/synth.hpp"

using namespace laneseg;

namespace {

cv::Mat random_mask(int rows, int cols) {
  cv::Mat m(rows, cols, CV_8UC1);
  cv::randu(m, 0, 2);
  return m;
}

void BM_Confusion(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  cv::theRNG().state = 1;
  const cv::Mat p = random_mask(side, side), t = random_mask(side, side);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::confusion(p, t));
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_Confusion)->Arg(64)->Arg(256)->Arg(1024);

void BM_Augment(benchmark::State& state) {
  const Sample s = synth::generate_scene(3, synth::SceneParams{}).sample;
  const AugmentationSpec spec = default_augmentation_spec();
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(augment(s, spec, seed++));
}
BENCHMARK(BM_Augment)->Unit(benchmark::kMillisecond);

void BM_SynthScene(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(synth::generate_scene(seed++, synth::SceneParams{}));
}
BENCHMARK(BM_SynthScene)->Unit(benchmark::kMillisecond);

void BM_UnetForward(benchmark::State& state) {
  at::set_num_threads(1);
  models::ModelConfig c = models::ModelConfig::defaults(models::Arch::kUnetAttention);
  c.input_height = 64;
  c.input_width = 80;
  c.base_width = static_cast<int>(state.range(0));
  const auto model = models::build_model(c);
  model.net().eval();
  const torch::Tensor x = torch::rand({1, 64, 80, 3});
  const torch::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x));
}
BENCHMARK(BM_UnetForward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_DiceLossBackward(benchmark::State& state) {
  torch::manual_seed(0);
  const torch::Tensor target = (torch::rand({8, 256, 320}) < 0.05).to(torch::kFloat);
  const torch::Tensor base = torch::rand({8, 256, 320});
  for (auto _ : state) {
    torch::Tensor p = base.clone().requires_grad_(true);
    losses::binary_dice_loss(p, target).tensor.backward();
    benchmark::DoNotOptimize(p.grad());
  }
}
BENCHMARK(BM_DiceLossBackward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
