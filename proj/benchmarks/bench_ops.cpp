#include <benchmark/benchmark.h>

#include <random>

#include "deeplight/dataset.hpp"
#include "deeplight/harness.hpp"
#include "deeplight/metrics.hpp"
#include "deeplight/model.hpp"
#include "deeplight/objective.hpp"

namespace {

dl::Tensor noise(dl::Shape shape, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<dl::Scalar> v(static_cast<std::size_t>(dl::numel_of(shape)));
  for (auto& x : v) x = u(rng);
  return dl::Tensor::from(std::move(shape), std::move(v), grad);
}

dl::Raster noise_raster(int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  dl::Raster r(1, side, side);
  for (auto& x : r.data) x = u(rng);
  return r;
}

// args: channels, side
void BM_Conv3x3Forward(benchmark::State& state) {
  const auto c = state.range(0), s = state.range(1);
  auto x = noise({2, c, s, s}, 1);
  auto w = noise({c, c, 3, 3}, 2);
  auto b = noise({c}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(dl::conv2d(x, w, b, 1, 1).data().data());
  state.SetItemsProcessed(state.iterations() * 2 * c * c * 9 * s * s);
}
BENCHMARK(BM_Conv3x3Forward)->Args({32, 32})->Args({32, 64})->Args({32, 128})->Unit(benchmark::kMillisecond);

void BM_Conv3x3Backward(benchmark::State& state) {
  const auto c = state.range(0), s = state.range(1);
  auto x = noise({2, c, s, s}, 1, true);
  auto w = noise({c, c, 3, 3}, 2, true);
  auto b = noise({c}, 3, true);
  for (auto _ : state) {
    dl::backward(dl::mean(dl::conv2d(x, w, b, 1, 1)));
    w.zero_grad();
    b.zero_grad();
    x.zero_grad();
  }
}
BENCHMARK(BM_Conv3x3Backward)->Args({32, 32})->Args({32, 64})->Unit(benchmark::kMillisecond);

void BM_Conv1x1Forward(benchmark::State& state) {
  const auto s = state.range(0);
  auto x = noise({2, 32, s, s}, 1);
  auto w = noise({128, 32, 1, 1}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(dl::conv2d(x, w, std::nullopt, 1, 0).data().data());
}
BENCHMARK(BM_Conv1x1Forward)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_DeformableForward(benchmark::State& state) {
  const auto s = state.range(0);
  auto x = noise({2, 1, s, s}, 1);
  auto off = noise({2, 18, s, s}, 2);
  auto w = noise({32, 1, 3, 3}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(dl::deformable_conv2d(x, off, w, std::nullopt).data().data());
}
BENCHMARK(BM_DeformableForward)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_GridSample(benchmark::State& state) {
  const auto s = state.range(0);
  auto x = noise({2, 32, s, s}, 1);
  auto theta = dl::Tensor::from({2, 2, 3}, {1.0f, 0.05f, 0.02f, -0.03f, 0.98f, 0.01f,
                                           0.97f, 0.0f, -0.04f, 0.02f, 1.01f, 0.03f});
  auto grid = dl::affine_grid(theta, s, s);
  for (auto _ : state) benchmark::DoNotOptimize(dl::grid_sample(x, grid).data().data());
}
BENCHMARK(BM_GridSample)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_PixelShuffle(benchmark::State& state) {
  const auto s = state.range(0);
  auto x = noise({2, 128, s, s}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(dl::pixel_shuffle(x, 2).data().data());
}
BENCHMARK(BM_PixelShuffle)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_TrainStep(benchmark::State& state) {
  dl::ModelConfig cfg;
  cfg.lr_h = cfg.lr_w = static_cast<int>(state.range(0));
  dl::ModelState model = dl::build(cfg, 0);
  for (auto& [name, p] : model.params()) p.set_requires_grad(true);
  dl::Adam adam;
  dl::SceneSpec spec;
  spec.hr_size = cfg.hr_h();
  const dl::ModalityBundle a = dl::generate_scene(spec);
  spec.seed = 1;
  const dl::ModalityBundle b = dl::generate_scene(spec);
  const dl::Batch batch = dl::make_batch({&a, &b});
  for (auto _ : state) {
    const auto out = dl::forward(model, batch.n_l, batch.m_dmo, batch.m_dem);
    const auto terms = dl::composite(out, batch.n_h, batch.m_isp, dl::LossConfig{});
    dl::backward(terms.total);
    adam.step(model.params());
  }
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  const auto p = noise_raster(static_cast<int>(state.range(0)), 1);
  const auto t = noise_raster(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(dl::ssim(p, t).value);
}
BENCHMARK(BM_Ssim)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_Uiqi(benchmark::State& state) {
  const auto p = noise_raster(static_cast<int>(state.range(0)), 1);
  const auto t = noise_raster(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(dl::uiqi(p, t).value);
}
BENCHMARK(BM_Uiqi)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_Piqe(benchmark::State& state) {
  const auto p = noise_raster(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(dl::piqe(p).score);
}
BENCHMARK(BM_Piqe)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_GenerateScene(benchmark::State& state) {
  dl::SceneSpec spec;
  spec.hr_size = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(dl::generate_scene(spec).hr_ntl.data.data());
    ++spec.seed;
  }
}
BENCHMARK(BM_GenerateScene)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
