#include <benchmark/benchmark.h>

#include "iconpeft/adapters.hpp"
#include "iconpeft/conv.hpp"
#include "iconpeft/ops.hpp"
#include "iconpeft/trainer.hpp"
#include "iconpeft/vit.hpp"

using namespace iconpeft;

namespace {

void BM_matmul_f32(benchmark::State& state) {
  const int64_t n = state.range(0);
  Tensor<float> a = Tensor<float>::randn({n, n}, 1);
  Tensor<float> b = Tensor<float>::randn({n, n}, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(matmul(a, b).data_ptr());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_matmul_f32)->Arg(64)->Arg(128)->Arg(256);

void BM_dynamic_conv_f32(benchmark::State& state) {
  const int64_t k = state.range(0);
  Tensor<float> x = Tensor<float>::randn({16, 64, 8, 8}, 3);
  Tensor<float> kk = Tensor<float>::randn({16, 64, k, k}, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d_depthwise_dynamic(x, kk).data_ptr());
  }
}
BENCHMARK(BM_dynamic_conv_f32)->Arg(3)->Arg(5)->Arg(7);

VisionTransformer<float> tiny_model(AdapterKind kind) {
  ViTConfig cfg;  // tiny defaults
  AdapterRecipe recipe;
  recipe.kind = kind;
  return VisionTransformer<float>(cfg, recipe, 42);
}

void BM_forward_tiny(benchmark::State& state) {
  auto model = tiny_model(static_cast<AdapterKind>(state.range(0)));
  Tensor<float> x = Tensor<float>::randn({8, 3, 32, 32}, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.forward(x).data_ptr());
  }
}
BENCHMARK(BM_forward_tiny)
    ->Arg(static_cast<int>(AdapterKind::Frozen))
    ->Arg(static_cast<int>(AdapterKind::Icon))
    ->Arg(static_cast<int>(AdapterKind::AdaptformerParallel));

void BM_train_step_tiny_icon(benchmark::State& state) {
  auto model = tiny_model(AdapterKind::Icon);
  Tensor<float> x = Tensor<float>::randn({8, 3, 32, 32}, 6);
  std::vector<int> labels{0, 1, 2, 3, 4, 5, 6, 7};
  TrainConfig cfg;
  AdamW<float> opt(cfg);
  for (auto _ : state) {
    Tape<float> tape;
    Tensor<float> loss = cross_entropy(model.forward(x), labels);
    tape.backward(loss);
    opt.step(model.registry());
    for (auto& e : model.registry().entries()) {
      if (e.trainable) e.tensor.zero_grad();
    }
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_train_step_tiny_icon);

}  // namespace

BENCHMARK_MAIN();
