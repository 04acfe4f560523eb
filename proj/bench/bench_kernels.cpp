// Reference vs OpenMP kernels and full model forward passes.
#include <benchmark/benchmark.h>

#include <random>

#include "rumpl/kernels.hpp"
#include "rumpl/model.hpp"

using namespace rumpl;
using kernels::Exec;

namespace {

Mat<float> random_mat(Eigen::Index rows, Eigen::Index cols) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Mat<float> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Exec exec_arg(const benchmark::State& state) { return state.range(0) == 0 ? Exec::kReference : Exec::kParallel; }

// 32 people × 17 joints × 5 views at D = 256.
constexpr int kTokens = 32 * 17 * 6;
constexpr int kDim = 256;

void BM_Attention(benchmark::State& state) {
  const Mat<float> qkv = random_mat(kTokens, 3 * kDim);
  Mat<float> out;
  std::vector<float> probs;
  for (auto _ : state) {
    kernels::attention_forward<float>(exec_arg(state), qkv, 6, 8, nullptr, out, probs);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_LayerNorm(benchmark::State& state) {
  const Mat<float> x = random_mat(kTokens, kDim);
  const RowVec<float> gamma = RowVec<float>::Ones(kDim), beta = RowVec<float>::Zero(kDim);
  Mat<float> y, xhat;
  Vec<float> rstd;
  for (auto _ : state) {
    kernels::layer_norm_forward<float>(exec_arg(state), x, gamma, beta, 1e-6f, y, xhat, rstd);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_Gelu(benchmark::State& state) {
  const Mat<float> u = random_mat(kTokens, 4 * kDim);
  Mat<float> g;
  for (auto _ : state) {
    kernels::gelu_forward<float>(exec_arg(state), u, g);
    benchmark::DoNotOptimize(g.data());
  }
}

void BM_ModelForward(benchmark::State& state) {
  ModelConfig c;
  c.dim = 64;
  c.layers = 2;
  c.heads = 4;
  auto model = make_model<float>(c);
  model->init(1);
  dynamic_cast<Rumpl<float>&>(*model).exec = exec_arg(state);
  SceneConfig scene;
  scene.min_views = scene.max_views = 5;
  const auto samples = generate_dataset(scene, PoseLibrary::procedural(), NoiseModel{}, 16, 2);
  std::vector<ViewList> items;
  for (const auto& s : samples) items.push_back(s.views);
  const auto batch = encode_batch<float>(items, c);
  for (auto _ : state) {
    const Mat<float> y = model->forward(batch);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(items.size()));
}

}  // namespace

// Argument 0 = serial reference, 1 = OpenMP.
BENCHMARK(BM_Attention)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LayerNorm)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Gelu)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ModelForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
