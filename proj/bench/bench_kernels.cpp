// Serial reference kernels against the OpenMP kernels, plus one full
// training batch at the memorization dimensions.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "opatt/kernels.hpp"
#include "opatt/synth.hpp"
#include "opatt/trainer.hpp"

namespace {

std::vector<float> random_matrix(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> d(0.f, 1.f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <void (*Kernel)(std::size_t, std::size_t, std::size_t, std::span<const float>, std::span<const float>,
                         std::span<float>)>
void BM_gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const auto a = random_matrix(m * k, 1), b = random_matrix(k * n, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    Kernel(m, n, k, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * m * n * k));
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({512, 1, 512});     // matrix-vector, decoder step
  b->Args({1536, 1, 768});    // GRU input projection
  b->Args({512, 64, 512});    // key projection over 64 records
  b->Args({256, 256, 256});
}

BENCHMARK(BM_gemm<opatt::kernels::serial::gemm_nn<float>>)->Name("gemm_nn/serial")->Apply(shapes);
BENCHMARK(BM_gemm<opatt::kernels::parallel::gemm_nn<float>>)->Name("gemm_nn/parallel")->Apply(shapes);
BENCHMARK(BM_gemm<opatt::kernels::serial::gemm_nt<float>>)->Name("gemm_nt/serial")->Apply(shapes);
BENCHMARK(BM_gemm<opatt::kernels::parallel::gemm_nt<float>>)->Name("gemm_nt/parallel")->Apply(shapes);
BENCHMARK(BM_gemm<opatt::kernels::serial::gemm_tn<float>>)->Name("gemm_tn/serial")->Apply(shapes);
BENCHMARK(BM_gemm<opatt::kernels::parallel::gemm_tn<float>>)->Name("gemm_tn/parallel")->Apply(shapes);

void BM_train_batch(benchmark::State& state) {
  opatt::SynthConfig sc;
  sc.count = 32;
  const auto corpus = opatt::synthesize(sc);
  const auto vocab = opatt::build_vocab(corpus.examples, 1);
  const auto inputs = opatt::prepare_inputs(corpus.examples, vocab);
  opatt::ModelConfig mc;
  mc.word_dim = 64;
  mc.row_dim = 16;
  mc.dec_hidden = 128;
  mc.enc_hidden = 64;
  mc.attn_hidden = 128;
  opatt::Model<float> model(mc, vocab.size(), vocab.field_count());
  model.init(1);
  opatt::GradStore<float> grads(model.params());
  std::vector<const opatt::ModelInput*> batch;
  for (const auto& in : inputs) batch.push_back(&in);
  for (auto _ : state) benchmark::DoNotOptimize(opatt::batch_loss<float>(model, batch, &grads));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * batch.size()));
}
BENCHMARK(BM_train_batch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
