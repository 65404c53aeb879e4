// Serial reference kernels against their OpenMP counterparts, and exact
// against screened top-k on planted data.

#include <benchmark/benchmark.h>

#include "l2s/screening.hpp"
#include "l2s/softmax.hpp"
#include "l2s/synth.hpp"
#include "l2s/tensor.hpp"
#include "l2s/train.hpp"

namespace {

using namespace l2s;

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  DenseMatrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

DenseVector random_vector(std::size_t len, std::uint64_t seed) {
  Rng rng(seed);
  DenseVector v(len);
  for (std::size_t i = 0; i < len; ++i) v[i] = rng.normal();
  return v;
}

SoftmaxLayer random_layer(std::size_t vocab, std::size_t dim) {
  return SoftmaxLayer(random_matrix(vocab, dim, 1), random_vector(vocab, 2));
}

void BM_MatvecSerial(benchmark::State& state) {
  const DenseMatrix m = random_matrix(static_cast<std::size_t>(state.range(0)), 64, 1);
  const DenseVector v = random_vector(64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matvec_serial(m, v));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MatvecParallel(benchmark::State& state) {
  const DenseMatrix m = random_matrix(static_cast<std::size_t>(state.range(0)), 64, 1);
  const DenseVector v = random_vector(64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matvec(m, v));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MatmulNtSerial(benchmark::State& state) {
  const DenseMatrix a = random_matrix(static_cast<std::size_t>(state.range(0)), 64, 1);
  const DenseMatrix b = random_matrix(20, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul_nt_serial(a, b));
}

void BM_MatmulNtParallel(benchmark::State& state) {
  const DenseMatrix a = random_matrix(static_cast<std::size_t>(state.range(0)), 64, 1);
  const DenseMatrix b = random_matrix(20, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul_nt(a, b));
}

void BM_LabelContextsSerial(benchmark::State& state) {
  const SoftmaxLayer layer = random_layer(10000, 64);
  const ContextSet ctx(random_matrix(static_cast<std::size_t>(state.range(0)), 64, 3));
  for (auto _ : state) benchmark::DoNotOptimize(label_contexts_serial(layer, ctx));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_LabelContextsParallel(benchmark::State& state) {
  const SoftmaxLayer layer = random_layer(10000, 64);
  const ContextSet ctx(random_matrix(static_cast<std::size_t>(state.range(0)), 64, 3));
  for (auto _ : state) benchmark::DoNotOptimize(label_contexts(layer, ctx));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_AssignClustersSerial(benchmark::State& state) {
  const DenseMatrix w = random_matrix(20, 64, 1);
  const ContextSet ctx(random_matrix(static_cast<std::size_t>(state.range(0)), 64, 3));
  for (auto _ : state) benchmark::DoNotOptimize(assign_clusters_serial(w, ctx));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_AssignClustersParallel(benchmark::State& state) {
  const DenseMatrix w = random_matrix(20, 64, 1);
  const ContextSet ctx(random_matrix(static_cast<std::size_t>(state.range(0)), 64, 3));
  for (auto _ : state) benchmark::DoNotOptimize(assign_clusters(w, ctx));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

// Planted data and a model built from the planted subsets; training is
// not what this file measures.
struct Planted {
  PlantedData data;
  ScreeningModel model;
  Planted() {
    SynthSpec spec;
    spec.contexts = 2000;
    data = generate_synthetic(spec);
    std::vector<CandidateSet> sets;
    for (const auto& s : data.subsets) sets.emplace_back(data.layer.vocab_size(), s);
    model = ScreeningModel(data.centroids, std::move(sets), static_cast<double>(spec.subset_size));
  }
};

const Planted& planted() {
  static const Planted p;
  return p;
}

void BM_ExactTopK(benchmark::State& state) {
  const Planted& p = planted();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(exact_topk(p.data.layer, p.data.contexts[i], 5));
    i = (i + 1) % p.data.contexts.size();
  }
}

void BM_ScreenedTopK(benchmark::State& state) {
  const Planted& p = planted();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(screened_topk(p.model, p.data.layer, p.data.contexts[i], 5));
    i = (i + 1) % p.data.contexts.size();
  }
}

BENCHMARK(BM_MatvecSerial)->Arg(10000)->Arg(100000);
BENCHMARK(BM_MatvecParallel)->Arg(10000)->Arg(100000);
BENCHMARK(BM_MatmulNtSerial)->Arg(20000);
BENCHMARK(BM_MatmulNtParallel)->Arg(20000);
BENCHMARK(BM_LabelContextsSerial)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LabelContextsParallel)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AssignClustersSerial)->Arg(20000);
BENCHMARK(BM_AssignClustersParallel)->Arg(20000);
BENCHMARK(BM_ExactTopK)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ScreenedTopK)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
