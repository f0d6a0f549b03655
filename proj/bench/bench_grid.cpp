// Serial vs OpenMP evaluation over lambda grids.
#include <benchmark/benchmark.h>

#include "qtree/char_fn.hpp"
#include "qtree/sample_trees.hpp"

using namespace qtree;

namespace {

std::vector<SpectralParameter> rho_grid(int n) {
  std::vector<SpectralParameter> g;
  for (int i = 0; i < n; ++i) g.push_back(SpectralParameter::from_rho(0.5 + 20.0 * i / n));
  return g;
}

std::vector<cplx> lambda_grid(int n) {
  std::vector<cplx> g;
  for (const auto& sp : rho_grid(n)) g.push_back(sp.lambda);
  return g;
}

const Edge kEdge{1, 1, 2, 1.0};
const Potential kGrid = Potential::grid({0.0, 0.8, -0.4, 1.2, 0.3, -0.6, 0.1}, 1);

void BM_PairGridSerial(benchmark::State& st) {
  auto g = rho_grid(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(fundamental_pair_grid_serial(kEdge, kGrid, g));
}

void BM_PairGridParallel(benchmark::State& st) {
  auto g = rho_grid(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(fundamental_pair_grid(kEdge, kGrid, g));
}

ProblemSpec tree_problem() {
  auto t = five_edge_tree();
  PotentialSet q;
  for (const auto& e : t.edges()) q[e.id] = Potential::polynomial({0.3, -0.5, 0.8});
  return dirichlet_problem(t, q);
}

void BM_CharFnSerial(benchmark::State& st) {
  auto f = characteristic_function(tree_problem());
  auto g = lambda_grid(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(f.evaluate_serial(g));
}

void BM_CharFnParallel(benchmark::State& st) {
  auto f = characteristic_function(tree_problem());
  auto g = lambda_grid(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(f.evaluate(g));
}

}  // namespace

BENCHMARK(BM_PairGridSerial)->Arg(64)->Arg(256);
BENCHMARK(BM_PairGridParallel)->Arg(64)->Arg(256);
BENCHMARK(BM_CharFnSerial)->Arg(64)->Arg(256);
BENCHMARK(BM_CharFnParallel)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
