#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "bridgevi/advi.hpp"
#include "bridgevi/basis.hpp"
#include "bridgevi/mcmc.hpp"
#include "bridgevi/model.hpp"
#include "bridgevi/simulate.hpp"

using namespace bridgevi;

namespace {

struct Fixture {
  Scenario1Data data;
  Model model;
  Eigen::VectorXd y;
};

Fixture scaled(std::size_t n) {
  Rng rng(3);
  Scenario1Data data = simulate_scaled(n, Scenario1Spec{}, rng);
  ModelSpec spec;
  spec.blocks.push_back({build_design({data.x.data(), n}, data.basis), true});
  Eigen::VectorXd y = data.y.front();
  return {std::move(data), Model(spec), std::move(y)};
}

std::vector<Eigen::Index> first_rows(std::size_t k) {
  std::vector<Eigen::Index> rows(k);
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  return rows;
}

}  // namespace

static void BM_BsplineRow(benchmark::State& st) {
  const BasisSpec spec = BasisSpec::bspline(uniform_knots(-0.3, 1.3, 0.01), static_cast<int>(st.range(0)));
  double x = 0.0;
  for (auto _ : st) {
    benchmark::DoNotOptimize(bspline_row(x, spec));
    x += 0.618034;
    if (x > 1.0) x -= 1.0;
  }
}
BENCHMARK(BM_BsplineRow)->DenseRange(0, 5);

static void BM_BuildDesign(benchmark::State& st) {
  const auto n = static_cast<Eigen::Index>(st.range(0));
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(n, 0.0, 1.0);
  const BasisSpec spec = scenario1_basis(Scenario1Spec{});
  for (auto _ : st) benchmark::DoNotOptimize(build_design({x.data(), static_cast<std::size_t>(n)}, spec));
  st.SetItemsProcessed(st.iterations() * n);
}
BENCHMARK(BM_BuildDesign)->Arg(1000)->Arg(100000);

static void BM_MakeBatch(benchmark::State& st) {
  const Fixture f = scaled(100000);
  const auto rows = first_rows(static_cast<std::size_t>(st.range(0)));
  const bool gram = st.range(1) != 0;
  for (auto _ : st) benchmark::DoNotOptimize(f.model.make_batch(f.y, rows, 100, gram));
}
BENCHMARK(BM_MakeBatch)->Args({1000, 0})->Args({1000, 1})->Args({10000, 0})->Args({10000, 1});

static void BM_ElboGradient(benchmark::State& st) {
  const Fixture f = scaled(10000);
  const auto rows = first_rows(static_cast<std::size_t>(st.range(0)));
  const BatchStats batch = f.model.make_batch(f.y, rows, 100);
  const VariationalState state = initial_state(f.model, f.y, 0.1);
  const double scale = 10000.0 / static_cast<double>(rows.size());
  Rng rng(1);
  for (auto _ : st) benchmark::DoNotOptimize(elbo_gradient(f.model, state, batch, scale, 100, rng));
}
BENCHMARK(BM_ElboGradient)->Arg(100)->Arg(10000)->Unit(benchmark::kMicrosecond);

static void BM_GibbsSweep(benchmark::State& st) {
  const Fixture f = scaled(static_cast<std::size_t>(st.range(0)));
  GibbsSampler g(f.model, f.y);
  Rng rng(2);
  g.initialize(std::nullopt, 0.1, rng);
  for (auto _ : st) g.sweep(rng);
  st.SetItemsProcessed(st.iterations());
}
BENCHMARK(BM_GibbsSweep)->Arg(1000)->Arg(100000)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
