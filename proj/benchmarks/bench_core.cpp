#include <benchmark/benchmark.h>

#include "ddopt/distributions.hpp"
#include "ddopt/dynamics.hpp"
#include "ddopt/optimizers.hpp"
#include "ddopt/transport.hpp"

namespace {

using namespace ddopt;

void PolarizedEvolve(benchmark::State& state) {
  const int m = 20;
  Population pop = sample_hemisphere(m, state.range(0), 1);
  const DynamicsModel model = PolarizedDynamics{0.4, 0.5};
  Eigen::VectorXd q = 0.5 * pop.hemisphere_ref;
  for (auto _ : state) {
    pop = evolve_population(model, std::move(pop), q);
    benchmark::DoNotOptimize(pop.individuals.front().p.data());
  }
}
BENCHMARK(PolarizedEvolve)->Arg(100)->Arg(500)->Arg(1000);

void CompositeGradientPolarized(benchmark::State& state) {
  const int m = 20;
  Population pop = sample_hemisphere(m, 500, 2);
  const DynamicsModel model = PolarizedDynamics{0.4, 0.5};
  const Objective obj = AffinityObjective{};
  const Eigen::VectorXd q = 0.5 * pop.hemisphere_ref;
  Rng rng = Rng::from_seed(3);
  const std::vector<int> batch =
      draw_minibatch(pop, static_cast<int>(state.range(0)), rng);
  for (auto _ : state) {
    GradientEstimate g = composite_gradient(obj, model, q, pop, batch,
                                            SensitivityMode::online);
    benchmark::DoNotOptimize(g.total.data());
  }
}
BENCHMARK(CompositeGradientPolarized)->Arg(10)->Arg(50)->Arg(200);

void ExactTransport(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  Rng rng = Rng::from_seed(4);
  Eigen::VectorXd p(m), q(m);
  for (int i = 0; i < m; ++i) p(i) = rng.uniform() + 1e-3;
  for (int i = 0; i < m; ++i) q(i) = rng.uniform() + 1e-3;
  p /= p.sum();
  q /= q.sum();
  const DiscreteMeasure mu = measure_from_simplex(p);
  const DiscreteMeasure nu = measure_from_simplex(q);
  for (auto _ : state) {
    TransportPlan plan = w1_discrete_exact(mu, nu, GroundMetric::IndexAbs());
    benchmark::DoNotOptimize(plan.cost);
  }
}
BENCHMARK(ExactTransport)->Arg(10)->Arg(50)->Arg(100);

void CappedSimplexProjection(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  Rng rng = Rng::from_seed(5);
  Eigen::VectorXd v(m);
  for (int i = 0; i < m; ++i) v(i) = 5.0 * rng.gaussian();
  for (auto _ : state) {
    Eigen::VectorXd q = project_capped_simplex(v, 0.25 * m, 1.0);
    benchmark::DoNotOptimize(q.data());
  }
}
BENCHMARK(CappedSimplexProjection)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
