#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "ddopt/rng.hpp"

namespace ddopt {

// One member of the population: initial state, exogenous input, and the
// state it currently occupies under the dynamics.
struct Individual {
  Eigen::VectorXd p0;  // initial state
  Eigen::VectorXd d;   // exogenous input, constant over iterations
  Eigen::VectorXd p;   // current state
};

// Immutable after construction; share read-only across workers.
struct Population {
  std::vector<Individual> individuals;
  int dim_state = 0;
  int dim_exo = 0;
  std::uint64_t seed = 0;
  // Reference direction used by hemisphere sampling (recorded for audit);
  // empty for other constructions.
  Eigen::VectorXd hemisphere_ref;

  int size() const { return static_cast<int>(individuals.size()); }
};

// Uniform samples on the hemisphere {x : ||x|| = 1, x.ref > 0}. The
// reference direction is drawn first from the same seed. Each individual
// gets d = p0 and p = p0.
Population sample_hemisphere(int dim, int count, std::uint64_t seed);

// The reference direction the seeded variant would draw.
Eigen::VectorXd hemisphere_reference(int dim, std::uint64_t seed);

// Fresh samples from a hemisphere whose reference is fixed by the caller;
// lets several populations share one underlying distribution.
Population sample_hemisphere(int dim, int count, std::uint64_t seed,
                             const Eigen::VectorXd& ref);

// Initial states drawn uniformly from the probability simplex; d = p0.
Population sample_simplex(int dim, int count, std::uint64_t seed);

// Population with linear-dynamics inputs: d ~ N(0, I_r) independent of
// p0 ~ N(0, I_m).
Population sample_gaussian(int dim_state, int dim_exo, int count,
                           std::uint64_t seed);

// n_mb distinct indices, uniform without replacement.
std::vector<int> draw_minibatch(const Population& pop, int n_mb, Rng& rng);

// Flat audit CSV: one row per individual, p0 components then d components.
void write_population_csv(const Population& pop, const std::string& path);

}  // namespace ddopt
