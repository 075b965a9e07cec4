#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <vector>

#include "ddopt/distributions.hpp"
#include "ddopt/dynamics.hpp"
#include "ddopt/objectives.hpp"
#include "ddopt/rng.hpp"
#include "ddopt/run_record.hpp"

namespace ddopt {

// Mini-batch gradient of the reduced objective in the objective's own
// orientation: an adaptation term (partial gradient in u) plus an
// anticipation term (sensitivity applied to the partial gradient in p).
struct GradientEstimate {
  Eigen::VectorXd total;
  Eigen::VectorXd term_adapt;
  Eigen::VectorXd term_anticipate;
};

// exact: sensitivities evaluated at each individual's steady state.
// online: sensitivities evaluated at the current position (polarized); the
//         linear and softmax sensitivities are state independent, so the
//         modes coincide there.
enum class SensitivityMode { exact, online };

GradientEstimate composite_gradient(const Objective& objective,
                                    const DynamicsModel& model,
                                    const Eigen::VectorXd& u,
                                    const Population& pop,
                                    const std::vector<int>& batch,
                                    SensitivityMode mode);

struct StepResult {
  Eigen::VectorXd u_next;
  GradientEstimate grad;
};

// Draws a mini-batch, forms the composite gradient, and takes one projected
// step. Maximization is handled by the descent-sign adapter.
StepResult step_composite(const Eigen::VectorXd& u, const Objective& objective,
                          const Constraint& constraint,
                          const DynamicsModel& model, const Population& pop,
                          double eta, int n_mb, Rng& rng, SensitivityMode mode);

// Same update with the anticipation term forced to zero.
StepResult step_vanilla(const Eigen::VectorXd& u, const Objective& objective,
                        const Constraint& constraint, const Population& pop,
                        double eta, int n_mb, Rng& rng);

// Two-point bandit estimator. Each iteration a direction v is drawn
// uniformly on the unit sphere, the objective is queried at u + delta * v,
// and the update scales v by the difference of consecutive query values.
struct DfoState {
  bool has_prev = false;
  double phi_prev = 0.0;
  Eigen::VectorXd v;  // direction of the pending query
};

Eigen::VectorXd sample_unit_sphere(int dim, Rng& rng);

// Draws the direction and returns the decision to query.
Eigen::VectorXd dfo_perturbed_query(DfoState& state, const Eigen::VectorXd& u,
                                    double delta, Rng& rng);

struct DfoStepResult {
  Eigen::VectorXd u_next;
  Eigen::VectorXd estimate;  // (dim/delta)(phi_now - phi_prev) v; zero on the
                             // priming call
};

// Consumes the queried value. The first call only primes the memory and
// returns the projected current decision.
DfoStepResult step_dfo(DfoState& state, const Eigen::VectorXd& u,
                       double phi_now, const Constraint& constraint,
                       double eta, double delta);

// Exact reduced objective (steady states recomputed over the whole
// population) and its gradient, in the objective's own orientation.
double reduced_value(const DynamicsModel& model, const Objective& objective,
                     const Population& pop, const Eigen::VectorXd& u);
Eigen::VectorXd reduced_gradient(const DynamicsModel& model,
                                 const Objective& objective,
                                 const Population& pop,
                                 const Eigen::VectorXd& u);

struct OracleSolution {
  Eigen::VectorXd u_star;
  double value_star = 0.0;
  double residual = 0.0;  // ||u - Proj(u - grad)|| at u_star
  int restarts = 0;
};

inline constexpr double kOracleResidualTol = 1e-8;

// Multi-start projected gradient with backtracking on the exact reduced
// objective. Restart points are seeded; the best local optimum wins.
OracleSolution oracle_solve(const DynamicsModel& model,
                            const Objective& objective,
                            const Constraint& constraint, const Population& pop,
                            int restarts = 10, int max_iter = 20000,
                            std::uint64_t seed = 0);

enum class OnlineAlgorithm { composite, vanilla, dfo };

const char* algorithm_name(OnlineAlgorithm a);

struct RunOptions {
  int horizon = 0;       // T
  double eta = 0.0;
  int n_mb = 1;
  SensitivityMode sensitivity_mode = SensitivityMode::online;
  double dfo_delta = 2.0;

  // Reference optimum for the gap/distance/W1 diagnostics columns; rows
  // carry NaN-free zeros when absent only for the gradient columns, so runs
  // meant for records should provide it.
  std::optional<OracleSolution> reference;

  // Metric for the steady-state tracking diagnostic; identity when empty.
  Eigen::MatrixXd vk_metric;

  // Optional hook: squared norm of the true reduced gradient, averaged over
  // the pre-update iterates u_0 .. u_{T-1}.
  std::function<double(const Eigen::VectorXd&)> true_grad_sq;
};

// Closed loop: each iteration takes one algorithm step and then evolves the
// whole population under the new decision. Deterministic given the seed.
RunRecord run_online(OnlineAlgorithm algorithm, const DynamicsModel& model,
                     const Objective& objective, const Constraint& constraint,
                     Population pop, std::uint64_t seed,
                     const RunOptions& options);

}  // namespace ddopt
