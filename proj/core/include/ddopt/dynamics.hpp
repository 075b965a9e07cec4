#pragma once

#include <Eigen/Core>
#include <variant>

#include "ddopt/distributions.hpp"

namespace ddopt {

// p+ = A p + B u + E d, with A Schur stable.
struct LinearDynamics {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd E;
};

// Opinion model on the unit sphere: the blend of the current position, the
// initial position, and an attraction toward (or away from) the decision u,
// renormalized to unit length each step. d carries the initial position.
struct PolarizedDynamics {
  double lambda = 0.0;  // weight on the current position, in [0, 1)
  double sigma = 0.0;   // strength of the decision term, > 0
};

// Choice-distribution model on the simplex: convex blend of the current
// distribution, softmax(-epsilon u), and the initial distribution (d).
struct SoftmaxDynamics {
  double lambda1 = 0.0;  // weight on the current distribution, in [0, 1)
  double lambda2 = 0.0;  // weight on the softmax term, in [0, 1)
  double epsilon = 0.0;  // softmax temperature scale, > 0
};

using DynamicsModel =
    std::variant<LinearDynamics, PolarizedDynamics, SoftmaxDynamics>;

// Parameter/shape validation; throws on violations (including rho(A) >= 1
// for the linear variant).
void validate(const DynamicsModel& model);

// Decision dimension n for a model acting on states of dimension m.
int decision_dim(const DynamicsModel& model, int state_dim);

// One application of the map f(p, u, d).
Eigen::VectorXd step(const DynamicsModel& model, const Eigen::VectorXd& p,
                     const Eigen::VectorXd& u, const Eigen::VectorXd& d);

// Pre-normalization intermediate of the polarized map; its norm enters the
// sensitivity formula.
Eigen::VectorXd polarized_intermediate(const PolarizedDynamics& model,
                                       const Eigen::VectorXd& p,
                                       const Eigen::VectorXd& u,
                                       const Eigen::VectorXd& d);

struct SteadyStateResult {
  Eigen::VectorXd p;
  int iters = 0;
};

inline constexpr double kSteadyStateTol = 1e-10;
inline constexpr int kSteadyStateMaxIter = 100000;

// Fixed point of f(., u, d). Linear and softmax variants use their closed
// forms; the polarized variant iterates the map.
SteadyStateResult steady_state(const DynamicsModel& model,
                               const Eigen::VectorXd& u,
                               const Eigen::VectorXd& d,
                               double tol = kSteadyStateTol,
                               int max_iter = kSteadyStateMaxIter);

// Plain fixed-point iteration for any variant, from a caller-chosen start.
// Used as an oracle against the closed forms and for warm starting.
SteadyStateResult steady_state_fixed_point(const DynamicsModel& model,
                                           const Eigen::VectorXd& u,
                                           const Eigen::VectorXd& d,
                                           const Eigen::VectorXd& p_init,
                                           double tol = kSteadyStateTol,
                                           int max_iter = kSteadyStateMaxIter);

// Applies step to every individual, order preserving.
Population evolve_population(const DynamicsModel& model, Population pop,
                             const Eigen::VectorXd& u);

// Solves A'PA - P + Q = 0 for P (symmetric positive definite) via the
// vectorized linear system; intended for certificate-sized problems.
Eigen::MatrixXd lyapunov_solve(const Eigen::MatrixXd& A,
                               const Eigen::MatrixXd& Q);

// Constants quantifying how fast states, and hence the population
// distribution, track the decision-induced steady state.
struct ContractionCertificate {
  Eigen::MatrixXd P;   // contraction metric, positive definite
  double Lfp = 0.0;    // Lipschitz constant of f in p under ||.||_P, in (0,1)
  double Lhu = 0.0;    // Lipschitz constant of the steady-state map in u
  double rho1 = 0.0;   // (1 + Lfp^2) / 2
  double rho2 = 0.0;   // (1+Lfp^2)/(1-Lfp^2) * (Lfp*Lhu)^2 * lambda_max(P)
};

ContractionCertificate make_certificate(Eigen::MatrixXd P, double Lfp,
                                        double Lhu);

// Linear and softmax variants only; the polarized variant has no closed-form
// contraction metric and raises UnsupportedModelError. The softmax variant
// needs state_dim to size its identity metric.
ContractionCertificate contraction_certificate(const DynamicsModel& model,
                                               int state_dim = -1);

}  // namespace ddopt
