#pragma once

#include <Eigen/Core>
#include <variant>

namespace ddopt {

// Phi(u, p) = p'u, maximized: the population-wide alignment between states
// and the decision.
struct AffinityObjective {};

// Phi(u, p) = p'u + rho * sum_i p_i log p_i, maximized: expected gain with
// an entropy term rewarding diverse choice distributions.
struct GainEntropyObjective {
  double rho = 0.1;
};

// Phi(u, p) = 0.5||u - u_target||^2 + 0.5||p - p_target||^2, minimized.
// Convex test instance for descent and rate checks.
struct QuadraticTestObjective {
  Eigen::VectorXd u_target;
  Eigen::VectorXd p_target;
};

using Objective =
    std::variant<AffinityObjective, GainEntropyObjective, QuadraticTestObjective>;

bool is_maximization(const Objective& obj);

// Sign adapter: the update rule is always descent on sign * Phi.
inline double descent_sign(const Objective& obj) {
  return is_maximization(obj) ? -1.0 : 1.0;
}

double objective_value(const Objective& obj, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& p);
Eigen::VectorXd objective_grad_u(const Objective& obj, const Eigen::VectorXd& u,
                                 const Eigen::VectorXd& p);
Eigen::VectorXd objective_grad_p(const Objective& obj, const Eigen::VectorXd& u,
                                 const Eigen::VectorXd& p);

struct Unconstrained {};

struct NormBallConstraint {
  double radius = 1.0;
};

// {q : sum q_i = budget, 0 <= q_i <= cap}
struct CappedSimplexConstraint {
  double budget = 1.0;
  double cap = 1.0;
};

using Constraint =
    std::variant<Unconstrained, NormBallConstraint, CappedSimplexConstraint>;

Eigen::VectorXd project_norm_ball(const Eigen::VectorXd& v, double radius);

// Euclidean projection q_i = clip(v_i - theta, 0, cap) with theta chosen by
// bisection so the budget is met.
Eigen::VectorXd project_capped_simplex(const Eigen::VectorXd& v, double budget,
                                       double cap);

Eigen::VectorXd project(const Constraint& c, const Eigen::VectorXd& v);

}  // namespace ddopt
