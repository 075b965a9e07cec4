#include "ddopt/objectives.hpp"

#include <cmath>
#include <string>

#include "ddopt/errors.hpp"

namespace ddopt {

bool is_maximization(const Objective& obj) {
  return !std::holds_alternative<QuadraticTestObjective>(obj);
}

double objective_value(const Objective& obj, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& p) {
  if (std::holds_alternative<AffinityObjective>(obj)) return p.dot(u);
  if (const auto* ge = std::get_if<GainEntropyObjective>(&obj)) {
    double entropy_term = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
      if (p(i) > 0.0) entropy_term += p(i) * std::log(p(i));
    return p.dot(u) + ge->rho * entropy_term;
  }
  const auto& qt = std::get<QuadraticTestObjective>(obj);
  return 0.5 * (u - qt.u_target).squaredNorm() +
         0.5 * (p - qt.p_target).squaredNorm();
}

Eigen::VectorXd objective_grad_u(const Objective& obj, const Eigen::VectorXd& u,
                                 const Eigen::VectorXd& p) {
  if (std::holds_alternative<AffinityObjective>(obj) ||
      std::holds_alternative<GainEntropyObjective>(obj))
    return p;
  const auto& qt = std::get<QuadraticTestObjective>(obj);
  return u - qt.u_target;
}

Eigen::VectorXd objective_grad_p(const Objective& obj, const Eigen::VectorXd& u,
                                 const Eigen::VectorXd& p) {
  if (std::holds_alternative<AffinityObjective>(obj)) return u;
  if (const auto* ge = std::get_if<GainEntropyObjective>(&obj))
    return u + ge->rho * (1.0 + p.array().log()).matrix();
  const auto& qt = std::get<QuadraticTestObjective>(obj);
  return p - qt.p_target;
}

Eigen::VectorXd project_norm_ball(const Eigen::VectorXd& v, double radius) {
  if (!(radius > 0.0)) throw Error("project_norm_ball: radius must be > 0");
  const double n = v.norm();
  if (n <= radius) return v;
  return (radius / n) * v;
}

Eigen::VectorXd project_capped_simplex(const Eigen::VectorXd& v, double budget,
                                       double cap) {
  const auto m = v.size();
  if (!(budget > 0.0) || !(cap > 0.0) || budget > m * cap + 1e-12)
    throw FeasibilityError(
        "project_capped_simplex: need 0 < budget <= dim * cap (budget " +
        std::to_string(budget) + ", cap " + std::to_string(cap) + ", dim " +
        std::to_string(m) + ")");

  // g(theta) = sum_i clip(v_i - theta, 0, cap) decreases monotonically from
  // m*cap to 0; bisect for g(theta) = budget.
  const auto mass = [&](double theta) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
      total += std::clamp(v(i) - theta, 0.0, cap);
    return total;
  };
  double lo = v.minCoeff() - cap - 1.0;  // g(lo) = m*cap >= budget
  double hi = v.maxCoeff();              // g(hi) = 0 <= budget
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mass(mid) >= budget)
      lo = mid;
    else
      hi = mid;
  }
  double theta = 0.5 * (lo + hi);

  // Polish: with the active sets pinned by the bisected theta, the exact
  // multiplier over the free coordinates is a plain average.
  int n_free = 0;
  double free_sum = 0.0, capped = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double w = v(i) - theta;
    if (w >= cap)
      capped += cap;
    else if (w > 0.0) {
      ++n_free;
      free_sum += v(i);
    }
  }
  if (n_free > 0) {
    const double polished = (free_sum + capped - budget) / n_free;
    const auto residual = [&](double th) { return std::abs(mass(th) - budget); };
    if (residual(polished) <= residual(theta)) theta = polished;
  }

  Eigen::VectorXd q(m);
  for (Eigen::Index i = 0; i < m; ++i)
    q(i) = std::clamp(v(i) - theta, 0.0, cap);
  return q;
}

Eigen::VectorXd project(const Constraint& c, const Eigen::VectorXd& v) {
  if (std::holds_alternative<Unconstrained>(c)) return v;
  if (const auto* ball = std::get_if<NormBallConstraint>(&c))
    return project_norm_ball(v, ball->radius);
  const auto& cs = std::get<CappedSimplexConstraint>(c);
  return project_capped_simplex(v, cs.budget, cs.cap);
}

}  // namespace ddopt
