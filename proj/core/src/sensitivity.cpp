#include "ddopt/sensitivity.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "ddopt/errors.hpp"

namespace ddopt {

namespace {

constexpr double kFixedPointSlack = 1e-6;
constexpr double kOracleTol = 1e-12;

Eigen::VectorXd softmax_neg(double epsilon, const Eigen::VectorXd& u) {
  const Eigen::VectorXd x = -epsilon * u;
  const double shift = x.maxCoeff();
  Eigen::VectorXd z = (x.array() - shift).exp();
  return z / z.sum();
}

// Solves H = -Gu . (Gp - I)^{-1} with Gu, Gp the transposed Jacobians of f
// in u and p.
Eigen::MatrixXd implicit_solve(const Eigen::MatrixXd& Gu,
                               const Eigen::MatrixXd& Gp) {
  const auto m = Gp.rows();
  const Eigen::MatrixXd bracket =
      Gp - Eigen::MatrixXd::Identity(m, m);
  // H' = -(bracket')^{-1} Gu'
  Eigen::MatrixXd Ht =
      bracket.transpose().partialPivLu().solve(Gu.transpose());
  if (!Ht.allFinite())
    throw SingularMatrixError(
        "sensitivity: [grad_p f - I] is singular at the evaluation point");
  return -Ht.transpose();
}

}  // namespace

SensitivityMatrix sensitivity_implicit(const DynamicsModel& model,
                                       const Eigen::VectorXd& u,
                                       const Eigen::VectorXd& d,
                                       const Eigen::VectorXd& p_ss) {
  const double residual = (step(model, p_ss, u, d) - p_ss).norm();
  if (!(residual <= kFixedPointSlack))
    throw Error("sensitivity_implicit: p_ss is not a fixed point (residual " +
                std::to_string(residual) + ")");

  if (const auto* lin = std::get_if<LinearDynamics>(&model)) {
    return {implicit_solve(lin->B.transpose(), lin->A.transpose()),
            SensitivitySource::implicit};
  }
  if (const auto* pol = std::get_if<PolarizedDynamics>(&model)) {
    const double tn = polarized_intermediate(*pol, p_ss, u, d).norm();
    const auto m = p_ss.size();
    const Eigen::MatrixXd proj =
        Eigen::MatrixXd::Identity(m, m) - p_ss * p_ss.transpose();
    const Eigen::MatrixXd Gu =
        (pol->sigma / tn) *
        (p_ss.dot(u) * Eigen::MatrixXd::Identity(m, m) +
         p_ss * u.transpose()) *
        proj;
    const Eigen::MatrixXd Gp =
        (Eigen::MatrixXd::Identity(m, m) * pol->lambda +
         pol->sigma * u * u.transpose()) *
        proj / tn;
    SensitivityMatrix s{implicit_solve(Gu, Gp), SensitivitySource::implicit};
    return s;
  }
  const auto& sm = std::get<SoftmaxDynamics>(model);
  const auto m = p_ss.size();
  const Eigen::VectorXd s = softmax_neg(sm.epsilon, u);
  const Eigen::MatrixXd Gu =
      -sm.epsilon * sm.lambda2 *
      (Eigen::MatrixXd(s.asDiagonal()) - s * s.transpose());
  const Eigen::MatrixXd Gp = sm.lambda1 * Eigen::MatrixXd::Identity(m, m);
  return {implicit_solve(Gu, Gp), SensitivitySource::implicit};
}

SensitivityMatrix sensitivity_polarized(const Eigen::VectorXd& q,
                                        const Eigen::VectorXd& p,
                                        double p_tilde_norm, double lambda,
                                        double sigma) {
  if (std::abs(p.norm() - 1.0) > 1e-9)
    throw Error("sensitivity_polarized: p must be unit norm");
  if (!(p_tilde_norm > 1e-12))
    throw DegenerateStateError(
        "sensitivity_polarized: intermediate norm too small");
  const auto m = p.size();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m, m);
  const Eigen::MatrixXd proj = I - p * p.transpose();
  const Eigen::MatrixXd bracket =
      (lambda * I + sigma * q * q.transpose()) * proj - p_tilde_norm * I;
  const Eigen::MatrixXd lhs =
      -sigma * (p.dot(q) * I + p * q.transpose()) * proj;
  // H = lhs . bracket^{-1}
  Eigen::MatrixXd Ht = bracket.transpose().partialPivLu().solve(lhs.transpose());
  if (!Ht.allFinite())
    throw SingularMatrixError("sensitivity_polarized: singular bracket");
  return {Ht.transpose(), SensitivitySource::analytic};
}

SensitivityMatrix sensitivity_softmax(const Eigen::VectorXd& q, double lambda1,
                                      double lambda2, double epsilon) {
  if (!(epsilon > 0.0)) throw Error("sensitivity_softmax: epsilon must be > 0");
  // The expression is invariant to rescaling z, so the max shift used for
  // overflow safety is value exact.
  const Eigen::VectorXd x = -epsilon * q;
  const Eigen::VectorXd z = (x.array() - x.maxCoeff()).exp();
  const double total = z.sum();
  Eigen::MatrixXd H = (total * Eigen::MatrixXd(z.asDiagonal()) -
                       z * z.transpose()) /
                      (total * total);
  H *= -epsilon * lambda2 / (1.0 - lambda1);
  return {std::move(H), SensitivitySource::analytic};
}

SensitivityMatrix sensitivity_fd_oracle(const DynamicsModel& model,
                                        const Eigen::VectorXd& u,
                                        const Eigen::VectorXd& d,
                                        double h_step) {
  if (!(h_step > 0.0)) throw Error("sensitivity_fd_oracle: h_step must be > 0");
  const int n = static_cast<int>(u.size());
  Eigen::MatrixXd H;
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd up = u;
    Eigen::VectorXd um = u;
    up(j) += h_step;
    um(j) -= h_step;
    const Eigen::VectorXd pp = steady_state(model, up, d, kOracleTol).p;
    const Eigen::VectorXd pm = steady_state(model, um, d, kOracleTol).p;
    if (H.size() == 0) H.resize(n, pp.size());
    H.row(j) = (pp - pm) / (2.0 * h_step);
  }
  return {std::move(H), SensitivitySource::finite_difference};
}

}  // namespace ddopt
