#include "ddopt/dynamics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

#include "ddopt/errors.hpp"

namespace ddopt {

namespace {

constexpr double kDegenerateNorm = 1e-12;
constexpr double kUnitNormSlack = 1e-9;

double spectral_radius(const Eigen::MatrixXd& A) {
  return A.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::VectorXd softmax_neg_scaled(double epsilon, const Eigen::VectorXd& u) {
  // Subtracting the max coordinate keeps the exponentials in range without
  // changing the value.
  const Eigen::VectorXd x = -epsilon * u;
  const double shift = x.maxCoeff();
  Eigen::VectorXd z = (x.array() - shift).exp();
  return z / z.sum();
}

void check_dims(const char* who, int got, int want) {
  if (got != want)
    throw DimensionError(std::string(who) + ": expected dimension " +
                         std::to_string(want) + ", got " +
                         std::to_string(got));
}

}  // namespace

void validate(const DynamicsModel& model) {
  if (const auto* lin = std::get_if<LinearDynamics>(&model)) {
    const auto m = lin->A.rows();
    if (lin->A.cols() != m) throw DimensionError("LinearDynamics: A not square");
    if (lin->B.rows() != m)
      throw DimensionError("LinearDynamics: B row count != state dim");
    if (lin->E.rows() != m)
      throw DimensionError("LinearDynamics: E row count != state dim");
    const double rho = spectral_radius(lin->A);
    if (!(rho < 1.0))
      throw StabilityError("LinearDynamics: spectral radius " +
                           std::to_string(rho) + " >= 1");
  } else if (const auto* pol = std::get_if<PolarizedDynamics>(&model)) {
    if (!(pol->lambda >= 0.0 && pol->lambda < 1.0))
      throw Error("PolarizedDynamics: lambda must lie in [0, 1)");
    if (!(pol->sigma > 0.0)) throw Error("PolarizedDynamics: sigma must be > 0");
  } else {
    const auto& sm = std::get<SoftmaxDynamics>(model);
    if (!(sm.lambda1 >= 0.0 && sm.lambda1 < 1.0))
      throw Error("SoftmaxDynamics: lambda1 must lie in [0, 1)");
    if (!(sm.lambda2 >= 0.0 && sm.lambda2 < 1.0))
      throw Error("SoftmaxDynamics: lambda2 must lie in [0, 1)");
    if (sm.lambda1 + sm.lambda2 > 1.0)
      throw Error("SoftmaxDynamics: lambda1 + lambda2 must be <= 1");
    if (!(sm.epsilon > 0.0)) throw Error("SoftmaxDynamics: epsilon must be > 0");
  }
}

int decision_dim(const DynamicsModel& model, int state_dim) {
  if (const auto* lin = std::get_if<LinearDynamics>(&model))
    return static_cast<int>(lin->B.cols());
  return state_dim;
}

Eigen::VectorXd polarized_intermediate(const PolarizedDynamics& model,
                                       const Eigen::VectorXd& p,
                                       const Eigen::VectorXd& u,
                                       const Eigen::VectorXd& d) {
  return model.lambda * p + (1.0 - model.lambda) * d +
         model.sigma * p.dot(u) * u;
}

Eigen::VectorXd step(const DynamicsModel& model, const Eigen::VectorXd& p,
                     const Eigen::VectorXd& u, const Eigen::VectorXd& d) {
  if (const auto* lin = std::get_if<LinearDynamics>(&model)) {
    check_dims("step(linear) p", static_cast<int>(p.size()),
               static_cast<int>(lin->A.rows()));
    check_dims("step(linear) u", static_cast<int>(u.size()),
               static_cast<int>(lin->B.cols()));
    check_dims("step(linear) d", static_cast<int>(d.size()),
               static_cast<int>(lin->E.cols()));
    return lin->A * p + lin->B * u + lin->E * d;
  }
  if (const auto* pol = std::get_if<PolarizedDynamics>(&model)) {
    check_dims("step(polarized) u", static_cast<int>(u.size()),
               static_cast<int>(p.size()));
    check_dims("step(polarized) d", static_cast<int>(d.size()),
               static_cast<int>(p.size()));
    if (std::abs(p.norm() - 1.0) > kUnitNormSlack)
      throw Error("step(polarized): state must be unit norm");
    const Eigen::VectorXd tilde = polarized_intermediate(*pol, p, u, d);
    const double n = tilde.norm();
    if (n < kDegenerateNorm)
      throw DegenerateStateError(
          "step(polarized): intermediate state has norm " + std::to_string(n) +
          "; normalization undefined");
    return tilde / n;
  }
  const auto& sm = std::get<SoftmaxDynamics>(model);
  check_dims("step(softmax) u", static_cast<int>(u.size()),
             static_cast<int>(p.size()));
  check_dims("step(softmax) d", static_cast<int>(d.size()),
             static_cast<int>(p.size()));
  return sm.lambda1 * p + sm.lambda2 * softmax_neg_scaled(sm.epsilon, u) +
         (1.0 - sm.lambda1 - sm.lambda2) * d;
}

SteadyStateResult steady_state_fixed_point(const DynamicsModel& model,
                                           const Eigen::VectorXd& u,
                                           const Eigen::VectorXd& d,
                                           const Eigen::VectorXd& p_init,
                                           double tol, int max_iter) {
  if (!(tol > 0.0)) throw Error("steady_state: tol must be > 0");
  Eigen::VectorXd p = p_init;
  double residual = 0.0;
  for (int k = 1; k <= max_iter; ++k) {
    Eigen::VectorXd next = step(model, p, u, d);
    residual = (next - p).norm();
    p = std::move(next);
    if (residual <= tol) return {std::move(p), k};
  }
  throw NonConvergenceError(
      "steady_state: no fixed point within " + std::to_string(max_iter) +
          " iterations (last residual " + std::to_string(residual) + ")",
      residual);
}

SteadyStateResult steady_state(const DynamicsModel& model,
                               const Eigen::VectorXd& u,
                               const Eigen::VectorXd& d, double tol,
                               int max_iter) {
  validate(model);
  if (!(tol > 0.0)) throw Error("steady_state: tol must be > 0");
  if (const auto* lin = std::get_if<LinearDynamics>(&model)) {
    const auto m = lin->A.rows();
    const Eigen::MatrixXd ImA = Eigen::MatrixXd::Identity(m, m) - lin->A;
    Eigen::VectorXd p = ImA.partialPivLu().solve(lin->B * u + lin->E * d);
    return {std::move(p), 0};
  }
  if (std::holds_alternative<SoftmaxDynamics>(model)) {
    const auto& sm = std::get<SoftmaxDynamics>(model);
    Eigen::VectorXd p =
        (sm.lambda2 / (1.0 - sm.lambda1)) * softmax_neg_scaled(sm.epsilon, u) +
        ((1.0 - sm.lambda1 - sm.lambda2) / (1.0 - sm.lambda1)) * d;
    return {std::move(p), 0};
  }
  // Polarized: iterate from the initial position, which the trajectory
  // analysis guarantees converges.
  return steady_state_fixed_point(model, u, d, d, tol, max_iter);
}

Population evolve_population(const DynamicsModel& model, Population pop,
                             const Eigen::VectorXd& u) {
  for (std::size_t i = 0; i < pop.individuals.size(); ++i) {
    try {
      pop.individuals[i].p = step(model, pop.individuals[i].p, u,
                                  pop.individuals[i].d);
    } catch (const Error& e) {
      throw Error("evolve_population: individual " + std::to_string(i) + ": " +
                  e.what());
    }
  }
  return pop;
}

Eigen::MatrixXd lyapunov_solve(const Eigen::MatrixXd& A,
                               const Eigen::MatrixXd& Q) {
  const auto m = A.rows();
  if (A.cols() != m || Q.rows() != m || Q.cols() != m)
    throw DimensionError("lyapunov_solve: A and Q must be square, same size");
  if (m > 50)
    throw DimensionError(
        "lyapunov_solve: vectorized solver limited to m <= 50");
  if (!Q.isApprox(Q.transpose(), 1e-12))
    throw Error("lyapunov_solve: Q must be symmetric");
  const double rho = spectral_radius(A);
  if (!(rho < 1.0))
    throw StabilityError("lyapunov_solve: spectral radius " +
                         std::to_string(rho) + " >= 1");

  // vec(A'PA) = (A' (x) A') vec(P), so (I - A' (x) A') vec(P) = vec(Q).
  const Eigen::MatrixXd At = A.transpose();
  Eigen::MatrixXd K(m * m, m * m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      K.block(i * m, j * m, m, m) = At(i, j) * At;
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(m * m, m * m) - K;
  Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(Q.data(), m * m);
  Eigen::VectorXd p = lhs.partialPivLu().solve(q);
  Eigen::MatrixXd P = Eigen::Map<Eigen::MatrixXd>(p.data(), m, m);
  P = 0.5 * (P + P.transpose()).eval();

  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success)
    throw Error("lyapunov_solve: solution is not positive definite");
  return P;
}

ContractionCertificate make_certificate(Eigen::MatrixXd P, double Lfp,
                                        double Lhu) {
  if (!(Lfp > 0.0 && Lfp < 1.0))
    throw Error("make_certificate: Lfp must lie in (0, 1)");
  if (!(Lhu > 0.0)) throw Error("make_certificate: Lhu must be > 0");
  ContractionCertificate cert;
  const double lam_max =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P).eigenvalues().maxCoeff();
  cert.rho1 = (1.0 + Lfp * Lfp) / 2.0;
  cert.rho2 = (1.0 + Lfp * Lfp) / (1.0 - Lfp * Lfp) * (Lfp * Lhu) *
              (Lfp * Lhu) * lam_max;
  cert.P = std::move(P);
  cert.Lfp = Lfp;
  cert.Lhu = Lhu;
  return cert;
}

ContractionCertificate contraction_certificate(const DynamicsModel& model,
                                               int state_dim) {
  validate(model);
  if (const auto* lin = std::get_if<LinearDynamics>(&model)) {
    const auto m = lin->A.rows();
    const Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(m, m);
    Eigen::MatrixXd P = lyapunov_solve(lin->A, Q);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
    const double lam_min = es.eigenvalues().minCoeff();
    const double lam_max = es.eigenvalues().maxCoeff();
    const double Lfp = std::sqrt(1.0 - 1.0 / lam_max);  // lambda_min(Q) = 1
    const double b_norm = lin->B.jacobiSvd().singularValues().maxCoeff();
    const double Lhu = b_norm * std::sqrt(lam_max / lam_min) / (1.0 - Lfp);
    return make_certificate(std::move(P), Lfp, Lhu);
  }
  if (const auto* sm = std::get_if<SoftmaxDynamics>(&model)) {
    // The softmax Jacobian has spectral norm at most 1/2, so f is
    // (lambda2 * epsilon / 2)-Lipschitz in u under the identity metric.
    const double Lfp = sm->lambda1;
    if (!(Lfp > 0.0))
      throw UnsupportedModelError(
          "contraction_certificate: softmax with lambda1 = 0 contracts in one "
          "step; certificate constants degenerate");
    if (state_dim < 1)
      throw DimensionError(
          "contraction_certificate: state_dim required for the softmax "
          "variant");
    const double Lfu = sm->lambda2 * sm->epsilon / 2.0;
    const double Lhu = Lfu / (1.0 - Lfp);
    return make_certificate(Eigen::MatrixXd::Identity(state_dim, state_dim),
                            Lfp, Lhu);
  }
  throw UnsupportedModelError(
      "contraction_certificate: no closed-form contraction metric for the "
      "polarized variant");
}

}  // namespace ddopt
