#include "ddopt/checks.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "ddopt/dynamics.hpp"
#include "ddopt/errors.hpp"
#include "ddopt/objectives.hpp"
#include "ddopt/optimizers.hpp"
#include "ddopt/rng.hpp"
#include "ddopt/sensitivity.hpp"
#include "ddopt/transport.hpp"

namespace ddopt {

namespace {

Eigen::VectorXd random_vector(int dim, Rng& rng) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.gaussian();
  return v;
}

Eigen::VectorXd random_unit(int dim, Rng& rng) {
  Eigen::VectorXd v = random_vector(dim, rng);
  while (v.norm() == 0.0) v = random_vector(dim, rng);
  return v / v.norm();
}

Eigen::VectorXd random_simplex(int dim, Rng& rng) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = -std::log1p(-rng.uniform());
  return v / v.sum();
}

double relative_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  return (got - want).norm() / std::max(1e-12, want.norm());
}

CheckReport check_sensitivity(std::uint64_t seed, bool fault) {
  Rng rng = Rng::from_seed(seed).split(1);
  const double bump = fault ? 1e-3 : 0.0;
  double worst = 0.0;
  std::string worst_case;

  // Polarized, online formula at the steady state vs finite differences.
  const PolarizedDynamics pol{0.4, 0.5};
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd p0 = random_unit(6, rng);
    const Eigen::VectorXd q = (0.3 + 0.65 * rng.uniform()) * random_unit(6, rng);
    const DynamicsModel model = pol;
    const Eigen::VectorXd pss = steady_state(model, q, p0, 1e-12).p;
    const double tn = polarized_intermediate(pol, pss, q, p0).norm();
    Eigen::MatrixXd H =
        sensitivity_polarized(q, pss, tn, pol.lambda, pol.sigma).H;
    H.array() += bump;
    const Eigen::MatrixXd Hfd = sensitivity_fd_oracle(model, q, p0).H;
    const double err = relative_error(H, Hfd);
    if (err > worst) {
      worst = err;
      std::ostringstream os;
      os << "polarized trial " << trial << " rel err " << err;
      worst_case = os.str();
    }
    if (err > 1e-4)
      return {"sensitivity", false, "polarized analytic vs finite differences: " + worst_case};
  }

  // Softmax: closed form vs implicit vs finite differences; zero row sums.
  const SoftmaxDynamics sm{0.2, 0.5, 0.5};
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd q = random_vector(5, rng);
    const Eigen::VectorXd p0 = random_simplex(5, rng);
    const DynamicsModel model = sm;
    const Eigen::MatrixXd H =
        sensitivity_softmax(q, sm.lambda1, sm.lambda2, sm.epsilon).H;
    const Eigen::VectorXd pss = steady_state(model, q, p0).p;
    const Eigen::MatrixXd Him = sensitivity_implicit(model, q, p0, pss).H;
    const Eigen::MatrixXd Hfd = sensitivity_fd_oracle(model, q, p0).H;
    if (relative_error(H, Him) > 1e-10)
      return {"sensitivity", false, "softmax closed form vs implicit form"};
    if (relative_error(H, Hfd) > 1e-6)
      return {"sensitivity", false, "softmax vs finite differences"};
    if ((H * Eigen::VectorXd::Ones(5)).norm() > 1e-12)
      return {"sensitivity", false, "softmax row sums not zero"};
  }

  std::ostringstream os;
  os << "worst relative error " << worst;
  return {"sensitivity", true, os.str()};
}

CheckReport check_projection(std::uint64_t seed, bool fault) {
  Rng rng = Rng::from_seed(seed).split(2);
  const double bump = fault ? 1e-3 : 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    const int m = 2 + static_cast<int>(rng.uniform_below(30));
    const double cap = 0.2 + 2.0 * rng.uniform();
    const double budget = cap * (0.1 + 0.9 * m * rng.uniform());
    const Eigen::VectorXd v = 3.0 * random_vector(m, rng);
    Eigen::VectorXd q = project_capped_simplex(v, budget, cap);
    q.array() += bump;
    std::ostringstream inputs;
    inputs << "m=" << m << " cap=" << cap << " budget=" << budget;
    if (std::abs(q.sum() - budget) > 1e-10)
      return {"projection", false, "budget violated: " + inputs.str()};
    if (q.minCoeff() < 0.0 || q.maxCoeff() > cap)
      return {"projection", false, "box violated: " + inputs.str()};
    const Eigen::VectorXd q2 = project_capped_simplex(q, budget, cap);
    if ((q2 - q).norm() > 1e-9)
      return {"projection", false, "not idempotent: " + inputs.str()};
    // Nonexpansiveness on a sampled pair.
    const Eigen::VectorXd w = 3.0 * random_vector(m, rng);
    const Eigen::VectorXd qw = project_capped_simplex(w, budget, cap);
    if ((q - qw).norm() > (v - w).norm() + bump + 1e-9)
      return {"projection", false, "expansive pair: " + inputs.str()};
  }
  return {"projection", true, "300 random instances"};
}

CheckReport check_transport(std::uint64_t seed, bool fault) {
  Rng rng = Rng::from_seed(seed).split(3);
  const double bump = fault ? 1e-3 : 0.0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 2 + static_cast<int>(rng.uniform_below(5));
    const Eigen::VectorXd p = random_simplex(m, rng);
    const Eigen::VectorXd q = random_simplex(m, rng);
    const double via_cdf = w1_categorical_1d(p, q) + bump;
    const TransportPlan plan = w1_discrete_exact(
        measure_from_simplex(p), measure_from_simplex(q),
        GroundMetric::IndexAbs());
    worst = std::max(worst, std::abs(via_cdf - plan.cost));
    if (std::abs(via_cdf - plan.cost) > 1e-9) {
      std::ostringstream os;
      os << "1-d formula " << via_cdf << " vs exact " << plan.cost << " at m="
         << m;
      return {"transport", false, os.str()};
    }
    if ((plan.plan.rowwise().sum() - p).cwiseAbs().maxCoeff() > 1e-9 ||
        (plan.plan.colwise().sum().transpose() - q).cwiseAbs().maxCoeff() >
            1e-9)
      return {"transport", false, "plan marginals violated"};
    // Symmetry and triangle inequality on the same draw.
    const TransportPlan back = w1_discrete_exact(
        measure_from_simplex(q), measure_from_simplex(p),
        GroundMetric::IndexAbs());
    if (std::abs(back.cost - plan.cost) > 1e-9)
      return {"transport", false, "not symmetric"};
    const Eigen::VectorXd r = random_simplex(m, rng);
    const double pr = w1_categorical_1d(p, r);
    const double rq = w1_categorical_1d(r, q);
    if (plan.cost > pr + rq + 1e-9)
      return {"transport", false, "triangle inequality violated"};
  }
  std::ostringstream os;
  os << "worst |cdf - exact| " << worst;
  return {"transport", true, os.str()};
}

CheckReport check_vk(std::uint64_t seed, bool fault) {
  // Composite running on a small linear instance; the tracking bound must
  // contract up to the decision-change term at every iteration.
  Rng rng = Rng::from_seed(seed).split(4);
  const int m = 4;
  Eigen::MatrixXd A(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) A(i, j) = rng.gaussian();
  A *= 0.6 / A.eigenvalues().cwiseAbs().maxCoeff();
  LinearDynamics lin{A, Eigen::MatrixXd::Identity(m, m),
                     Eigen::MatrixXd::Identity(m, m)};
  const DynamicsModel model = lin;
  const ContractionCertificate cert = contraction_certificate(model);
  const double lam_max =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cert.P)
          .eigenvalues()
          .maxCoeff();

  QuadraticTestObjective obj;
  obj.u_target = Eigen::VectorXd::Zero(m);
  obj.p_target = Eigen::VectorXd::Ones(m);

  Population pop = sample_gaussian(m, m, 50, seed + 17);
  RunOptions options;
  options.horizon = 300;
  options.eta = 0.05;
  options.n_mb = 10;
  options.vk_metric = cert.P;
  const RunRecord rec = run_online(OnlineAlgorithm::composite, model, obj,
                                   Unconstrained{}, std::move(pop), seed + 18,
                                   options);
  const double slack = fault ? -1e-3 : 1e-8;
  for (int k = 1; k <= options.horizon; ++k) {
    const double lhs = rec.rows[k].v_k_estimate;
    const double du = (rec.decisions[k] - rec.decisions[k - 1]).norm();
    const double rhs = cert.Lfp * rec.rows[k - 1].v_k_estimate +
                       cert.Lfp * cert.Lhu * std::sqrt(lam_max) * du + slack;
    if (lhs > rhs) {
      std::ostringstream os;
      os << "recursion violated at iteration " << k << ": " << lhs << " > "
         << rhs;
      return {"vk", false, os.str()};
    }
  }
  return {"vk", true, "300-step linear run"};
}

}  // namespace

std::vector<std::string> check_suite_names() {
  return {"sensitivity", "projection", "transport", "vk"};
}

std::vector<CheckReport> run_check_suites(const std::vector<std::string>& only,
                                          std::uint64_t seed,
                                          const std::string& inject_fault) {
  const auto wanted = [&](const std::string& name) {
    return only.empty() ||
           std::find(only.begin(), only.end(), name) != only.end();
  };
  for (const std::string& name : only)
    if (std::find(check_suite_names().begin(), check_suite_names().end(),
                  name) == check_suite_names().end())
      throw Error("unknown check suite '" + name + "'");

  std::vector<CheckReport> out;
  if (wanted("sensitivity"))
    out.push_back(check_sensitivity(seed, inject_fault == "sensitivity"));
  if (wanted("projection"))
    out.push_back(check_projection(seed, inject_fault == "projection"));
  if (wanted("transport"))
    out.push_back(check_transport(seed, inject_fault == "transport"));
  if (wanted("vk")) out.push_back(check_vk(seed, inject_fault == "vk"));
  return out;
}

}  // namespace ddopt
