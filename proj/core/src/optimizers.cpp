#include "ddopt/optimizers.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "ddopt/errors.hpp"
#include "ddopt/sensitivity.hpp"
#include "ddopt/transport.hpp"

namespace ddopt {

namespace {

constexpr double kWarmTol = 1e-10;
constexpr double kExactModeTol = 1e-12;

// Applies the polarized sensitivity to a single vector without forming the
// matrix: H g = lhs . bracket^{-1} g, with lhs applied factor by factor.
Eigen::VectorXd polarized_sensitivity_apply(const PolarizedDynamics& pol,
                                            const Eigen::VectorXd& u,
                                            const Eigen::VectorXd& p,
                                            double tilde_norm,
                                            const Eigen::MatrixXd& blend,
                                            const Eigen::VectorXd& g) {
  if (!(tilde_norm > 1e-12))
    throw DegenerateStateError(
        "composite_gradient: polarized intermediate norm too small");
  // bracket = blend (I - p p') - tilde_norm I, blend = lambda I + sigma u u'
  const Eigen::VectorXd blend_p = blend * p;
  Eigen::MatrixXd bracket = blend;
  bracket.noalias() -= blend_p * p.transpose();
  bracket.diagonal().array() -= tilde_norm;
  Eigen::VectorXd z = bracket.partialPivLu().solve(g);
  if (!z.allFinite())
    throw SingularMatrixError("composite_gradient: singular polarized bracket");
  z -= p * p.dot(z);  // project
  return -pol.sigma * (p.dot(u) * z + p * u.dot(z));
}

}  // namespace

GradientEstimate composite_gradient(const Objective& objective,
                                    const DynamicsModel& model,
                                    const Eigen::VectorXd& u,
                                    const Population& pop,
                                    const std::vector<int>& batch,
                                    SensitivityMode mode) {
  if (batch.empty()) throw Error("composite_gradient: empty batch");
  const int n = static_cast<int>(u.size());

  GradientEstimate est;
  est.term_adapt = Eigen::VectorXd::Zero(n);
  est.term_anticipate = Eigen::VectorXd::Zero(n);

  // State-independent sensitivities are shared across the batch.
  Eigen::MatrixXd shared_H;
  if (const auto* lin = std::get_if<LinearDynamics>(&model)) {
    const auto m = lin->A.rows();
    shared_H = (Eigen::MatrixXd::Identity(m, m) - lin->A)
                   .partialPivLu()
                   .solve(lin->B)
                   .transpose();
  } else if (const auto* sm = std::get_if<SoftmaxDynamics>(&model)) {
    shared_H = sensitivity_softmax(u, sm->lambda1, sm->lambda2, sm->epsilon).H;
  }

  const auto* pol = std::get_if<PolarizedDynamics>(&model);
  Eigen::MatrixXd blend;
  if (pol) {
    blend = pol->sigma * u * u.transpose();
    blend.diagonal().array() += pol->lambda;
  }

  for (const int idx : batch) {
    const Individual& ind = pop.individuals.at(idx);
    est.term_adapt += objective_grad_u(objective, u, ind.p);
    const Eigen::VectorXd gp = objective_grad_p(objective, u, ind.p);
    if (pol) {
      if (mode == SensitivityMode::exact) {
        const Eigen::VectorXd pss =
            steady_state_fixed_point(model, u, ind.d, ind.p, kExactModeTol).p;
        const double tn = polarized_intermediate(*pol, pss, u, ind.d).norm();
        est.term_anticipate +=
            polarized_sensitivity_apply(*pol, u, pss, tn, blend, gp);
      } else {
        const double tn = polarized_intermediate(*pol, ind.p, u, ind.d).norm();
        est.term_anticipate +=
            polarized_sensitivity_apply(*pol, u, ind.p, tn, blend, gp);
      }
    } else {
      est.term_anticipate += shared_H * gp;
    }
  }
  est.term_adapt /= static_cast<double>(batch.size());
  est.term_anticipate /= static_cast<double>(batch.size());
  est.total = est.term_adapt + est.term_anticipate;
  return est;
}

StepResult step_composite(const Eigen::VectorXd& u, const Objective& objective,
                          const Constraint& constraint,
                          const DynamicsModel& model, const Population& pop,
                          double eta, int n_mb, Rng& rng,
                          SensitivityMode mode) {
  if (!(eta > 0.0)) throw Error("step_composite: eta must be > 0");
  const std::vector<int> batch = draw_minibatch(pop, n_mb, rng);
  StepResult out;
  out.grad = composite_gradient(objective, model, u, pop, batch, mode);
  out.u_next =
      project(constraint, u - eta * descent_sign(objective) * out.grad.total);
  return out;
}

StepResult step_vanilla(const Eigen::VectorXd& u, const Objective& objective,
                        const Constraint& constraint, const Population& pop,
                        double eta, int n_mb, Rng& rng) {
  if (!(eta > 0.0)) throw Error("step_vanilla: eta must be > 0");
  const std::vector<int> batch = draw_minibatch(pop, n_mb, rng);
  GradientEstimate est;
  est.term_adapt = Eigen::VectorXd::Zero(u.size());
  for (const int idx : batch)
    est.term_adapt += objective_grad_u(objective, u, pop.individuals.at(idx).p);
  est.term_adapt /= static_cast<double>(batch.size());
  est.term_anticipate = Eigen::VectorXd::Zero(u.size());
  est.total = est.term_adapt;
  StepResult out;
  out.u_next =
      project(constraint, u - eta * descent_sign(objective) * est.total);
  out.grad = std::move(est);
  return out;
}

Eigen::VectorXd sample_unit_sphere(int dim, Rng& rng) {
  Eigen::VectorXd v(dim);
  double n = 0.0;
  do {
    for (int i = 0; i < dim; ++i) v(i) = rng.gaussian();
    n = v.norm();
  } while (n == 0.0);
  return v / n;
}

Eigen::VectorXd dfo_perturbed_query(DfoState& state, const Eigen::VectorXd& u,
                                    double delta, Rng& rng) {
  if (!(delta > 0.0)) throw Error("dfo_perturbed_query: delta must be > 0");
  state.v = sample_unit_sphere(static_cast<int>(u.size()), rng);
  return u + delta * state.v;
}

DfoStepResult step_dfo(DfoState& state, const Eigen::VectorXd& u,
                       double phi_now, const Constraint& constraint,
                       double eta, double delta) {
  if (state.v.size() != u.size())
    throw Error("step_dfo: no pending query direction");
  DfoStepResult out;
  if (!state.has_prev) {
    state.has_prev = true;
    state.phi_prev = phi_now;
    out.u_next = project(constraint, u);
    out.estimate = Eigen::VectorXd::Zero(u.size());
    return out;
  }
  const double dim = static_cast<double>(u.size());
  out.estimate = (dim / delta) * (phi_now - state.phi_prev) * state.v;
  state.phi_prev = phi_now;
  // The estimator approximates the objective's own gradient, so ascent for
  // the maximization case studies.
  out.u_next = project(constraint, u + eta * out.estimate);
  return out;
}

// ---------------------------------------------------------------------------
// Exact reduced objective machinery.
// ---------------------------------------------------------------------------

namespace {

// Evaluates the reduced objective and gradient with per-individual steady
// states, caching factorizations and warm starts across calls.
class ReducedEvaluator {
 public:
  ReducedEvaluator(const DynamicsModel& model, const Objective& objective,
                   const Population& pop)
      : model_(model), objective_(objective), pop_(pop) {
    if (pop_.size() == 0) throw Error("reduced objective: empty population");
    if (const auto* lin = std::get_if<LinearDynamics>(&model_)) {
      const auto m = lin->A.rows();
      lu_ = (Eigen::MatrixXd::Identity(m, m) - lin->A).partialPivLu();
      shared_H_ = lu_.solve(lin->B).transpose();
    }
    warm_.assign(pop_.size(), Eigen::VectorXd());
  }

  double value(const Eigen::VectorXd& u) {
    double total = 0.0;
    for (int i = 0; i < pop_.size(); ++i)
      total += objective_value(objective_, u, steady(u, i));
    return total / pop_.size();
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& u) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(u.size());
    const auto* pol = std::get_if<PolarizedDynamics>(&model_);
    Eigen::MatrixXd blend;
    if (pol) {
      blend = pol->sigma * u * u.transpose();
      blend.diagonal().array() += pol->lambda;
    }
    Eigen::MatrixXd softmax_H;
    if (const auto* sm = std::get_if<SoftmaxDynamics>(&model_))
      softmax_H =
          sensitivity_softmax(u, sm->lambda1, sm->lambda2, sm->epsilon).H;

    for (int i = 0; i < pop_.size(); ++i) {
      const Eigen::VectorXd pss = steady(u, i);
      g += objective_grad_u(objective_, u, pss);
      const Eigen::VectorXd gp = objective_grad_p(objective_, u, pss);
      if (pol) {
        const double tn =
            polarized_intermediate(*pol, pss, u, pop_.individuals[i].d).norm();
        g += polarized_sensitivity_apply(*pol, u, pss, tn, blend, gp);
      } else if (softmax_H.size() > 0) {
        g += softmax_H * gp;
      } else {
        g += shared_H_ * gp;
      }
    }
    return g / pop_.size();
  }

 private:
  const Eigen::VectorXd& steady(const Eigen::VectorXd& u, int i) {
    if (const auto* lin = std::get_if<LinearDynamics>(&model_)) {
      warm_[i] = lu_.solve(lin->B * u + lin->E * pop_.individuals[i].d);
      return warm_[i];
    }
    if (std::holds_alternative<SoftmaxDynamics>(model_)) {
      warm_[i] = steady_state(model_, u, pop_.individuals[i].d).p;
      return warm_[i];
    }
    const Eigen::VectorXd& start =
        warm_[i].size() > 0 ? warm_[i] : pop_.individuals[i].d;
    // Tight tolerance: value comparisons in the oracle's backtracking sit
    // close to this fixed-point noise.
    warm_[i] =
        steady_state_fixed_point(model_, u, pop_.individuals[i].d, start,
                                 kExactModeTol)
            .p;
    return warm_[i];
  }

  const DynamicsModel& model_;
  const Objective& objective_;
  const Population& pop_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  Eigen::MatrixXd shared_H_;
  std::vector<Eigen::VectorXd> warm_;
};

}  // namespace

double reduced_value(const DynamicsModel& model, const Objective& objective,
                     const Population& pop, const Eigen::VectorXd& u) {
  ReducedEvaluator ev(model, objective, pop);
  return ev.value(u);
}

Eigen::VectorXd reduced_gradient(const DynamicsModel& model,
                                 const Objective& objective,
                                 const Population& pop,
                                 const Eigen::VectorXd& u) {
  ReducedEvaluator ev(model, objective, pop);
  return ev.gradient(u);
}

OracleSolution oracle_solve(const DynamicsModel& model,
                            const Objective& objective,
                            const Constraint& constraint, const Population& pop,
                            int restarts, int max_iter, std::uint64_t seed) {
  if (restarts < 1) throw Error("oracle_solve: restarts must be >= 1");
  validate(model);
  const int n = decision_dim(model, pop.dim_state);
  const double sign = descent_sign(objective);
  Rng rng = Rng::from_seed(seed).split(0x6F7261636C65ULL);  // oracle stream

  ReducedEvaluator ev(model, objective, pop);
  const auto min_value = [&](const Eigen::VectorXd& u) {
    return sign * ev.value(u);
  };

  bool have_solution = false;
  OracleSolution best;
  double best_min_value = std::numeric_limits<double>::infinity();
  double best_residual_any = std::numeric_limits<double>::infinity();

  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd u;
    if (r == 0) {
      u = project(constraint, Eigen::VectorXd::Zero(n));
    } else {
      Eigen::VectorXd g(n);
      for (int i = 0; i < n; ++i) g(i) = rng.gaussian();
      u = project(constraint, g);
    }

    // Two phases. Backtracking projected gradient accepts only certified
    // sufficient decreases and grows the step on success. Near stationarity
    // the decreases fall below what value evaluations can resolve; from
    // there a fixed small step polishes the iterate on gradients alone,
    // which stay meaningful well past the value floor.
    double fu = min_value(u);
    double alpha = 1e-2;
    double alpha_good = 1e-2;
    bool polishing = false;
    double polish_alpha = 0.0;
    double best_res = std::numeric_limits<double>::infinity();
    Eigen::VectorXd u_best = u;
    for (int it = 0; it < max_iter; ++it) {
      const Eigen::VectorXd grad = sign * ev.gradient(u);
      const double residual = (u - project(constraint, u - grad)).norm();
      if (residual < best_res) {
        best_res = residual;
        u_best = u;
      }
      if (residual <= kOracleResidualTol) break;
      if (!polishing) {
        double trial = alpha;
        bool certified = false;
        // The decrease must clear the evaluation noise (steady states are
        // solved to ~1e-12), or noise-level "successes" at tiny trial steps
        // poison the step size.
        const double resolvable = 1e-10 * (1.0 + std::abs(fu));
        for (int halvings = 0; halvings < 60; ++halvings) {
          const Eigen::VectorXd cand = project(constraint, u - trial * grad);
          const double fc = min_value(cand);
          const double required = std::max(
              1e-4 / trial * (cand - u).squaredNorm(), resolvable);
          if (fc <= fu - required) {
            u = cand;
            fu = fc;
            alpha_good = trial;
            alpha = std::min(trial * 2.0, 1e3);
            certified = true;
            break;
          }
          trial *= 0.5;
        }
        if (!certified) {
          polishing = true;
          polish_alpha = std::max(alpha_good, 1e-2) / 4.0;
          u = u_best;
        }
      } else {
        // Divergence safeguard: fall back to the best iterate with a
        // smaller step whenever the residual runs away.
        if (residual > 10.0 * best_res) {
          polish_alpha *= 0.5;
          if (polish_alpha < 1e-14) break;
          u = u_best;
          continue;
        }
        u = project(constraint, u - polish_alpha * grad);
      }
    }

    best_residual_any = std::min(best_residual_any, best_res);
    if (best_res <= kOracleResidualTol) {
      const double fbest = min_value(u_best);
      if (fbest < best_min_value) {
        best_min_value = fbest;
        best.u_star = u_best;
        best.value_star = sign * fbest;
        best.residual = best_res;
        best.restarts = restarts;
        have_solution = true;
      }
    }
  }

  if (!have_solution)
    throw NonConvergenceError(
        "oracle_solve: no restart reached first-order residual " +
            std::to_string(kOracleResidualTol) + " (best " +
            std::to_string(best_residual_any) + ")",
        best_residual_any);
  return best;
}

// ---------------------------------------------------------------------------
// Online closed loop.
// ---------------------------------------------------------------------------

const char* algorithm_name(OnlineAlgorithm a) {
  switch (a) {
    case OnlineAlgorithm::composite:
      return "composite";
    case OnlineAlgorithm::vanilla:
      return "vanilla";
    case OnlineAlgorithm::dfo:
      return "dfo";
  }
  return "?";
}

namespace {

// Per-iteration diagnostics with cached factorizations and warm starts.
class Diagnostics {
 public:
  Diagnostics(const DynamicsModel& model, const Objective& objective,
              const Population& pop, const RunOptions& options)
      : model_(model), objective_(objective), options_(options) {
    const int m = pop.dim_state;
    Eigen::MatrixXd P = options.vk_metric.size() > 0
                            ? options.vk_metric
                            : Eigen::MatrixXd::Identity(m, m);
    Eigen::LLT<Eigen::MatrixXd> llt(P);
    if (llt.info() != Eigen::Success)
      throw Error("run_online: vk metric must be positive definite");
    vk_identity_ = P.isIdentity(0.0);
    vk_chol_t_ = Eigen::MatrixXd(llt.matrixL()).transpose();

    if (const auto* lin = std::get_if<LinearDynamics>(&model_))
      lu_ = (Eigen::MatrixXd::Identity(lin->A.rows(), lin->A.rows()) - lin->A)
                .partialPivLu();

    categorical_ = std::holds_alternative<SoftmaxDynamics>(model_);
    if (options_.reference) {
      pss_star_.reserve(pop.size());
      for (const Individual& ind : pop.individuals)
        pss_star_.push_back(
            steady_state(model_, options_.reference->u_star, ind.d).p);
    }
    warm_.assign(pop.size(), Eigen::VectorXd());
  }

  void fill_row(IterationRow& row, const Population& pop,
                const Eigen::VectorXd& u) {
    double obj = 0.0;
    for (const Individual& ind : pop.individuals)
      obj += objective_value(objective_, u, ind.p);
    row.objective = obj / pop.size();

    double vk = 0.0;
    for (int i = 0; i < pop.size(); ++i) {
      const Eigen::VectorXd& pss = steady(u, i);
      vk += vk_identity_ ? (pop.individuals[i].p - pss).norm()
                         : (vk_chol_t_ * (pop.individuals[i].p - pss)).norm();
    }
    row.v_k_estimate = vk / pop.size();

    if (options_.reference) {
      const auto& ref = *options_.reference;
      const double denom = std::abs(ref.value_star) > 1e-12
                               ? std::abs(ref.value_star)
                               : 1.0;
      row.opt_gap_rel =
          descent_sign(objective_) * (row.objective - ref.value_star) / denom;
      const double und = ref.u_star.norm() > 1e-12 ? ref.u_star.norm() : 1.0;
      row.dist_to_ustar = (u - ref.u_star).norm() / und;

      double w1 = 0.0;
      for (int i = 0; i < pop.size(); ++i) {
        if (categorical_)
          w1 += w1_categorical_1d(pop.individuals[i].p, pss_star_[i]);
        else
          w1 += (pop.individuals[i].p - pss_star_[i]).norm();
      }
      row.w1_to_ss = w1 / pop.size();
    } else {
      row.opt_gap_rel = std::numeric_limits<double>::quiet_NaN();
      row.dist_to_ustar = std::numeric_limits<double>::quiet_NaN();
      row.w1_to_ss = std::numeric_limits<double>::quiet_NaN();
    }
  }

  void bind(const Population& pop) { pop_ = &pop; }

 private:
  const Eigen::VectorXd& steady(const Eigen::VectorXd& u, int i) {
    if (const auto* lin = std::get_if<LinearDynamics>(&model_)) {
      warm_[i] = lu_.solve(lin->B * u + lin->E * pop_d(i));
      return warm_[i];
    }
    if (std::holds_alternative<SoftmaxDynamics>(model_)) {
      warm_[i] = steady_state(model_, u, pop_d(i)).p;
      return warm_[i];
    }
    // Polarized: warm-started fixed point with preallocated scratch; this
    // runs for every individual at every iteration.
    const auto& pol = std::get<PolarizedDynamics>(model_);
    Eigen::VectorXd& p = warm_[i];
    if (p.size() == 0) p = pop_d(i);
    const Eigen::VectorXd& d = pop_d(i);
    if (scratch_.size() != p.size()) scratch_.resize(p.size());
    for (int it = 0; it < kSteadyStateMaxIter; ++it) {
      scratch_ = pol.lambda * p + (1.0 - pol.lambda) * d +
                 (pol.sigma * p.dot(u)) * u;
      const double n = scratch_.norm();
      if (n < 1e-12)
        throw DegenerateStateError("run_online diagnostics: degenerate "
                                   "polarized intermediate");
      scratch_ /= n;
      const double diff = (scratch_ - p).norm();
      p.swap(scratch_);
      if (diff <= kWarmTol) return p;
    }
    throw NonConvergenceError(
        "run_online diagnostics: steady-state tracking did not converge",
        0.0);
  }

  const Eigen::VectorXd& pop_d(int i) const { return pop_->individuals[i].d; }

  const DynamicsModel& model_;
  const Objective& objective_;
  const RunOptions& options_;
  const Population* pop_ = nullptr;
  Eigen::MatrixXd vk_chol_t_;
  bool vk_identity_ = false;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  bool categorical_ = false;
  std::vector<Eigen::VectorXd> pss_star_;
  std::vector<Eigen::VectorXd> warm_;
  Eigen::VectorXd scratch_;
};

double mean_objective_at(const Objective& objective, const Population& pop,
                         const Eigen::VectorXd& u) {
  double total = 0.0;
  for (const Individual& ind : pop.individuals)
    total += objective_value(objective, u, ind.p);
  return total / pop.size();
}

}  // namespace

RunRecord run_online(OnlineAlgorithm algorithm, const DynamicsModel& model,
                     const Objective& objective, const Constraint& constraint,
                     Population pop, std::uint64_t seed,
                     const RunOptions& options) {
  if (options.horizon < 0) throw Error("run_online: horizon must be >= 0");
  if (pop.size() == 0) throw Error("run_online: empty population");
  validate(model);
  const auto t_start = std::chrono::steady_clock::now();

  const int n = decision_dim(model, pop.dim_state);
  Eigen::VectorXd u = project(constraint, Eigen::VectorXd::Zero(n));

  RunRecord rec;
  rec.algorithm = algorithm_name(algorithm);
  rec.seed = seed;
  rec.u_initial = u;

  Diagnostics diag(model, objective, pop, options);
  diag.bind(pop);

  Rng run_rng = Rng::from_seed(seed);
  DfoState dfo;

  double true_grad_acc = 0.0;

  IterationRow row0;
  row0.iter = 0;
  diag.fill_row(row0, pop, u);
  rec.rows.push_back(row0);
  rec.decisions.push_back(u);

  for (int k = 1; k <= options.horizon; ++k) {
    try {
      if (options.true_grad_sq) true_grad_acc += options.true_grad_sq(u);

      Rng iter_rng = run_rng.split(static_cast<std::uint64_t>(k));
      GradientEstimate grad;
      Eigen::VectorXd u_next;
      switch (algorithm) {
        case OnlineAlgorithm::composite: {
          StepResult s =
              step_composite(u, objective, constraint, model, pop, options.eta,
                             options.n_mb, iter_rng, options.sensitivity_mode);
          u_next = std::move(s.u_next);
          grad = std::move(s.grad);
          break;
        }
        case OnlineAlgorithm::vanilla: {
          StepResult s = step_vanilla(u, objective, constraint, pop,
                                      options.eta, options.n_mb, iter_rng);
          u_next = std::move(s.u_next);
          grad = std::move(s.grad);
          break;
        }
        case OnlineAlgorithm::dfo: {
          const Eigen::VectorXd query =
              dfo_perturbed_query(dfo, u, options.dfo_delta, iter_rng);
          const double phi = mean_objective_at(objective, pop, query);
          DfoStepResult s = step_dfo(dfo, u, phi, constraint, options.eta,
                                     options.dfo_delta);
          u_next = std::move(s.u_next);
          grad.total = std::move(s.estimate);
          grad.term_adapt = grad.total;
          grad.term_anticipate = Eigen::VectorXd::Zero(n);
          break;
        }
      }

      u = std::move(u_next);
      pop = evolve_population(model, std::move(pop), u);
      diag.bind(pop);

      IterationRow row;
      row.iter = k;
      row.grad_norm = grad.total.norm();
      row.grad_adapt_norm = grad.term_adapt.norm();
      row.grad_anticipate_norm = grad.term_anticipate.norm();
      diag.fill_row(row, pop, u);
      rec.rows.push_back(row);
      rec.decisions.push_back(u);
    } catch (const Error& e) {
      throw Error("run_online[" + rec.algorithm + ", iteration " +
                  std::to_string(k) + "]: " + e.what());
    }
  }

  rec.u_final = u;
  rec.final_population = std::move(pop);
  rec.final_gap = rec.rows.back().opt_gap_rel;
  rec.final_dist = rec.rows.back().dist_to_ustar;
  rec.avg_true_grad_sq =
      options.true_grad_sq && options.horizon > 0
          ? true_grad_acc / options.horizon
          : std::numeric_limits<double>::quiet_NaN();
  rec.wall_time_s = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t_start)
                        .count();
  return rec;
}

}  // namespace ddopt
