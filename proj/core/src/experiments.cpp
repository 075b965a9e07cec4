#include "ddopt/experiments.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "ddopt/csv.hpp"
#include "ddopt/errors.hpp"
#include "ddopt/sensitivity.hpp"

namespace ddopt {

namespace {

using nlohmann::json;

constexpr std::uint64_t kDefaultSeed = 12345;

std::string vector_to_csv(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    append_double(out, v(i));
  }
  return out;
}

int algorithm_index(const std::string& name) {
  if (name == "vanilla") return 0;
  if (name == "composite") return 1;
  if (name == "dfo") return 2;
  throw ConfigError("unknown algorithm '" + name +
                    "' (expected vanilla, composite, or dfo)");
}

OnlineAlgorithm algorithm_from_string(const std::string& name) {
  switch (algorithm_index(name)) {
    case 0:
      return OnlineAlgorithm::vanilla;
    case 1:
      return OnlineAlgorithm::composite;
    default:
      return OnlineAlgorithm::dfo;
  }
}

}  // namespace

Scenario scenario_from_string(const std::string& name) {
  if (name == "polarized") return Scenario::polarized;
  if (name == "recommender") return Scenario::recommender;
  if (name == "rate_sweep") return Scenario::rate_sweep;
  throw ConfigError("unknown scenario '" + name +
                    "' (expected polarized, recommender, or rate_sweep)");
}

const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::polarized:
      return "polarized";
    case Scenario::recommender:
      return "recommender";
    case Scenario::rate_sweep:
      return "rate_sweep";
  }
  return "?";
}

Profile profile_from_string(const std::string& name) {
  if (name == "fast") return Profile::fast;
  if (name == "paper") return Profile::paper;
  throw ConfigError("unknown profile '" + name + "' (expected fast or paper)");
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                          std::uint64_t index) {
  return Rng::from_seed(master).split(stream).split(index).key();
}

ExperimentConfig load_experiment_config(const Config& cfg, Profile profile) {
  ExperimentConfig out;
  out.scenario = scenario_from_string(cfg.require_string("scenario"));
  out.profile = profile;
  out.seed = static_cast<std::uint64_t>(
      cfg.get_int("seed", static_cast<std::int64_t>(kDefaultSeed)));
  out.output_dir = cfg.get_string(
      "output.dir", std::string("out/") + scenario_name(out.scenario));

  switch (out.scenario) {
    case Scenario::polarized: {
      out.dim = static_cast<int>(cfg.get_int("population.dim", 20));
      const int default_size = profile == Profile::paper ? 1000 : 500;
      out.population_size =
          static_cast<int>(cfg.get_int("population.size", default_size));
      out.lambda = cfg.get_double("dynamics.lambda", 0.4);
      out.sigma = cfg.get_double("dynamics.sigma", 0.5);
      out.algorithms = cfg.get_list("algorithm.list", "vanilla,composite");
      out.horizon = static_cast<int>(cfg.get_int("algorithm.T", 2000));
      out.eta = cfg.get_double("algorithm.eta", 5e-3);
      out.n_mb = static_cast<int>(cfg.get_int("algorithm.n_mb", 50));
      out.n_trials = static_cast<int>(cfg.get_int("algorithm.n_trials", 20));
      break;
    }
    case Scenario::recommender: {
      out.dim = static_cast<int>(cfg.get_int("population.dim", 100));
      out.population_size = static_cast<int>(cfg.get_int("population.size", 1));
      out.lambda1 = cfg.get_double("dynamics.lambda1", 0.2);
      out.lambda2 = cfg.get_double("dynamics.lambda2", 0.5);
      out.epsilon = cfg.get_double("dynamics.epsilon", 0.5);
      out.rho = cfg.get_double("objective.rho", 0.1);
      out.budget = cfg.get_double("constraint.budget", 250.0);
      out.cap = cfg.get_double("constraint.cap", 5.0);
      out.algorithms = cfg.get_list("algorithm.list", "vanilla,dfo,composite");
      // Horizon at which the composite trace has reached its plateau under
      // the case study's step size; shorter runs stop visibly early.
      out.horizon = static_cast<int>(cfg.get_int("algorithm.T", 8000));
      out.eta = cfg.get_double("algorithm.eta", 0.5);
      out.n_mb = static_cast<int>(cfg.get_int("algorithm.n_mb", 1));
      out.n_trials = static_cast<int>(cfg.get_int("algorithm.n_trials", 20));
      out.dfo_eta = cfg.get_double("dfo.eta", 0.1);
      out.dfo_delta = cfg.get_double("dfo.delta", 2.0);
      break;
    }
    case Scenario::rate_sweep: {
      out.dim = static_cast<int>(cfg.get_int("population.dim", 5));
      out.population_size =
          static_cast<int>(cfg.get_int("population.size", 200));
      out.algorithms = {"composite"};
      std::vector<std::int64_t> hs =
          cfg.get_int_list("rate.horizons", "400,1600,6400");
      for (const auto h : hs) out.horizons.push_back(static_cast<int>(h));
      out.eta_base = cfg.get_double("rate.eta_base", 0.3);
      out.sweep_trials = static_cast<int>(cfg.get_int("rate.trials", 10));
      out.sweep_n_mb = static_cast<int>(cfg.get_int("rate.n_mb", 10));
      out.spectral_radius = cfg.get_double("rate.spectral_radius", 0.6);
      break;
    }
  }
  out.oracle_restarts = static_cast<int>(cfg.get_int("oracle.restarts", 10));
  out.oracle_max_iter = static_cast<int>(cfg.get_int("oracle.max_iter", 20000));

  const std::vector<std::string> unknown = cfg.unconsumed_keys();
  if (!unknown.empty()) {
    std::string msg = "config: unknown key(s):";
    for (const std::string& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  if (out.algorithms.empty())
    throw ConfigError("config: algorithm.list must not be empty");
  for (const std::string& a : out.algorithms) algorithm_index(a);
  if (out.horizon < 0 || out.n_trials < 1 || out.population_size < 1)
    throw ConfigError("config: sizes and counts must be positive");
  out.resolved = cfg.resolved();
  return out;
}

std::vector<RunRecord> run_trials(int n_trials, int jobs,
                                  const std::function<RunRecord(int)>& fn) {
  if (n_trials <= 0) return {};
  std::vector<RunRecord> results(n_trials);
  const int workers = std::max(1, std::min(jobs, n_trials));
  if (workers == 1) {
    for (int t = 0; t < n_trials; ++t) results[t] = fn(t);
    return results;
  }
  std::atomic<int> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int t = next.fetch_add(1);
        if (t >= n_trials) return;
        try {
          results[t] = fn(t);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

namespace {

void aggregate_by_algorithm(ExperimentResult& result) {
  std::map<std::string, std::vector<RunRecord>> grouped;
  for (const RunRecord& r : result.records) grouped[r.algorithm].push_back(r);
  for (auto& [name, records] : grouped)
    result.aggregate[name] = convergence_measures(records);
}

}  // namespace

ExperimentResult case_study_polarized(const ExperimentConfig& cfg, int jobs) {
  if (cfg.scenario != Scenario::polarized)
    throw ConfigError("case_study_polarized: wrong scenario");
  const DynamicsModel model = PolarizedDynamics{cfg.lambda, cfg.sigma};
  const Objective objective = AffinityObjective{};
  const Constraint constraint = NormBallConstraint{1.0};

  ExperimentResult result;
  result.config = cfg;

  // One hemisphere reference for the whole experiment: trials draw fresh
  // samples from the same underlying distribution, so the reference optimum
  // is commensurable across them.
  const Eigen::VectorXd ref = hemisphere_reference(
      cfg.dim, derive_seed(cfg.seed, kStreamReference, 0));

  // One reference optimum for all trials, computed on its own
  // seed-derived population of the same size.
  const std::uint64_t oracle_pop_seed =
      derive_seed(cfg.seed, kStreamOracle, 0);
  const Population oracle_pop =
      sample_hemisphere(cfg.dim, cfg.population_size, oracle_pop_seed, ref);
  result.oracle =
      oracle_solve(model, objective, constraint, oracle_pop,
                   cfg.oracle_restarts, cfg.oracle_max_iter,
                   derive_seed(cfg.seed, kStreamOracle, 1));

  for (const std::string& name : cfg.algorithms) {
    const OnlineAlgorithm algorithm = algorithm_from_string(name);
    const int alg_idx = algorithm_index(name);
    std::vector<RunRecord> records =
        run_trials(cfg.n_trials, jobs, [&](int trial) {
          const std::uint64_t pop_seed =
              derive_seed(cfg.seed, kStreamPopulation, trial);
          Population pop =
              sample_hemisphere(cfg.dim, cfg.population_size, pop_seed, ref);
          RunOptions options;
          options.horizon = cfg.horizon;
          options.eta = cfg.eta;
          options.n_mb = cfg.n_mb;
          options.sensitivity_mode = SensitivityMode::online;
          options.dfo_delta = cfg.dfo_delta;
          options.reference = result.oracle;
          RunRecord rec = run_online(
              algorithm, model, objective, constraint, std::move(pop),
              derive_seed(cfg.seed, kStreamRun,
                          static_cast<std::uint64_t>(alg_idx) * (1u << 20) +
                              trial),
              options);
          rec.trial = trial;
          rec.population_seed = pop_seed;
          return rec;
        });
    for (RunRecord& r : records) result.records.push_back(std::move(r));
  }

  aggregate_by_algorithm(result);
  result.notes["w1_kind"] =
      "euclidean distance to the optimal steady state, averaged under the "
      "identity coupling (upper bound on the transport distance)";
  result.notes["vk_metric"] = "identity (heuristic: no closed-form "
                              "contraction metric for polarized dynamics)";
  result.notes["oracle_population_seed"] = std::to_string(oracle_pop_seed);
  result.notes["hemisphere_ref"] = vector_to_csv(ref);
  return result;
}

ExperimentResult case_study_recommender(const ExperimentConfig& cfg,
                                        int jobs) {
  if (cfg.scenario != Scenario::recommender)
    throw ConfigError("case_study_recommender: wrong scenario");
  const DynamicsModel model =
      SoftmaxDynamics{cfg.lambda1, cfg.lambda2, cfg.epsilon};
  const Objective objective = GainEntropyObjective{cfg.rho};
  const Constraint constraint = CappedSimplexConstraint{cfg.budget, cfg.cap};

  ExperimentResult result;
  result.config = cfg;

  const std::uint64_t user_seed = derive_seed(cfg.seed, kStreamPopulation, 0);
  const Population user = sample_simplex(cfg.dim, cfg.population_size,
                                         user_seed);
  result.oracle =
      oracle_solve(model, objective, constraint, user, cfg.oracle_restarts,
                   cfg.oracle_max_iter, derive_seed(cfg.seed, kStreamOracle, 1));

  for (const std::string& name : cfg.algorithms) {
    const OnlineAlgorithm algorithm = algorithm_from_string(name);
    const int alg_idx = algorithm_index(name);
    // The deterministic single-user updates need no replication.
    const int trials = algorithm == OnlineAlgorithm::dfo ? cfg.n_trials : 1;
    std::vector<RunRecord> records = run_trials(trials, jobs, [&](int trial) {
      RunOptions options;
      options.horizon = cfg.horizon;
      options.eta = algorithm == OnlineAlgorithm::dfo ? cfg.dfo_eta : cfg.eta;
      options.n_mb = cfg.n_mb;
      options.dfo_delta = cfg.dfo_delta;
      options.reference = result.oracle;
      RunRecord rec = run_online(
          algorithm, model, objective, constraint, user,
          derive_seed(cfg.seed, kStreamRun,
                      static_cast<std::uint64_t>(alg_idx) * (1u << 20) + trial),
          options);
      rec.trial = trial;
      rec.population_seed = user_seed;
      return rec;
    });
    for (RunRecord& r : records) result.records.push_back(std::move(r));
  }

  aggregate_by_algorithm(result);
  const ContractionCertificate cert = contraction_certificate(model, cfg.dim);
  result.notes["w1_kind"] = "exact categorical distance, index ground metric";
  result.notes["vk_metric"] = "identity (certificate metric)";
  result.notes["certificate_Lfp"] = double_to_string(cert.Lfp);
  result.notes["certificate_Lhu"] = double_to_string(cert.Lhu);
  result.notes["certificate_rho1"] = double_to_string(cert.rho1);
  result.notes["certificate_rho2"] = double_to_string(cert.rho2);
  result.notes["user_seed"] = std::to_string(user_seed);
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, int jobs) {
  switch (cfg.scenario) {
    case Scenario::polarized:
      return case_study_polarized(cfg, jobs);
    case Scenario::recommender:
      return case_study_recommender(cfg, jobs);
    case Scenario::rate_sweep:
      throw ConfigError(
          "run_experiment: rate_sweep runs through the sweep entry point");
  }
  throw Error("run_experiment: unreachable");
}

// ---------------------------------------------------------------------------
// Rate sweep.
// ---------------------------------------------------------------------------

RateInstance make_rate_instance(const ExperimentConfig& cfg) {
  const int m = cfg.dim;
  Rng rng = Rng::from_seed(derive_seed(cfg.seed, kStreamInstance, 0));
  Eigen::MatrixXd A(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) A(i, j) = rng.gaussian();
  const double rho_now = A.eigenvalues().cwiseAbs().maxCoeff();
  A *= cfg.spectral_radius / rho_now;

  LinearDynamics lin;
  lin.A = A;
  lin.B = Eigen::MatrixXd::Identity(m, m);
  lin.E = Eigen::MatrixXd::Identity(m, m);

  RateInstance inst;
  inst.pop = sample_gaussian(m, m, cfg.population_size,
                             derive_seed(cfg.seed, kStreamPopulation, 0));

  QuadraticTestObjective obj;
  obj.u_target = Eigen::VectorXd::Zero(m);
  obj.p_target = Eigen::VectorXd::Ones(m);

  // Closed form: p_ss(u) = F B u + F E d with F = (I - A)^{-1}, so the
  // reduced gradient is (u - a) + H (F B u + mean(F E d) - c).
  const Eigen::MatrixXd F =
      (Eigen::MatrixXd::Identity(m, m) - lin.A).partialPivLu().inverse();
  const Eigen::MatrixXd FB = F * lin.B;
  const Eigen::MatrixXd H = FB.transpose();
  Eigen::VectorXd mean_fed = Eigen::VectorXd::Zero(m);
  for (const Individual& ind : inst.pop.individuals)
    mean_fed += F * (lin.E * ind.d);
  mean_fed /= inst.pop.size();
  const Eigen::VectorXd a = obj.u_target;
  const Eigen::VectorXd c = obj.p_target;
  inst.true_grad_sq = [FB, H, mean_fed, a, c](const Eigen::VectorXd& u) {
    const Eigen::VectorXd g = (u - a) + H * (FB * u + mean_fed - c);
    return g.squaredNorm();
  };

  inst.model = std::move(lin);
  inst.objective = std::move(obj);
  return inst;
}

RateSweepSummary rate_sweep(const ExperimentConfig& cfg,
                            const std::vector<int>& horizons, int jobs) {
  if (horizons.size() < 3)
    throw Error("rate_sweep: need at least 3 horizons for a slope");
  const RateInstance inst = make_rate_instance(cfg);

  RateSweepSummary summary;
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    const int T = horizons[h];
    if (T < 1) throw Error("rate_sweep: horizons must be positive");
    const double eta = cfg.eta_base / std::sqrt(static_cast<double>(T));
    std::vector<RunRecord> records =
        run_trials(cfg.sweep_trials, jobs, [&](int trial) {
          RunOptions options;
          options.horizon = T;
          options.eta = eta;
          options.n_mb = cfg.sweep_n_mb;
          options.true_grad_sq = inst.true_grad_sq;
          RunRecord rec = run_online(
              OnlineAlgorithm::composite, inst.model, inst.objective,
              Unconstrained{}, inst.pop,
              derive_seed(cfg.seed, kStreamRun,
                          (static_cast<std::uint64_t>(h) << 32) + trial),
              options);
          rec.trial = trial;
          return rec;
        });
    double mean = 0.0;
    for (const RunRecord& r : records) mean += r.avg_true_grad_sq;
    mean /= records.size();
    summary.horizons.push_back(T);
    summary.etas.push_back(eta);
    summary.avg_grad_sq.push_back(mean);
  }

  // Least-squares slope of log(measure) against log(T).
  const std::size_t n = summary.horizons.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(static_cast<double>(summary.horizons[i]));
    const double y = std::log(summary.avg_grad_sq[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  summary.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return summary;
}

// ---------------------------------------------------------------------------
// Output files.
// ---------------------------------------------------------------------------

void write_run_csv(const RunRecord& record, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("write_run_csv: cannot open " + path);
  f << "# schema=" << kRunCsvSchema << '\n' << kRunCsvHeader << '\n';
  std::string line;
  for (const IterationRow& r : record.rows) {
    line.clear();
    line += std::to_string(r.iter);
    for (const double v :
         {r.objective, r.opt_gap_rel, r.dist_to_ustar, r.grad_norm,
          r.grad_adapt_norm, r.grad_anticipate_norm, r.w1_to_ss,
          r.v_k_estimate}) {
      line += ',';
      append_double(line, v);
    }
    f << line << '\n';
  }
}

void write_aggregate_csv(const ExperimentResult& result,
                         const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("write_aggregate_csv: cannot open " + path);
  f << "# schema=ddopt.aggregate.v1\n";
  f << "algorithm,iter";
  for (const char* m : {"objective", "grad_sq", "opt_gap_rel", "dist_to_ustar",
                        "w1_to_ss", "v_k"})
    f << ',' << m << "_mean," << m << "_min," << m << "_max";
  f << '\n';
  for (const std::string& name : result.config.algorithms) {
    const auto it = result.aggregate.find(name);
    if (it == result.aggregate.end()) continue;
    const ConvergenceSummary& s = it->second;
    for (int k = 0; k <= s.horizon; ++k) {
      std::string line = name;
      line += ',';
      line += std::to_string(k);
      for (const EnvelopeSeries* series :
           {&s.objective, &s.grad_sq, &s.opt_gap_rel, &s.dist_to_ustar,
            &s.w1_to_ss, &s.v_k}) {
        line += ',';
        append_double(line, series->mean[k]);
        line += ',';
        append_double(line, series->min[k]);
        line += ',';
        append_double(line, series->max[k]);
      }
      f << line << '\n';
    }
  }
}

void write_rate_sweep_csv(const RateSweepSummary& summary,
                          const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("write_rate_sweep_csv: cannot open " + path);
  f << "# schema=ddopt.rate_sweep.v1\n";
  f << "horizon,eta,avg_true_grad_sq\n";
  for (std::size_t i = 0; i < summary.horizons.size(); ++i) {
    std::string line = std::to_string(summary.horizons[i]);
    line += ',';
    append_double(line, summary.etas[i]);
    line += ',';
    append_double(line, summary.avg_grad_sq[i]);
    f << line << '\n';
  }
}

void write_metadata_json(const ExperimentResult& result,
                         const std::string& path) {
  json meta;
  meta["schema"] = "ddopt.metadata.v1";
  meta["scenario"] = scenario_name(result.config.scenario);
  meta["profile"] =
      result.config.profile == Profile::paper ? "paper" : "fast";
  meta["seed"] = result.config.seed;
  meta["resolved_config"] = result.config.resolved;
  meta["notes"] = result.notes;

  json oracle;
  oracle["value_star"] = result.oracle.value_star;
  oracle["residual"] = result.oracle.residual;
  oracle["restarts"] = result.oracle.restarts;
  oracle["u_star"] = std::vector<double>(
      result.oracle.u_star.data(),
      result.oracle.u_star.data() + result.oracle.u_star.size());
  meta["oracle"] = oracle;

  json runs = json::array();
  for (const RunRecord& r : result.records) {
    json run;
    run["algorithm"] = r.algorithm;
    run["trial"] = r.trial;
    run["seed"] = r.seed;
    run["population_seed"] = r.population_seed;
    run["final_gap"] = r.final_gap;
    run["final_dist"] = r.final_dist;
    run["wall_time_s"] = r.wall_time_s;
    run["u_initial"] = std::vector<double>(
        r.u_initial.data(), r.u_initial.data() + r.u_initial.size());
    run["u_final"] = std::vector<double>(
        r.u_final.data(), r.u_final.data() + r.u_final.size());
    runs.push_back(std::move(run));
  }
  meta["runs"] = runs;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("write_metadata_json: cannot open " + path);
  f << meta.dump(2) << '\n';
}

std::vector<std::string> write_experiment_outputs(
    const ExperimentResult& result) {
  namespace fs = std::filesystem;
  const fs::path dir(result.config.output_dir);
  fs::create_directories(dir);
  const std::string scen = scenario_name(result.config.scenario);

  std::vector<std::string> written;
  for (const RunRecord& r : result.records) {
    char name[128];
    std::snprintf(name, sizeof name, "%s_%s_trial%02d.csv", scen.c_str(),
                  r.algorithm.c_str(), r.trial);
    const std::string path = (dir / name).string();
    write_run_csv(r, path);
    written.push_back(path);
  }
  const std::string agg = (dir / (scen + "_aggregate.csv")).string();
  write_aggregate_csv(result, agg);
  written.push_back(agg);
  const std::string meta = (dir / (scen + "_metadata.json")).string();
  write_metadata_json(result, meta);
  written.push_back(meta);
  return written;
}

}  // namespace ddopt
