#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ddopt/config.hpp"
#include "ddopt/optimizers.hpp"
#include "ddopt/transport.hpp"

namespace ddopt {

enum class Scenario { polarized, recommender, rate_sweep };
enum class Profile { fast, paper };

Scenario scenario_from_string(const std::string& name);
const char* scenario_name(Scenario s);
Profile profile_from_string(const std::string& name);

// Resolved experiment parameters. Defaults depend on the scenario and the
// profile; explicit config keys and overrides win over both.
struct ExperimentConfig {
  Scenario scenario = Scenario::polarized;
  Profile profile = Profile::fast;
  std::uint64_t seed = 0;

  int population_size = 0;
  int dim = 0;

  // polarized dynamics
  double lambda = 0.0;
  double sigma = 0.0;

  // recommender dynamics / objective / constraint
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double epsilon = 0.0;
  double rho = 0.0;
  double budget = 0.0;
  double cap = 0.0;

  std::vector<std::string> algorithms;
  int horizon = 0;
  double eta = 0.0;
  int n_mb = 1;
  int n_trials = 1;
  double dfo_eta = 0.1;
  double dfo_delta = 2.0;

  int oracle_restarts = 10;
  int oracle_max_iter = 20000;

  // rate sweep instance
  std::vector<int> horizons;
  double eta_base = 1.0;
  int sweep_trials = 10;
  int sweep_n_mb = 10;
  double spectral_radius = 0.6;

  std::string output_dir;

  // Echo of every key that was looked up, defaults included.
  std::map<std::string, std::string> resolved;
};

// Reads and validates the scenario's keys; throws ConfigError on unknown
// keys so overrides cannot silently miss.
ExperimentConfig load_experiment_config(const Config& cfg, Profile profile);

// Runs fn(trial) for trial = 0 .. n_trials-1 on at most `jobs` workers.
// Results are collected by trial index, so scheduling cannot change output.
std::vector<RunRecord> run_trials(int n_trials, int jobs,
                                  const std::function<RunRecord(int)>& fn);

struct ExperimentResult {
  ExperimentConfig config;
  OracleSolution oracle;
  std::vector<RunRecord> records;  // grouped by algorithm, then trial
  // Per-algorithm envelope statistics across trials.
  std::map<std::string, ConvergenceSummary> aggregate;
  // Extra metadata recorded for the sidecar (seeds, flags, metric choices).
  std::map<std::string, std::string> notes;
};

ExperimentResult case_study_polarized(const ExperimentConfig& cfg, int jobs);
ExperimentResult case_study_recommender(const ExperimentConfig& cfg, int jobs);

// Dispatches on cfg.scenario (polarized or recommender).
ExperimentResult run_experiment(const ExperimentConfig& cfg, int jobs);

struct RateSweepSummary {
  std::vector<int> horizons;
  std::vector<double> etas;          // eta_base / sqrt(T)
  std::vector<double> avg_grad_sq;   // mean over trials of the per-run
                                     // average squared true gradient norm
  double slope = 0.0;                // least-squares log-log slope
};

// Stochastic composite runs on the quadratic objective + linear dynamics
// instance, one batch of trials per horizon, step size scaled by 1/sqrt(T).
RateSweepSummary rate_sweep(const ExperimentConfig& cfg,
                            const std::vector<int>& horizons, int jobs);

// The shared quadratic/linear test instance behind the sweep, exposed so
// oracles can evaluate the exact reduced gradient on it.
struct RateInstance {
  DynamicsModel model;
  Population pop;
  Objective objective;
  // Squared norm of the exact reduced gradient, closed form.
  std::function<double(const Eigen::VectorXd&)> true_grad_sq;
};
RateInstance make_rate_instance(const ExperimentConfig& cfg);

void write_rate_sweep_csv(const RateSweepSummary& summary,
                          const std::string& path);

// File outputs. One CSV per (algorithm, trial), one aggregate CSV per
// experiment, one JSON metadata sidecar.
void write_run_csv(const RunRecord& record, const std::string& path);
void write_aggregate_csv(const ExperimentResult& result,
                         const std::string& path);
void write_metadata_json(const ExperimentResult& result,
                         const std::string& path);

// Writes everything under cfg.output_dir; returns the file paths written.
std::vector<std::string> write_experiment_outputs(
    const ExperimentResult& result);

// Stable sub-seed derivation for named streams.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                          std::uint64_t index);

inline constexpr std::uint64_t kStreamPopulation = 1;
inline constexpr std::uint64_t kStreamRun = 2;
inline constexpr std::uint64_t kStreamOracle = 3;
inline constexpr std::uint64_t kStreamInstance = 4;
inline constexpr std::uint64_t kStreamReference = 5;

}  // namespace ddopt
