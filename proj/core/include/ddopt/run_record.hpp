#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "ddopt/distributions.hpp"

namespace ddopt {

// One CSV row of an online run. Column order is fixed by kRunCsvHeader.
struct IterationRow {
  int iter = 0;
  double objective = 0.0;             // population mean of Phi(u_k, p_i)
  double opt_gap_rel = 0.0;           // (value* - value_k)/|value*| oriented
  double dist_to_ustar = 0.0;         // ||u_k - u*|| / ||u*||
  double grad_norm = 0.0;             // mini-batch estimate
  double grad_adapt_norm = 0.0;
  double grad_anticipate_norm = 0.0;
  double w1_to_ss = 0.0;              // transport distance to the steady
                                      // state induced by u*
  double v_k_estimate = 0.0;          // empirical steady-state tracking bound
};

inline constexpr const char* kRunCsvSchema = "ddopt.run.v1";
inline constexpr const char* kRunCsvHeader =
    "iter,objective,opt_gap_rel,dist_to_ustar,grad_norm,grad_adapt_norm,"
    "grad_anticipate_norm,w1_to_ss,v_k_estimate";

// Full trace of one trial of one algorithm.
struct RunRecord {
  std::string algorithm;
  int trial = 0;
  std::uint64_t seed = 0;
  std::uint64_t population_seed = 0;
  Eigen::VectorXd u_initial;
  Eigen::VectorXd u_final;
  std::vector<Eigen::VectorXd> decisions;  // u_0 ... u_T
  std::vector<IterationRow> rows;          // T + 1 rows
  Population final_population;             // state after the last evolution

  // Summary
  double final_gap = 0.0;
  double final_dist = 0.0;
  double wall_time_s = 0.0;
  // Mean of ||true reduced gradient||^2 over u_0..u_{T-1}; NaN unless the
  // run was asked to track it.
  double avg_true_grad_sq = 0.0;
};

}  // namespace ddopt
