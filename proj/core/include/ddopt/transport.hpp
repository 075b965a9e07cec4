#pragma once

#include <Eigen/Core>
#include <vector>

#include "ddopt/distributions.hpp"
#include "ddopt/dynamics.hpp"
#include "ddopt/run_record.hpp"

namespace ddopt {

// Finitely supported measure; atoms need not be distinct.
struct DiscreteMeasure {
  std::vector<Eigen::VectorXd> support;
  Eigen::VectorXd mass;  // nonnegative, sums to 1 within 1e-10
};

// View of a simplex vector as a measure on the index line {0, 1, ..., m-1}.
DiscreteMeasure measure_from_simplex(const Eigen::VectorXd& p);

struct GroundMetric {
  enum class Kind { euclidean, weighted_p, index_abs };
  Kind kind = Kind::euclidean;
  Eigen::MatrixXd chol_lower;  // Cholesky factor of P for weighted_p

  static GroundMetric Euclidean() { return {Kind::euclidean, {}}; }
  static GroundMetric IndexAbs() { return {Kind::index_abs, {}}; }
  static GroundMetric WeightedP(const Eigen::MatrixXd& P);
};

double ground_cost(const GroundMetric& metric, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& y);

struct TransportPlan {
  Eigen::MatrixXd plan;  // nonnegative flows, row sums = mu, col sums = nu
  double cost = 0.0;
};

// Exact 1-Wasserstein distance between simplex vectors under the index
// metric |i - j|: the L1 distance of the cumulative sums.
double w1_categorical_1d(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

// Exact optimal transport between discrete measures (<= 500 atoms each) via
// the transportation simplex.
TransportPlan w1_discrete_exact(const DiscreteMeasure& mu,
                                const DiscreteMeasure& nu,
                                const GroundMetric& metric);

// Empirical mean of the P-weighted distance between each individual's state
// and its steady state under u; upper-bounds the transport distance between
// the current and steady-state joint distributions.
double vk_estimate(const Population& pop, const DynamicsModel& model,
                   const Eigen::VectorXd& u, const Eigen::MatrixXd& P);

// Per-iteration mean and min/max envelope across trials.
struct EnvelopeSeries {
  std::vector<double> mean, min, max;
};

struct ConvergenceSummary {
  int horizon = 0;  // shared T
  EnvelopeSeries objective;
  EnvelopeSeries grad_sq;      // squared mini-batch gradient norm
  EnvelopeSeries opt_gap_rel;
  EnvelopeSeries dist_to_ustar;
  EnvelopeSeries w1_to_ss;
  EnvelopeSeries v_k;
};

ConvergenceSummary convergence_measures(const std::vector<RunRecord>& records);

// Histogram of angles (degrees, [0, 180]) between each individual's current
// state and the decision q.
struct AngleHistogram {
  double bin_width_deg = 0.0;
  std::vector<int> counts;
  int total = 0;

  // Fraction of the population whose angle lies in [lo_deg, hi_deg), summed
  // from whole bins; the band must align with bin edges.
  double mass_fraction(double lo_deg, double hi_deg) const;
};

AngleHistogram angle_histogram(const Population& pop, const Eigen::VectorXd& q,
                               int n_bins);

}  // namespace ddopt
