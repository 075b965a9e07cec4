#include "ddopt/transport.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "ddopt/errors.hpp"

namespace ddopt {

namespace {

constexpr double kMassTol = 1e-10;
constexpr int kMaxAtoms = 500;

void validate_measure(const DiscreteMeasure& m, const char* name) {
  if (static_cast<std::size_t>(m.mass.size()) != m.support.size())
    throw DimensionError(std::string(name) + ": mass/support size mismatch");
  if (m.mass.size() == 0)
    throw FeasibilityError(std::string(name) + ": empty measure");
  if (m.mass.minCoeff() < -kMassTol)
    throw FeasibilityError(std::string(name) + ": negative mass");
  if (std::abs(m.mass.sum() - 1.0) > kMassTol)
    throw FeasibilityError(std::string(name) + ": masses sum to " +
                           std::to_string(m.mass.sum()) + ", expected 1");
}

}  // namespace

DiscreteMeasure measure_from_simplex(const Eigen::VectorXd& p) {
  DiscreteMeasure m;
  m.support.reserve(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i)
    m.support.push_back(Eigen::VectorXd::Constant(1, static_cast<double>(i)));
  m.mass = p;
  return m;
}

GroundMetric GroundMetric::WeightedP(const Eigen::MatrixXd& P) {
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success)
    throw Error("GroundMetric: P must be positive definite");
  return {Kind::weighted_p, llt.matrixL()};
}

double ground_cost(const GroundMetric& metric, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& y) {
  switch (metric.kind) {
    case GroundMetric::Kind::euclidean:
      return (x - y).norm();
    case GroundMetric::Kind::weighted_p:
      return (metric.chol_lower.transpose() * (x - y)).norm();
    case GroundMetric::Kind::index_abs:
      return std::abs(x(0) - y(0));
  }
  return 0.0;
}

double w1_categorical_1d(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size())
    throw DimensionError("w1_categorical_1d: dimension mismatch");
  if (std::abs(p.sum() - 1.0) > 1e-8 || std::abs(q.sum() - 1.0) > 1e-8 ||
      p.minCoeff() < -1e-12 || q.minCoeff() < -1e-12)
    throw FeasibilityError("w1_categorical_1d: inputs must lie in the simplex");
  double cum = 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i + 1 < p.size(); ++i) {
    cum += p(i) - q(i);
    total += std::abs(cum);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Transportation simplex (MODI / u-v method).
//
// Minimize sum_ij c_ij x_ij subject to row sums a_i and column sums b_j. The
// basis is a spanning tree of the bipartite supply/demand graph, kept as
// adjacency lists of basic cells. Each iteration: solve for the duals on the
// tree, pick the first cell with negative reduced cost in row-major order
// (Bland's rule, which also guards against cycling under degeneracy), trace
// the unique tree cycle through that cell, and pivot by the smallest flow on
// the leaving positions.
// ---------------------------------------------------------------------------

namespace {

struct BasicCell {
  int row;
  int col;
  double flow;
};

class TransportationSimplex {
 public:
  TransportationSimplex(Eigen::VectorXd a, Eigen::VectorXd b,
                        Eigen::MatrixXd cost)
      : a_(std::move(a)),
        b_(std::move(b)),
        cost_(std::move(cost)),
        n1_(static_cast<int>(a_.size())),
        n2_(static_cast<int>(b_.size())) {}

  Eigen::MatrixXd solve() {
    northwest_corner();
    const double scale = std::max(1.0, cost_.cwiseAbs().maxCoeff());
    const double tol = 1e-12 * scale;
    // Loose bound on basis exchanges; Bland's rule terminates well before.
    const long max_pivots = 64L * (n1_ + n2_) * (n1_ + n2_) + 4096;
    for (long pivot = 0; pivot < max_pivots; ++pivot) {
      compute_duals();
      int ei = -1, ej = -1;
      for (int i = 0; i < n1_ && ei < 0; ++i)
        for (int j = 0; j < n2_; ++j)
          if (!is_basic_(i, j) && cost_(i, j) - u_[i] - v_[j] < -tol) {
            ei = i;
            ej = j;
            break;
          }
      if (ei < 0) return extract_plan();
      pivot_on(ei, ej);
    }
    throw NonConvergenceError("w1_discrete_exact: pivot limit exceeded", 0.0);
  }

 private:
  void add_basic(int i, int j, double flow) {
    const int id = static_cast<int>(cells_.size());
    cells_.push_back({i, j, flow});
    row_cells_[i].push_back(id);
    col_cells_[j].push_back(id);
    is_basic_(i, j) = true;
  }

  void remove_basic(int id) {
    const BasicCell cell = cells_[id];
    is_basic_(cell.row, cell.col) = false;
    // Drop adjacency references while the cell still has index `id`, then
    // swap-remove and repoint references to the moved cell.
    erase_ref(row_cells_[cell.row], id);
    erase_ref(col_cells_[cell.col], id);
    const int last = static_cast<int>(cells_.size()) - 1;
    if (id != last) {
      cells_[id] = cells_[last];
      auto& rc = row_cells_[cells_[id].row];
      std::replace(rc.begin(), rc.end(), last, id);
      auto& cc = col_cells_[cells_[id].col];
      std::replace(cc.begin(), cc.end(), last, id);
    }
    cells_.pop_back();
  }

  static void erase_ref(std::vector<int>& list, int id) {
    list.erase(std::remove(list.begin(), list.end(), id), list.end());
  }

  void northwest_corner() {
    row_cells_.assign(n1_, {});
    col_cells_.assign(n2_, {});
    is_basic_ = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(
        n1_, n2_, false);
    Eigen::VectorXd ra = a_;
    Eigen::VectorXd rb = b_;
    int i = 0, j = 0;
    // Exactly n1 + n2 - 1 basic cells, zero flows included when supplies and
    // demands tie.
    while (true) {
      const double x = std::min(ra(i), rb(j));
      add_basic(i, j, x);
      ra(i) -= x;
      rb(j) -= x;
      if (i == n1_ - 1 && j == n2_ - 1) break;
      if (j == n2_ - 1)
        ++i;
      else if (i == n1_ - 1)
        ++j;
      else if (ra(i) <= rb(j))
        ++i;
      else
        ++j;
    }
  }

  // Duals from the spanning tree: fix u_0 = 0 and propagate
  // c_ij = u_i + v_j across basic cells.
  void compute_duals() {
    u_.assign(n1_, 0.0);
    v_.assign(n2_, 0.0);
    std::vector<bool> row_done(n1_, false), col_done(n2_, false);
    std::vector<int> stack;
    row_done[0] = true;
    stack.push_back(0);  // encoded: rows are [0, n1), cols are [n1, n1+n2)
    while (!stack.empty()) {
      const int node = stack.back();
      stack.pop_back();
      if (node < n1_) {
        for (const int id : row_cells_[node]) {
          const int j = cells_[id].col;
          if (!col_done[j]) {
            v_[j] = cost_(node, j) - u_[node];
            col_done[j] = true;
            stack.push_back(n1_ + j);
          }
        }
      } else {
        const int j = node - n1_;
        for (const int id : col_cells_[j]) {
          const int i = cells_[id].row;
          if (!row_done[i]) {
            u_[i] = cost_(i, j) - v_[j];
            row_done[i] = true;
            stack.push_back(i);
          }
        }
      }
    }
  }

  // Unique tree path from row `ei` to column `ej`; together with the
  // entering cell it closes the pivot cycle.
  std::vector<int> tree_path(int ei, int ej) const {
    const int n_nodes = n1_ + n2_;
    std::vector<int> parent_edge(n_nodes, -1);
    std::vector<bool> seen(n_nodes, false);
    std::vector<int> stack;
    seen[ei] = true;
    stack.push_back(ei);
    while (!stack.empty()) {
      const int node = stack.back();
      stack.pop_back();
      if (node == n1_ + ej) break;
      const auto& ids = node < n1_ ? row_cells_[node] : col_cells_[node - n1_];
      for (const int id : ids) {
        const int next =
            node < n1_ ? n1_ + cells_[id].col : cells_[id].row;
        if (!seen[next]) {
          seen[next] = true;
          parent_edge[next] = id;
          stack.push_back(next);
        }
      }
    }
    std::vector<int> path;
    int node = n1_ + ej;
    while (node != ei) {
      const int id = parent_edge[node];
      path.push_back(id);
      node = node == cells_[id].row ? n1_ + cells_[id].col : cells_[id].row;
    }
    return path;  // from the column end back to the row end
  }

  void pivot_on(int ei, int ej) {
    const std::vector<int> path = tree_path(ei, ej);
    // Walking from ej back to ei, the first path edge shares column ej with
    // the entering cell, so signs along the path alternate -, +, -, ...
    double theta = std::numeric_limits<double>::infinity();
    int leaving = -1;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const double flow = cells_[path[k]].flow;
      // Ties broken on the stable (row, col) order.
      if (flow < theta ||
          (flow == theta && cell_less(cells_[path[k]], cells_[leaving]))) {
        theta = flow;
        leaving = path[k];
      }
    }
    for (std::size_t k = 0; k < path.size(); ++k)
      cells_[path[k]].flow += (k % 2 == 0) ? -theta : theta;
    remove_basic(leaving);
    add_basic(ei, ej, theta);
  }

  static bool cell_less(const BasicCell& x, const BasicCell& y) {
    return x.row != y.row ? x.row < y.row : x.col < y.col;
  }

  Eigen::MatrixXd extract_plan() const {
    Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(n1_, n2_);
    for (const BasicCell& c : cells_)
      plan(c.row, c.col) += std::max(0.0, c.flow);
    return plan;
  }

  Eigen::VectorXd a_, b_;
  Eigen::MatrixXd cost_;
  int n1_, n2_;
  std::vector<BasicCell> cells_;
  std::vector<std::vector<int>> row_cells_, col_cells_;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> is_basic_;
  std::vector<double> u_, v_;
};

}  // namespace

TransportPlan w1_discrete_exact(const DiscreteMeasure& mu,
                                const DiscreteMeasure& nu,
                                const GroundMetric& metric) {
  validate_measure(mu, "w1_discrete_exact: mu");
  validate_measure(nu, "w1_discrete_exact: nu");
  const int m1 = static_cast<int>(mu.mass.size());
  const int m2 = static_cast<int>(nu.mass.size());
  if (m1 > kMaxAtoms || m2 > kMaxAtoms)
    throw DimensionError("w1_discrete_exact: supports capped at " +
                         std::to_string(kMaxAtoms) + " atoms");

  // Zero-mass atoms drop out of the problem.
  std::vector<int> rows, cols;
  for (int i = 0; i < m1; ++i)
    if (mu.mass(i) > 0.0) rows.push_back(i);
  for (int j = 0; j < m2; ++j)
    if (nu.mass(j) > 0.0) cols.push_back(j);
  const int n1 = static_cast<int>(rows.size());
  const int n2 = static_cast<int>(cols.size());

  Eigen::VectorXd a(n1), b(n2);
  for (int i = 0; i < n1; ++i) a(i) = mu.mass(rows[i]);
  for (int j = 0; j < n2; ++j) b(j) = nu.mass(cols[j]);
  // Absorb the (toleranced) normalization mismatch so the marginal equations
  // are exactly balanced.
  b(n2 - 1) += a.sum() - b.sum();
  if (b(n2 - 1) < 0.0)
    throw FeasibilityError("w1_discrete_exact: unbalanced masses");

  Eigen::MatrixXd cost(n1, n2);
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j)
      cost(i, j) = ground_cost(metric, mu.support[rows[i]],
                               nu.support[cols[j]]);

  TransportationSimplex simplex(a, b, cost);
  const Eigen::MatrixXd reduced = simplex.solve();

  TransportPlan out;
  out.plan = Eigen::MatrixXd::Zero(m1, m2);
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) out.plan(rows[i], cols[j]) = reduced(i, j);
  out.cost = (reduced.array() * cost.array()).sum();
  return out;
}

double vk_estimate(const Population& pop, const DynamicsModel& model,
                   const Eigen::VectorXd& u, const Eigen::MatrixXd& P) {
  if (pop.size() == 0) throw Error("vk_estimate: empty population");
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success)
    throw Error("vk_estimate: P must be positive definite");
  const Eigen::MatrixXd Lt = Eigen::MatrixXd(llt.matrixL()).transpose();
  double total = 0.0;
  for (const Individual& ind : pop.individuals) {
    const Eigen::VectorXd pss = steady_state(model, u, ind.d).p;
    total += (Lt * (ind.p - pss)).norm();
  }
  return total / pop.size();
}

namespace {

void envelope_push(EnvelopeSeries& s, const std::vector<double>& values) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.mean.push_back(std::accumulate(values.begin(), values.end(), 0.0) /
                   values.size());
  s.min.push_back(*lo);
  s.max.push_back(*hi);
}

}  // namespace

ConvergenceSummary convergence_measures(const std::vector<RunRecord>& records) {
  if (records.empty())
    throw Error("convergence_measures: no records");
  const std::size_t n_rows = records.front().rows.size();
  for (const RunRecord& r : records)
    if (r.rows.size() != n_rows)
      throw DimensionError(
          "convergence_measures: records have differing horizons");

  ConvergenceSummary out;
  out.horizon = static_cast<int>(n_rows) - 1;
  std::vector<double> buf(records.size());
  for (std::size_t k = 0; k < n_rows; ++k) {
    auto gather = [&](auto field) -> const std::vector<double>& {
      for (std::size_t t = 0; t < records.size(); ++t)
        buf[t] = field(records[t].rows[k]);
      return buf;
    };
    envelope_push(out.objective,
                  gather([](const IterationRow& r) { return r.objective; }));
    envelope_push(out.grad_sq, gather([](const IterationRow& r) {
                    return r.grad_norm * r.grad_norm;
                  }));
    envelope_push(out.opt_gap_rel,
                  gather([](const IterationRow& r) { return r.opt_gap_rel; }));
    envelope_push(out.dist_to_ustar, gather([](const IterationRow& r) {
                    return r.dist_to_ustar;
                  }));
    envelope_push(out.w1_to_ss,
                  gather([](const IterationRow& r) { return r.w1_to_ss; }));
    envelope_push(out.v_k,
                  gather([](const IterationRow& r) { return r.v_k_estimate; }));
  }
  return out;
}

double AngleHistogram::mass_fraction(double lo_deg, double hi_deg) const {
  const double lo_bin = lo_deg / bin_width_deg;
  const double hi_bin = hi_deg / bin_width_deg;
  const int lo = static_cast<int>(std::lround(lo_bin));
  const int hi = static_cast<int>(std::lround(hi_bin));
  if (std::abs(lo_bin - lo) > 1e-9 || std::abs(hi_bin - hi) > 1e-9)
    throw Error("AngleHistogram: band does not align with bin edges");
  long sum = 0;
  for (int b = lo; b < hi && b < static_cast<int>(counts.size()); ++b)
    sum += counts[b];
  return static_cast<double>(sum) / total;
}

AngleHistogram angle_histogram(const Population& pop, const Eigen::VectorXd& q,
                               int n_bins) {
  if (n_bins < 1) throw Error("angle_histogram: n_bins must be >= 1");
  const double qn = q.norm();
  if (qn == 0.0)
    throw DegenerateStateError("angle_histogram: zero decision vector");
  AngleHistogram hist;
  hist.bin_width_deg = 180.0 / n_bins;
  hist.counts.assign(n_bins, 0);
  hist.total = pop.size();
  constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;
  for (const Individual& ind : pop.individuals) {
    const double pn = ind.p.norm();
    if (pn == 0.0)
      throw DegenerateStateError("angle_histogram: zero state vector");
    const double c = std::clamp(ind.p.dot(q) / (pn * qn), -1.0, 1.0);
    const double deg = std::acos(c) * kRadToDeg;
    int bin = static_cast<int>(deg / hist.bin_width_deg);
    bin = std::clamp(bin, 0, n_bins - 1);
    hist.counts[bin] += 1;
  }
  return hist;
}

}  // namespace ddopt
