#include "ddopt/distributions.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "ddopt/csv.hpp"
#include "ddopt/errors.hpp"

namespace ddopt {

namespace {

Eigen::VectorXd gaussian_vector(int dim, Rng& rng) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.gaussian();
  return v;
}

}  // namespace

Eigen::VectorXd hemisphere_reference(int dim, std::uint64_t seed) {
  if (dim < 2) throw DimensionError("hemisphere_reference: dim must be >= 2");
  Rng rng = Rng::from_seed(seed).split(0x68656D69);  // stream tag: hemisphere
  Eigen::VectorXd ref = gaussian_vector(dim, rng);
  while (ref.norm() == 0.0) ref = gaussian_vector(dim, rng);
  ref.normalize();
  return ref;
}

Population sample_hemisphere(int dim, int count, std::uint64_t seed) {
  return sample_hemisphere(dim, count, seed,
                           hemisphere_reference(dim, seed));
}

Population sample_hemisphere(int dim, int count, std::uint64_t seed,
                             const Eigen::VectorXd& ref) {
  if (dim < 2) throw DimensionError("sample_hemisphere: dim must be >= 2");
  if (count < 1) throw DimensionError("sample_hemisphere: count must be >= 1");
  if (ref.size() != dim || std::abs(ref.norm() - 1.0) > 1e-9)
    throw DimensionError("sample_hemisphere: ref must be a unit vector of "
                         "matching dimension");

  // Sample draws start on a stream distinct from the reference derivation,
  // so a shared reference plus per-population seeds stays reproducible.
  Rng rng = Rng::from_seed(seed).split(0x73616D70);  // stream tag: samples

  Population pop;
  pop.dim_state = dim;
  pop.dim_exo = dim;
  pop.seed = seed;
  pop.hemisphere_ref = ref;
  pop.individuals.reserve(count);
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd v = gaussian_vector(dim, rng);
    double n = v.norm();
    double dot = v.dot(ref);
    // Reflect onto the ref side; redraw in the measure-zero cases where the
    // direction is undefined or exactly orthogonal.
    while (n == 0.0 || dot == 0.0) {
      v = gaussian_vector(dim, rng);
      n = v.norm();
      dot = v.dot(ref);
    }
    v /= n;
    if (dot < 0.0) v = -v;
    Individual ind;
    ind.p0 = v;
    ind.d = v;
    ind.p = v;
    pop.individuals.push_back(std::move(ind));
  }
  return pop;
}

Population sample_simplex(int dim, int count, std::uint64_t seed) {
  if (dim < 1) throw DimensionError("sample_simplex: dim must be >= 1");
  if (count < 1) throw DimensionError("sample_simplex: count must be >= 1");

  Rng rng = Rng::from_seed(seed).split(0x73696D70);  // stream tag: simplex

  Population pop;
  pop.dim_state = dim;
  pop.dim_exo = dim;
  pop.seed = seed;
  pop.individuals.reserve(count);
  for (int i = 0; i < count; ++i) {
    // Normalized exponentials are uniform on the simplex.
    Eigen::VectorXd w(dim);
    double total = 0.0;
    do {
      for (int j = 0; j < dim; ++j) w(j) = -std::log1p(-rng.uniform());
      total = w.sum();
    } while (total <= 0.0);
    w /= total;
    Individual ind;
    ind.p0 = w;
    ind.d = w;
    ind.p = w;
    pop.individuals.push_back(std::move(ind));
  }
  return pop;
}

Population sample_gaussian(int dim_state, int dim_exo, int count,
                           std::uint64_t seed) {
  if (dim_state < 1 || dim_exo < 1 || count < 1)
    throw DimensionError("sample_gaussian: dimensions and count must be >= 1");

  Rng rng = Rng::from_seed(seed).split(0x67617573);  // stream tag: gaussian

  Population pop;
  pop.dim_state = dim_state;
  pop.dim_exo = dim_exo;
  pop.seed = seed;
  pop.individuals.reserve(count);
  for (int i = 0; i < count; ++i) {
    Individual ind;
    ind.p0 = gaussian_vector(dim_state, rng);
    ind.d = gaussian_vector(dim_exo, rng);
    ind.p = ind.p0;
    pop.individuals.push_back(std::move(ind));
  }
  return pop;
}

std::vector<int> draw_minibatch(const Population& pop, int n_mb, Rng& rng) {
  const int n = pop.size();
  if (n_mb < 1) throw DimensionError("draw_minibatch: n_mb must be >= 1");
  if (n_mb > n)
    throw DimensionError("draw_minibatch: n_mb (" + std::to_string(n_mb) +
                         ") exceeds population size (" + std::to_string(n) +
                         ")");

  // Partial Fisher-Yates: the first n_mb entries are a uniform sample
  // without replacement.
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<int> out(n_mb);
  for (int i = 0; i < n_mb; ++i) {
    const std::uint64_t j =
        i + rng.uniform_below(static_cast<std::uint64_t>(n - i));
    std::swap(idx[i], idx[j]);
    out[i] = idx[i];
  }
  return out;
}

void write_population_csv(const Population& pop, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("write_population_csv: cannot open " + path);
  std::string line;
  for (int j = 0; j < pop.dim_state; ++j)
    line += "p0_" + std::to_string(j) + ",";
  for (int j = 0; j < pop.dim_exo; ++j) line += "d_" + std::to_string(j) + ",";
  line.pop_back();
  f << line << '\n';
  for (const Individual& ind : pop.individuals) {
    line.clear();
    for (int j = 0; j < pop.dim_state; ++j) {
      append_double(line, ind.p0(j));
      line += ',';
    }
    for (int j = 0; j < pop.dim_exo; ++j) {
      append_double(line, ind.d(j));
      line += ',';
    }
    line.pop_back();
    f << line << '\n';
  }
}

}  // namespace ddopt
