#include "otclust/baselines.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "otclust/assignment.hpp"
#include "otclust/rng.hpp"

namespace otclust {

MixtureParams kmeanspp_init(const Dataset& data, Index k, std::uint64_t seed, double sigma2) {
  const Index n = data.size();
  require(k >= 1, "k must be at least 1");
  require(k <= n, "k exceeds the number of points");
  Rng rng = make_rng(seed);

  std::vector<Index> chosen;
  std::vector<char> taken(n, 0);
  chosen.push_back(std::uniform_int_distribution<Index>(0, n - 1)(rng));
  taken[chosen.back()] = 1;
  Vector d2 = (data.points.rowwise() - data.points.row(chosen.back())).rowwise().squaredNorm();
  while (Index(chosen.size()) < k) {
    Index next = -1;
    const double total = d2.sum();
    if (total > 0.0) {
      const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        if (d2(i) <= 0.0) continue;
        acc += d2(i);
        next = i;
        if (acc > r) break;
      }
    } else {
      // All remaining mass is zero: duplicates; take untaken points uniformly.
      std::vector<Index> free;
      for (Index i = 0; i < n; ++i)
        if (!taken[i]) free.push_back(i);
      next = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    }
    chosen.push_back(next);
    taken[next] = 1;
    d2 = d2.cwiseMin((data.points.rowwise() - data.points.row(next)).rowwise().squaredNorm());
    for (Index c : chosen) d2(c) = 0.0;
  }

  Matrix centers(k, data.dims());
  for (Index c = 0; c < k; ++c) centers.row(c) = data.points.row(chosen[c]);
  return MixtureParams::isotropic(std::move(centers), sigma2);
}

KMeansResult lloyd_kmeans(const Dataset& data, const MixtureParams& init, int max_iter) {
  data.validate();
  require(init.dims() == data.dims(), "init dimension does not match data");
  require(max_iter >= 1, "max_iter must be >= 1");
  const Index n = data.size();
  const Index k = init.components();
  Matrix centers = init.locations;
  std::vector<int> labels(n, -1);
  Vector dist(n);

  KMeansResult out;
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      dist(i) = (centers.rowwise() - data.points.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (labels[i] != int(best)) {
        labels[i] = int(best);
        changed = true;
      }
    }
    out.inertia_trace.push_back(dist.sum());
    out.iterations = it + 1;
    if (!changed && it > 0) {
      out.converged = true;
      break;
    }

    Matrix sums = Matrix::Zero(k, data.dims());
    Vector counts = Vector::Zero(k);
    for (Index i = 0; i < n; ++i) {
      sums.row(labels[i]) += data.points.row(i);
      counts(labels[i]) += 1.0;
    }
    for (Index c = 0; c < k; ++c) {
      if (counts(c) > 0.0) {
        centers.row(c) = sums.row(c) / counts(c);
      } else {
        Index far = 0;
        dist.maxCoeff(&far);
        centers.row(c) = data.points.row(far);
        dist(far) = 0.0;
      }
    }
  }

  out.inertia = 0.0;
  for (Index i = 0; i < n; ++i) out.inertia += (data.points.row(i) - centers.row(labels[i])).squaredNorm();
  out.params = init;
  out.params.locations = std::move(centers);
  out.labels = std::move(labels);
  return out;
}

ClusterScore center_match(const MixtureParams& fitted, const MixtureParams& truth) {
  require(fitted.components() == truth.components() && fitted.dims() == truth.dims(),
          "center error needs equal K and d");
  const Index k = truth.components();
  Matrix cost(k, k);
  for (Index t = 0; t < k; ++t)
    for (Index f = 0; f < k; ++f) cost(t, f) = (truth.locations.row(t) - fitted.locations.row(f)).squaredNorm();
  ClusterScore s;
  s.matched_permutation = hungarian(cost);
  s.center_error = assignment_cost(cost, s.matched_permutation) / double(k);
  return s;
}

double center_error(const MixtureParams& fitted, const MixtureParams& truth) {
  return center_match(fitted, truth).center_error;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  require(a.size() == b.size(), "label vectors must have equal length");
  auto pairs = [](double x) { return 0.5 * x * (x - 1.0); };
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ca, cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
  }
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [key, c] : joint) index += pairs(c);
  for (const auto& [key, c] : ca) sa += pairs(c);
  for (const auto& [key, c] : cb) sb += pairs(c);
  const double total = pairs(double(a.size()));
  if (total == 0.0) return 1.0;
  const double expected = sa * sb / total;
  const double denom = 0.5 * (sa + sb) - expected;
  if (denom == 0.0) return 1.0;
  return (index - expected) / denom;
}

double bic_score(const MixtureParams& params, const Dataset& data, bool weights_estimated) {
  const Index k = params.components();
  const double p = double(k * params.dims() + params.variances.free_parameters() + (weights_estimated ? k - 1 : 0));
  const double n = double(data.size());
  return 2.0 * n * neg_loglik(params, data) + p * std::log(n);
}

SelectionResult select_k(const Dataset& data, const std::vector<Index>& candidates, const FitProcedure& fit,
                         int seeds, std::uint64_t master_seed, bool weights_estimated) {
  require(!candidates.empty(), "candidate list is empty");
  require(seeds >= 1, "seeds must be >= 1");
  SelectionResult out;
  double best_bic = std::numeric_limits<double>::infinity();
  std::vector<Index> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  for (Index k : sorted) {
    SelectionRow row;
    row.k = k;
    std::optional<MixtureParams> best;
    double best_ell = std::numeric_limits<double>::infinity();
    for (int s = 0; s < seeds; ++s) {
      try {
        FitReport r = fit(data, k, derive_seed(master_seed, {std::uint64_t(k), std::uint64_t(s)}));
        const double ell = neg_loglik(r.final_params, data);
        if (ell < best_ell) {
          best_ell = ell;
          best = std::move(r.final_params);
        }
      } catch (const std::exception&) {
      }
    }
    if (!best) {
      row.failed = true;
      row.best_ell = row.bic = std::numeric_limits<double>::quiet_NaN();
    } else {
      row.best_ell = best_ell;
      row.bic = bic_score(*best, data, weights_estimated);
      if (row.bic < best_bic) {
        best_bic = row.bic;
        out.k_hat = k;
      }
    }
    out.table.push_back(row);
  }
  return out;
}

namespace {

// Smallest max-distance over surjections from the points `from` onto the
// targets `to`, by enumeration.
double covering_exact(const std::vector<double>& from, const std::vector<double>& to) {
  const std::size_t n = from.size(), m = to.size();
  std::vector<std::size_t> f(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<char> hit(m, 0);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      hit[f[i]] = 1;
      worst = std::max(worst, std::abs(from[i] - to[f[i]]));
    }
    if (std::all_of(hit.begin(), hit.end(), [](char h) { return h != 0; })) best = std::min(best, worst);
    std::size_t pos = 0;
    while (pos < n && ++f[pos] == m) f[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

// Feasible surjection built from nearest assignment, then patched.
double covering_greedy(const std::vector<double>& from, const std::vector<double>& to) {
  const std::size_t n = from.size(), m = to.size();
  std::vector<std::size_t> f(n);
  std::vector<int> count(m, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m; ++j)
      if (std::abs(from[i] - to[j]) < std::abs(from[i] - to[best])) best = j;
    f[i] = best;
    ++count[best];
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (count[j] > 0) continue;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (count[f[i]] < 2) continue;
      if (pick == n || std::abs(from[i] - to[j]) < std::abs(from[pick] - to[j])) pick = i;
    }
    --count[f[pick]];
    f[pick] = j;
    ++count[j];
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(from[i] - to[f[i]]));
  return worst;
}

}  // namespace

ManyFitOneDiagnostic many_fit_one_excluded(const MixtureParams& truth, const MixtureParams& candidate, Index k1,
                                           const std::vector<Index>& candidate_indices, double gamma) {
  require(truth.dims() == 1 && candidate.dims() == 1, "diagnostic works on one-dimensional projections");
  const Index kt = truth.components();
  const Index ni = Index(candidate_indices.size());
  require(k1 >= 1 && k1 <= kt - 1, "k1 must lie in [1, K-1]");
  require(ni > k1, "|I| must exceed k1");
  require(gamma > 0.0 && gamma < 1.0 - double(k1) / double(ni), "gamma out of range");
  for (Index i : candidate_indices) require(i >= 0 && i < candidate.components(), "candidate index out of range");

  ManyFitOneDiagnostic out;
  out.gamma = gamma;
  out.candidate_indices = candidate_indices;
  std::vector<Index> order(kt);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return truth.locations(a, 0) < truth.locations(b, 0); });
  out.group_indices.assign(order.begin(), order.begin() + k1);
  out.delta = truth.locations(order[k1], 0) - truth.locations(order[k1 - 1], 0);

  std::vector<double> from, to;
  for (Index i : candidate_indices) from.push_back(candidate.locations(i, 0));
  for (Index g : out.group_indices) to.push_back(truth.locations(g, 0));
  const double combos = std::pow(double(k1), double(ni));
  if (k1 <= 8 && combos <= 1e7) {
    out.covering_radius = covering_exact(from, to);
  } else {
    out.covering_radius = covering_greedy(from, to);
    out.covering_exact = false;
  }

  const double sigma = std::sqrt(truth.variances.values(0, 0));
  const double k = double(candidate.components());
  out.threshold = k * sigma / (std::sqrt(2.0 * M_PI) * ((1.0 - gamma) * double(ni) - double(k1)));
  out.excluded = out.delta >= out.threshold && out.covering_radius < gamma * out.delta;
  return out;
}

MixtureParams project_to_line(const MixtureParams& params, const Vector& origin, const Vector& direction,
                              bool negate) {
  require(origin.size() == params.dims() && direction.size() == params.dims(), "projection shape mismatch");
  const Vector u = direction.normalized();
  MixtureParams out;
  out.locations = (params.locations.rowwise() - origin.transpose()) * u;
  if (negate) out.locations = -out.locations;
  out.variances = params.variances;
  out.variances.values = params.variances.values.col(0);
  out.weights = params.weights;
  return out;
}

double balance_residual(const Dataset& data, const Matrix& psi, const Vector& weights) {
  require(psi.rows() == data.size() && psi.cols() == weights.size(), "balance shape mismatch");
  const Vector mass = psi.colwise().sum().transpose();
  const Matrix f = mass.cwiseInverse().asDiagonal() * (psi.transpose() * data.points);
  const RowVector combined = weights.transpose() * f;
  const RowVector mean = data.points.colwise().mean();
  return (combined - mean).cwiseAbs().maxCoeff();
}

double balance_residual(const MixtureParams& params, const Dataset& data, const SinkhornSolution& solution) {
  return balance_residual(data, solution.responsibilities.matrix, params.weights);
}

}  // namespace otclust
