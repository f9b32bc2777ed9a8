#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "otclust/em.hpp"
#include "otclust/mixture.hpp"

namespace otclust {

/// D^2-weighted seeding. Weights are uniform; variances are spherical shared
/// with value `sigma2`.
MixtureParams kmeanspp_init(const Dataset& data, Index k, std::uint64_t seed, double sigma2 = 1.0);

struct KMeansResult {
  MixtureParams params;
  double inertia = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> inertia_trace;  // after each assignment step
  std::vector<int> labels;
};

/// Lloyd iterations from init's locations; an empty cluster is re-seeded at
/// the point farthest from its current centre.
KMeansResult lloyd_kmeans(const Dataset& data, const MixtureParams& init, int max_iter = 300);

struct ClusterScore {
  double center_error = 0.0;
  double ari = 0.0;
  std::vector<Index> matched_permutation;  // truth k is matched to fitted perm[k]
};

/// min over permutations of (1/K) sum_k |theta_perm(k) - theta*_k|^2.
double center_error(const MixtureParams& fitted, const MixtureParams& truth);
ClusterScore center_match(const MixtureParams& fitted, const MixtureParams& truth);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

/// 2 N l + p log N.
double bic_score(const MixtureParams& params, const Dataset& data, bool weights_estimated = false);

using FitProcedure = std::function<FitReport(const Dataset&, Index k, std::uint64_t seed)>;

struct SelectionRow {
  Index k = 0;
  double best_ell = 0.0;
  double bic = 0.0;
  bool failed = false;
};

struct SelectionResult {
  Index k_hat = 0;
  std::vector<SelectionRow> table;
};

/// Best-of-seeds per candidate by in-sample l, then arg-min BIC (ties to the
/// smallest K). Seed s of candidate k is derive_seed(master, {k, s}).
SelectionResult select_k(const Dataset& data, const std::vector<Index>& candidates, const FitProcedure& fit,
                         int seeds, std::uint64_t master_seed, bool weights_estimated = false);

struct ManyFitOneDiagnostic {
  std::vector<Index> group_indices;      // G1: truth components, ordered
  std::vector<Index> candidate_indices;  // I
  double delta = 0.0;                    // gap after the k1-th ordered truth centre
  double covering_radius = 0.0;
  bool covering_exact = true;
  double gamma = 0.0;
  double threshold = 0.0;
  bool excluded = false;
};

/// One-dimensional truth and candidate (d = 1). I indexes candidate
/// components.
ManyFitOneDiagnostic many_fit_one_excluded(const MixtureParams& truth, const MixtureParams& candidate, Index k1,
                                           const std::vector<Index>& candidate_indices, double gamma);

/// Project every location onto the unit direction u after subtracting
/// `origin`, optionally negated.
MixtureParams project_to_line(const MixtureParams& params, const Vector& origin, const Vector& direction,
                              bool negate = false);

/// |sum_k w_k F_k - mean(Y)|_inf with F_k the weighted mean under psi.
double balance_residual(const Dataset& data, const Matrix& psi, const Vector& weights);
double balance_residual(const MixtureParams& params, const Dataset& data, const SinkhornSolution& solution);

}  // namespace otclust
