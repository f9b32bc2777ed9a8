#pragma once

#include <optional>
#include <vector>

#include "otclust/common.hpp"

namespace otclust {

enum class VarianceKind { SphericalShared, SphericalPerComponent, DiagonalPerComponent };

/// Per-component Gaussian variances. Values are always stored expanded as a
/// K x d matrix of diagonal entries; `kind` says which entries are tied.
struct VarianceSpec {
  VarianceKind kind = VarianceKind::SphericalShared;
  Matrix values;      // K x d
  bool fixed = true;  // whether M-steps leave it alone

  static VarianceSpec spherical_shared(Index k, Index d, double sigma2, bool fixed = true);
  static VarianceSpec spherical(const Vector& sigma2, Index d, bool fixed = true);
  static VarianceSpec diagonal(Matrix diag, bool fixed = true);

  Index components() const { return values.rows(); }
  Index dims() const { return values.cols(); }

  /// Number of free scalar parameters (0 when fixed).
  Index free_parameters() const;

  /// Re-tie entries according to `kind` and apply the variance floor.
  void project();

  void validate() const;
};

/// Full parameter state of a Gaussian mixture.
struct MixtureParams {
  Matrix locations;  // K x d, one row per component
  VarianceSpec variances;
  Vector weights;  // K, on the open simplex

  Index components() const { return locations.rows(); }
  Index dims() const { return locations.cols(); }

  void validate() const;

  /// Equal weights, spherical shared variance.
  static MixtureParams isotropic(Matrix locations, double sigma2, bool fixed_variance = true);
};

/// Permute components: row k of the result is row perm[k] of the input.
MixtureParams permute_components(const MixtureParams& params, const std::vector<Index>& perm);

/// L1 distance over locations, variances and weights.
double l1_change(const MixtureParams& a, const MixtureParams& b);

struct Dataset {
  Matrix points;  // N x d
  std::optional<std::vector<int>> true_labels;
  std::optional<MixtureParams> true_params;

  Index size() const { return points.rows(); }
  Index dims() const { return points.cols(); }

  void validate() const;
};

enum class ResponsibilityKind { Vanilla, Transport };

struct Responsibilities {
  Matrix matrix;  // N x K, row-stochastic
  ResponsibilityKind kind = ResponsibilityKind::Vanilla;

  /// Column means of the matrix.
  Vector column_means() const { return matrix.colwise().mean().transpose(); }
  /// Row-wise argmax, ties to the lowest index.
  std::vector<int> hard_labels() const;
};

double component_logpdf(const MixtureParams& params, const Eigen::Ref<const Vector>& point, Index k);

/// N x K matrix of log q_{theta_k}(Y_i).
Matrix log_density_matrix(const MixtureParams& params, const Matrix& points);

/// -(1/N) sum_i log sum_k w_k exp(log_density(i,k)).
double neg_loglik_from_log_density(const Matrix& log_density, const Vector& weights);

double neg_loglik(const MixtureParams& params, const Dataset& data);

Responsibilities vanilla_responsibilities(const MixtureParams& params, const Dataset& data);
Responsibilities vanilla_from_log_density(const Matrix& log_density, const Vector& weights);

/// Draw n points: labels from the weights, then Gaussians. Stores the labels
/// and the generating parameters on the returned dataset.
Dataset sample_mixture(const MixtureParams& params, Index n, std::uint64_t seed);

}  // namespace otclust
