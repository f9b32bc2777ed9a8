#include "otclust/mixture.hpp"

#include <algorithm>

#include "otclust/rng.hpp"

namespace otclust {

VarianceSpec VarianceSpec::spherical_shared(Index k, Index d, double sigma2, bool fixed) {
  return VarianceSpec{VarianceKind::SphericalShared, Matrix::Constant(k, d, sigma2), fixed};
}

VarianceSpec VarianceSpec::spherical(const Vector& sigma2, Index d, bool fixed) {
  Matrix values = sigma2.replicate(1, d);
  return VarianceSpec{VarianceKind::SphericalPerComponent, std::move(values), fixed};
}

VarianceSpec VarianceSpec::diagonal(Matrix diag, bool fixed) {
  return VarianceSpec{VarianceKind::DiagonalPerComponent, std::move(diag), fixed};
}

Index VarianceSpec::free_parameters() const {
  if (fixed) return 0;
  switch (kind) {
    case VarianceKind::SphericalShared: return 1;
    case VarianceKind::SphericalPerComponent: return components();
    case VarianceKind::DiagonalPerComponent: return components() * dims();
  }
  return 0;
}

void VarianceSpec::project() {
  switch (kind) {
    case VarianceKind::SphericalShared: values.setConstant(values.mean()); break;
    case VarianceKind::SphericalPerComponent:
      for (Index k = 0; k < values.rows(); ++k) values.row(k).setConstant(values.row(k).mean());
      break;
    case VarianceKind::DiagonalPerComponent: break;
  }
  values = values.cwiseMax(kVarianceFloor);
}

void VarianceSpec::validate() const {
  require(values.size() > 0, "variance spec is empty");
  require(all_finite(values), "variance entries must be finite");
  require((values.array() >= kVarianceFloor).all(), "variance below floor");
}

void MixtureParams::validate() const {
  const Index k = components();
  const Index d = dims();
  require(k >= 1 && d >= 1, "mixture needs K >= 1 and d >= 1");
  require(weights.size() == k, "weights length must equal K");
  require(variances.components() == k && variances.dims() == d, "variance shape mismatch");
  require(all_finite(locations), "locations must be finite");
  require((weights.array() > 0.0).all(), "weights must be strictly positive");
  require(std::abs(weights.sum() - 1.0) <= 1e-12 * std::max<double>(1.0, double(k)),
          "weights must sum to 1");
  variances.validate();
}

MixtureParams MixtureParams::isotropic(Matrix locations, double sigma2, bool fixed_variance) {
  const Index k = locations.rows();
  const Index d = locations.cols();
  return MixtureParams{std::move(locations), VarianceSpec::spherical_shared(k, d, sigma2, fixed_variance),
                       Vector::Constant(k, 1.0 / double(k))};
}

MixtureParams permute_components(const MixtureParams& params, const std::vector<Index>& perm) {
  require(Index(perm.size()) == params.components(), "permutation length mismatch");
  MixtureParams out = params;
  for (Index k = 0; k < params.components(); ++k) {
    out.locations.row(k) = params.locations.row(perm[k]);
    out.variances.values.row(k) = params.variances.values.row(perm[k]);
    out.weights(k) = params.weights(perm[k]);
  }
  return out;
}

double l1_change(const MixtureParams& a, const MixtureParams& b) {
  double s = (a.locations - b.locations).cwiseAbs().sum() + (a.weights - b.weights).cwiseAbs().sum();
  switch (a.variances.kind) {
    case VarianceKind::SphericalShared:
      s += std::abs(a.variances.values(0, 0) - b.variances.values(0, 0));
      break;
    case VarianceKind::SphericalPerComponent:
      s += (a.variances.values.col(0) - b.variances.values.col(0)).cwiseAbs().sum();
      break;
    case VarianceKind::DiagonalPerComponent:
      s += (a.variances.values - b.variances.values).cwiseAbs().sum();
      break;
  }
  return s;
}

void Dataset::validate() const {
  require(points.rows() >= 1 && points.cols() >= 1, "dataset must be non-empty");
  require(all_finite(points), "dataset contains non-finite entries");
  if (true_labels) require(Index(true_labels->size()) == points.rows(), "label count mismatch");
}

std::vector<int> Responsibilities::hard_labels() const {
  std::vector<int> out(matrix.rows());
  for (Index i = 0; i < matrix.rows(); ++i) {
    Index best = 0;
    matrix.row(i).maxCoeff(&best);
    out[i] = int(best);
  }
  return out;
}

double component_logpdf(const MixtureParams& params, const Eigen::Ref<const Vector>& point, Index k) {
  if (k < 0 || k >= params.components()) throw InvalidArgument("component index out of range");
  require(point.size() == params.dims(), "point dimension mismatch");
  require(all_finite(point), "point must be finite");
  const auto var = params.variances.values.row(k).transpose().array();
  const auto diff = point.array() - params.locations.row(k).transpose().array();
  return -0.5 * ((kLog2Pi + var.log()) + diff.square() / var).sum();
}

Matrix log_density_matrix(const MixtureParams& params, const Matrix& points) {
  require(points.cols() == params.dims(), "data dimension does not match parameters");
  const Index n = points.rows();
  const Index k = params.components();
  Matrix out(n, k);
  for (Index c = 0; c < k; ++c) {
    const RowVector inv_var = params.variances.values.row(c).cwiseInverse();
    const double log_norm =
        -0.5 * (double(params.dims()) * kLog2Pi + params.variances.values.row(c).array().log().sum());
    const RowVector mu = params.locations.row(c);
    for (Index i = 0; i < n; ++i) {
      out(i, c) = log_norm - 0.5 * ((points.row(i) - mu).array().square() * inv_var.array()).sum();
    }
  }
  return out;
}

double neg_loglik_from_log_density(const Matrix& log_density, const Vector& weights) {
  const RowVector log_w = weights.array().log().matrix().transpose();
  double total = 0.0;
  for (Index i = 0; i < log_density.rows(); ++i) total += log_sum_exp(log_density.row(i) + log_w);
  return -total / double(log_density.rows());
}

double neg_loglik(const MixtureParams& params, const Dataset& data) {
  return neg_loglik_from_log_density(log_density_matrix(params, data.points), params.weights);
}

Responsibilities vanilla_from_log_density(const Matrix& log_density, const Vector& weights) {
  Matrix logits = log_density.rowwise() + weights.array().log().matrix().transpose();
  return Responsibilities{row_softmax(logits), ResponsibilityKind::Vanilla};
}

Responsibilities vanilla_responsibilities(const MixtureParams& params, const Dataset& data) {
  return vanilla_from_log_density(log_density_matrix(params, data.points), params.weights);
}

Dataset sample_mixture(const MixtureParams& params, Index n, std::uint64_t seed) {
  require(n >= 1, "sample size must be at least 1");
  params.validate();
  Rng rng = make_rng(seed);
  std::discrete_distribution<int> pick(params.weights.data(), params.weights.data() + params.weights.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset out;
  out.points.resize(n, params.dims());
  std::vector<int> labels(n);
  for (Index i = 0; i < n; ++i) {
    const int k = pick(rng);
    labels[i] = k;
    for (Index j = 0; j < params.dims(); ++j) {
      out.points(i, j) = params.locations(k, j) + std::sqrt(params.variances.values(k, j)) * normal(rng);
    }
  }
  out.true_labels = std::move(labels);
  out.true_params = params;
  return out;
}

}  // namespace otclust
