#pragma once

#include <optional>
#include <vector>

#include "otclust/sinkhorn.hpp"

namespace otclust {

/// Gaussian latent block model: entry (i, j) with row class k and column
/// class g is N(means(k, g), variances(k, g)).
struct BlockModel {
  Matrix means;      // K x G
  Matrix variances;  // K x G
  Vector row_weights;
  Vector col_weights;

  Index row_classes() const { return means.rows(); }
  Index col_classes() const { return means.cols(); }
  void validate() const;
};

struct BlockResponsibilities {
  Matrix z;  // N x K
  Matrix w;  // M x G
};

struct EmptyBlock : std::runtime_error {
  EmptyBlock(Index k, Index g)
      : std::runtime_error("empty block (" + std::to_string(k) + ", " + std::to_string(g) + ")"), row(k), col(g) {}
  Index row, col;
};

struct BlockData {
  Matrix values;  // N x M
  std::vector<int> row_labels;
  std::vector<int> col_labels;
};

/// Labels are drawn from the class weights; with `balanced` the class sizes
/// are fixed at round(n * weight) (largest remainders) and only the order is
/// random.
BlockData sample_block_data(const BlockModel& model, Index n, Index m, std::uint64_t seed, bool balanced = false);

/// Uniform random hard assignments with every class non-empty.
BlockResponsibilities random_block_init(Index n, Index m, Index k, Index g, std::uint64_t seed);
BlockResponsibilities one_hot(const std::vector<int>& row_labels, const std::vector<int>& col_labels, Index k,
                              Index g);

struct CoclusterConfig {
  int max_outer_iterations = 100;
  double tolerance = 1e-3;  // L1 over means, variances, weights
  int max_inner_iterations = 50;
  double inner_tolerance = 1e-4;
  SinkhornConfig sinkhorn;
  bool update_weights = true;
  bool update_variances = true;
  int weight_update_cadence = 6;
  // Known values; when set they are used as given and never updated.
  std::optional<Vector> row_weights;
  std::optional<Vector> col_weights;
  std::optional<Matrix> variances;
};

struct CoclusterReport {
  int iterations = 0;
  bool converged = false;
  int transport_solves = 0;
  int sinkhorn_nonconverged = 0;
  double max_marginal_error = 0.0;
  // Row-loop free energy after each M-step, one vector per row loop (VEM only).
  std::vector<std::vector<double>> row_surrogates;
};

struct CoclusterFit {
  BlockModel model;
  BlockResponsibilities resp;
  CoclusterReport report;
};

/// Initial parameters from responsibilities (weighted block means and
/// variances, class proportions).
BlockModel block_statistics(const Matrix& y, const BlockResponsibilities& resp);

CoclusterFit vem_fit(const Matrix& y, Index k, Index g, const BlockResponsibilities& init, const CoclusterConfig& cfg);
CoclusterFit svem_fit(const Matrix& y, Index k, Index g, const BlockResponsibilities& init,
                      const CoclusterConfig& cfg);

struct BlockAlignment {
  double score = 0.0;
  std::vector<Index> row_perm;  // truth k matched to fitted row_perm[k]
  std::vector<Index> col_perm;
  bool exact = true;
};

/// Mean squared error of block means under the best row x column relabelling.
BlockAlignment block_alignment(const BlockModel& fitted, const BlockModel& truth);
double block_score(const BlockModel& fitted, const BlockModel& truth);

}  // namespace otclust
