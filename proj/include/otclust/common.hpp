#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace otclust {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Matrix = Eigen::MatrixXd;
using IndexVector = Eigen::Matrix<Index, Eigen::Dynamic, 1>;

/// Lower bound applied to every variance estimate.
inline constexpr double kVarianceFloor = 1e-6;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A mixture component received (numerically) zero total responsibility.
struct EmptyComponent : std::runtime_error {
  explicit EmptyComponent(Index k)
      : std::runtime_error("empty component " + std::to_string(k)), component(k) {}
  Index component;
};

/// The entropic E-step hit its iteration cap before reaching tolerance.
struct NonConvergence : std::runtime_error {
  NonConvergence(int iterations, double marginal_error)
      : std::runtime_error("sinkhorn did not converge after " + std::to_string(iterations) +
                           " iterations (marginal error " + std::to_string(marginal_error) + ")"),
        iterations(iterations),
        marginal_error(marginal_error) {}
  int iterations;
  double marginal_error;
};

inline void require(bool condition, const char* message) {
  if (!condition) throw InvalidArgument(message);
}

// log(sum(exp(x))) without overflow.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.derived().array() - m).exp().sum());
}

// Row-wise log-sum-exp of a dense matrix.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> row_log_sum_exp(
    const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) out(i) = log_sum_exp(x.row(i));
  return out;
}

// Row-wise softmax of a matrix of log-weights.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> row_softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.derived().array().isFinite().all();
}

}  // namespace otclust
