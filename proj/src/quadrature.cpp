#include "otclust/quadrature.hpp"

#include <Eigen/Eigenvalues>

namespace otclust {

namespace {

// Legendre recurrence at x: returns (P_m, P'_m).
std::pair<double, double> legendre(int m, double x) {
  double p0 = 1.0, p1 = 0.0;
  for (int j = 0; j < m; ++j) {
    const double p2 = ((2.0 * j + 1.0) * x * p0 - double(j) * p1) / double(j + 1);
    p1 = p0;
    p0 = p2;
  }
  return {p0, double(m) * (x * p0 - p1) / (x * x - 1.0)};
}

}  // namespace

GaussLegendre::GaussLegendre(int points) {
  require(points >= 1, "quadrature order must be >= 1");
  const Index n = points;
  // Golub-Welsch for starting points, then Newton on the recurrence.
  Vector diag = Vector::Zero(n);
  Vector sub(std::max<Index>(n - 1, 0));
  for (Index j = 0; j + 1 < n; ++j) sub(j) = double(j + 1) / std::sqrt(4.0 * double(j + 1) * double(j + 1) - 1.0);
  Eigen::SelfAdjointEigenSolver<Matrix> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  nodes = solver.eigenvalues();
  weights.resize(n);
  for (Index i = 0; i < n; ++i) {
    double x = nodes(i);
    for (int it = 0; it < 8; ++it) {
      const auto [p, dp] = legendre(points, x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) <= 1e-17) break;
    }
    const double dp = legendre(points, x).second;
    nodes(i) = x;
    weights(i) = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  for (Index i = 0; i < n / 2; ++i) {
    const Index j = n - 1 - i;
    const double x = 0.5 * (nodes(j) - nodes(i));
    const double w = 0.5 * (weights(i) + weights(j));
    nodes(i) = -x;
    nodes(j) = x;
    weights(i) = weights(j) = w;
  }
  if (n % 2 == 1) nodes(n / 2) = 0.0;
}

}  // namespace otclust
