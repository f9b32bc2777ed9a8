#include "otclust/assignment.hpp"

namespace otclust {

// Shortest augmenting path with row/column potentials, O(n^2 m).
std::vector<Index> hungarian(const Matrix& cost) {
  const Index n = cost.rows();
  const Index m = cost.cols();
  require(n <= m, "assignment needs rows <= cols");
  require(all_finite(cost), "assignment cost must be finite");
  if (n == 0) return {};

  const double inf = std::numeric_limits<double>::infinity();
  // 1-based; column 0 is a virtual source.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<Index> match(m + 1, 0), way(m + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const Index i0 = match[j0];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<Index> out(n, -1);
  for (Index j = 1; j <= m; ++j)
    if (match[j] != 0) out[match[j] - 1] = j - 1;
  return out;
}

double assignment_cost(const Matrix& cost, const std::vector<Index>& assignment) {
  double s = 0.0;
  for (Index i = 0; i < Index(assignment.size()); ++i) s += cost(i, assignment[i]);
  return s;
}

}  // namespace otclust
