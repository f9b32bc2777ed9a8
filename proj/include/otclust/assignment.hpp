#pragma once

#include <vector>

#include "otclust/common.hpp"

namespace otclust {

/// Minimum-cost assignment for an n x m cost matrix with n <= m.
/// Returns, for each row, the column it is matched to.
std::vector<Index> hungarian(const Matrix& cost);

/// Sum of cost(i, assignment[i]).
double assignment_cost(const Matrix& cost, const std::vector<Index>& assignment);

}  // namespace otclust
