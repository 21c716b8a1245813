#pragma once

#include <vector>

#include "darthkit/tensor.hpp"

namespace darthkit {

/// Minimum-cost assignment on a rectangular cost matrix. Returns, for each
/// row, the assigned column or -1 (only when rows > cols).
std::vector<int> hungarian_min(const Matrix& cost);

/// Maximum-score assignment; pairs with score <= `min_score` are discarded
/// after solving.
std::vector<int> hungarian_max(const Matrix& score, double min_score = 0.0);

}  // namespace darthkit
