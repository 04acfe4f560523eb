#pragma once

#include <vector>

#include <Eigen/Core>

namespace rumpl {

struct Assignment {
  /// Column assigned to each row, or -1.
  std::vector<int> row_to_col;
  double cost = 0.0;
};

/// Minimum-cost assignment of a rectangular cost matrix; exactly
/// min(rows, cols) pairs are made. O(n²·m).
Assignment solve_assignment(const Eigen::MatrixXd& cost);

/// Exhaustive search over all injective assignments; for small checks only.
Assignment brute_force_assignment(const Eigen::MatrixXd& cost);

}  // namespace rumpl
