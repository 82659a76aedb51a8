#pragma once

#include <Eigen/Core>

#include <vector>

namespace rangefuse {

/// Injective assignment of cost-matrix rows (ground-truth segments) to
/// columns (queries).
struct MatchResult {
  std::vector<int> query_of_gt;
  std::vector<double> pair_cost;
  double total_cost = 0.0;

  std::size_t size() const { return query_of_gt.size(); }
};

/// Minimum-cost assignment of every row for rows <= cols, O(rows^2 * cols).
/// Throws InfeasibleAssignmentError when rows > cols and ValidationError on
/// non-finite costs.
MatchResult hungarian(const Eigen::MatrixXd& cost);

}  // namespace rangefuse
