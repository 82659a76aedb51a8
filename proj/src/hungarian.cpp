#include "rangefuse/hungarian.h"

#include <limits>
#include <string>

#include "rangefuse/errors.h"

namespace rangefuse {

// Shortest augmenting paths with row/column potentials; arrays are 1-based
// with column 0 as the virtual source.
MatchResult hungarian(const Eigen::MatrixXd& cost) {
  const int n = int(cost.rows());
  const int m = int(cost.cols());
  if (n > m) {
    throw InfeasibleAssignmentError("cannot assign " + std::to_string(n) + " segments to " + std::to_string(m) +
                                    " queries");
  }
  if (!cost.allFinite()) throw ValidationError("assignment costs must be finite");

  MatchResult result;
  if (n == 0) return result;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(std::size_t(n) + 1, 0.0);
  std::vector<double> v(std::size_t(m) + 1, 0.0);
  std::vector<int> row_of_col(std::size_t(m) + 1, 0);
  std::vector<int> way(std::size_t(m) + 1, 0);

  for (int i = 1; i <= n; ++i) {
    row_of_col[0] = i;
    int j0 = 0;
    std::vector<double> minv(std::size_t(m) + 1, kInf);
    std::vector<char> used(std::size_t(m) + 1, 0);
    do {
      used[std::size_t(j0)] = 1;
      const int i0 = row_of_col[std::size_t(j0)];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[std::size_t(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[std::size_t(i0)] - v[std::size_t(j)];
        if (cur < minv[std::size_t(j)]) {
          minv[std::size_t(j)] = cur;
          way[std::size_t(j)] = j0;
        }
        if (minv[std::size_t(j)] < delta) {
          delta = minv[std::size_t(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[std::size_t(j)]) {
          u[std::size_t(row_of_col[std::size_t(j)])] += delta;
          v[std::size_t(j)] -= delta;
        } else {
          minv[std::size_t(j)] -= delta;
        }
      }
      j0 = j1;
    } while (row_of_col[std::size_t(j0)] != 0);
    do {
      const int j1 = way[std::size_t(j0)];
      row_of_col[std::size_t(j0)] = row_of_col[std::size_t(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  result.query_of_gt.assign(std::size_t(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (row_of_col[std::size_t(j)] != 0) result.query_of_gt[std::size_t(row_of_col[std::size_t(j)] - 1)] = j - 1;
  }
  result.pair_cost.resize(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    result.pair_cost[std::size_t(i)] = cost(i, result.query_of_gt[std::size_t(i)]);
    result.total_cost += result.pair_cost[std::size_t(i)];
  }
  return result;
}

}  // namespace rangefuse
