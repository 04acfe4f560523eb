#include "rumpl/hungarian.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "rumpl/errors.hpp"

namespace rumpl {

namespace {

// Shortest augmenting path with potentials; requires n <= m. Returns the
// column of each row.
std::vector<int> hungarian_rows_le_cols(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows()), m = static_cast<int>(a.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

double total(const Eigen::MatrixXd& cost, const std::vector<int>& row_to_col) {
  double s = 0.0;
  for (size_t r = 0; r < row_to_col.size(); ++r) {
    if (row_to_col[r] >= 0) s += cost(static_cast<Eigen::Index>(r), row_to_col[r]);
  }
  return s;
}

}  // namespace

Assignment solve_assignment(const Eigen::MatrixXd& cost) {
  if (!cost.allFinite()) throw InvalidInput("solve_assignment: costs must be finite");
  Assignment out;
  out.row_to_col.assign(static_cast<size_t>(cost.rows()), -1);
  if (cost.rows() == 0 || cost.cols() == 0) return out;
  if (cost.rows() <= cost.cols()) {
    out.row_to_col = hungarian_rows_le_cols(cost);
  } else {
    const std::vector<int> col_to_row = hungarian_rows_le_cols(cost.transpose());
    for (size_t c = 0; c < col_to_row.size(); ++c) out.row_to_col[col_to_row[c]] = static_cast<int>(c);
  }
  out.cost = total(cost, out.row_to_col);
  return out;
}

Assignment brute_force_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows()), m = static_cast<int>(cost.cols());
  Assignment best;
  best.row_to_col.assign(n, -1);
  if (n == 0 || m == 0) return best;
  if (std::max(n, m) > 9) throw InvalidInput("brute_force_assignment: matrix too large");
  best.cost = std::numeric_limits<double>::infinity();
  // Permute the larger side; the first min(n, m) entries form the matching.
  std::vector<int> perm(std::max(n, m));
  std::iota(perm.begin(), perm.end(), 0);
  do {
    std::vector<int> r2c(n, -1);
    if (n <= m) {
      for (int r = 0; r < n; ++r) r2c[r] = perm[r];
    } else {
      for (int c = 0; c < m; ++c) r2c[perm[c]] = c;
    }
    const double c = total(cost, r2c);
    if (c < best.cost) {
      best.cost = c;
      best.row_to_col = std::move(r2c);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace rumpl
