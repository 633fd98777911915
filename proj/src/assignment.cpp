#include "mfl/assignment.hpp"

#include <limits>
#include <stdexcept>

namespace mfl {

double solve_assignment(const std::vector<double>& cost, int n, std::vector<int>* perm) {
  if (n <= 0) throw std::invalid_argument("assignment: need n >= 1");
  if (cost.size() != static_cast<size_t>(n) * n) throw std::invalid_argument("assignment: cost must be n*n");
  const double inf = std::numeric_limits<double>::infinity();

  // potentials u (rows), v (columns); p[j] = row matched to column j (1-based, 0 = free)
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1, 0);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[static_cast<size_t>(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
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
    } while (j0);
  }

  double total = 0.0;
  if (perm) perm->assign(n, -1);
  for (int j = 1; j <= n; ++j) {
    total += cost[static_cast<size_t>(p[j] - 1) * n + (j - 1)];
    if (perm) (*perm)[p[j] - 1] = j - 1;
  }
  return total;
}

}  // namespace mfl
