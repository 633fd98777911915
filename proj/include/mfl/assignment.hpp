#pragma once
// Exact minimum-cost perfect matching on a dense n x n cost matrix in O(n^3)
// (Hungarian algorithm with row/column potentials). Serves as the exact
// transport oracle for small point clouds.

#include <vector>

namespace mfl {

// cost is row-major n x n; returns the minimal total cost. If perm is given,
// perm[i] is the column assigned to row i.
double solve_assignment(const std::vector<double>& cost, int n, std::vector<int>* perm = nullptr);

}  // namespace mfl
