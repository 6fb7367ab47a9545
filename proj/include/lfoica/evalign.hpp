#pragma once

// Removing column permutation/scale/sign indeterminacy before comparing an
// estimated mixing matrix with the ground truth, and the MSE used throughout.

#include "lfoica/diffcore.hpp"

#include <vector>

namespace lfoica::evalign {

struct Alignment {
  // truth column j is matched with estimated column permutation[j]
  std::vector<Eigen::Index> permutation;
  // aligned column j = scales[j] * est.col(permutation[j])
  Vector scales;
  double residual_mse = 0.0;
};

struct AlignResult {
  Alignment alignment;
  Matrix aligned;
};

// Divides the whole matrix by the L2 norm of its first column.
Matrix normalize_first_column(const Matrix& a);

// Column matching by minimum-cost assignment over least-squares residuals.
AlignResult align(const Matrix& est, const Matrix& truth);

// Alternative scale rule: |scale_j| = sqrt(est_var[pi(j)] / truth_var[j])
// (ratio of recovered to true source variance), sign from the column inner product. The
// permutation is still the residual-minimizing assignment under those scales.
AlignResult align_by_variance(const Matrix& est, const Matrix& truth, const Vector& est_source_var,
                              const Vector& truth_source_var);

// Minimum-cost perfect matching on a square cost matrix; result[row] = col.
std::vector<Eigen::Index> min_cost_assignment(const Matrix& cost);

double mse(const Matrix& a, const Matrix& b);

}  // namespace lfoica::evalign
