#include "lfoica/evalign.hpp"

#include "lfoica/errors.hpp"

#include <cmath>
#include <limits>

namespace lfoica::evalign {

Matrix normalize_first_column(const Matrix& a) {
  if (a.cols() == 0) throw DegenerateMatrix("normalize_first_column: matrix has no columns");
  const double norm = a.col(0).norm();
  if (!(norm > 0) || !std::isfinite(norm)) throw DegenerateMatrix("normalize_first_column: first column is zero");
  return a / norm;
}

std::vector<Eigen::Index> min_cost_assignment(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw InvalidArgument("assignment: cost matrix must be square");
  // Shortest augmenting path Hungarian method with potentials, 1-based.
  const Eigen::Index n = cost.rows();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<Eigen::Index> match(n + 1, 0), way(n + 1, 0);
  for (Eigen::Index i = 1; i <= n; ++i) {
    match[0] = i;
    Eigen::Index j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const Eigen::Index i0 = match[j0];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
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
      for (Eigen::Index j = 0; j <= n; ++j) {
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
      const Eigen::Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Eigen::Index> result(n);
  for (Eigen::Index j = 1; j <= n; ++j) result[match[j] - 1] = j - 1;
  return result;
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidArgument(std::string(op) + ": shape mismatch");
}

// scale_for(j_est, j_truth) gives the per-pair scale; cost is the residual.
template <class ScaleFn>
AlignResult align_with(const Matrix& est, const Matrix& truth, ScaleFn scale_for) {
  const Eigen::Index d = truth.cols();
  Matrix cost(d, d), scale(d, d);
  for (Eigen::Index t = 0; t < d; ++t)
    for (Eigen::Index e = 0; e < d; ++e) {
      scale(t, e) = scale_for(e, t);
      cost(t, e) = (scale(t, e) * est.col(e) - truth.col(t)).squaredNorm();
    }
  AlignResult out;
  out.alignment.permutation = min_cost_assignment(cost);
  out.alignment.scales.resize(d);
  out.aligned.resize(truth.rows(), d);
  for (Eigen::Index t = 0; t < d; ++t) {
    const Eigen::Index e = out.alignment.permutation[static_cast<std::size_t>(t)];
    out.alignment.scales(t) = scale(t, e);
    out.aligned.col(t) = scale(t, e) * est.col(e);
  }
  out.alignment.residual_mse = mse(out.aligned, truth);
  return out;
}

}  // namespace

AlignResult align(const Matrix& est, const Matrix& truth) {
  require_same_shape(est, truth, "align");
  return align_with(est, truth, [&](Eigen::Index e, Eigen::Index t) {
    const double ee = est.col(e).squaredNorm();
    return ee > 0 ? est.col(e).dot(truth.col(t)) / ee : 0.0;
  });
}

AlignResult align_by_variance(const Matrix& est, const Matrix& truth, const Vector& est_source_var,
                              const Vector& truth_source_var) {
  require_same_shape(est, truth, "align_by_variance");
  if (est_source_var.size() != est.cols() || truth_source_var.size() != truth.cols())
    throw InvalidArgument("align_by_variance: one variance per column required");
  return align_with(est, truth, [&](Eigen::Index e, Eigen::Index t) {
    if (!(truth_source_var(t) > 0) || !(est_source_var(e) >= 0)) return 0.0;
    const double magnitude = std::sqrt(est_source_var(e) / truth_source_var(t));
    return est.col(e).dot(truth.col(t)) < 0 ? -magnitude : magnitude;
  });
}

double mse(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "mse");
  if (a.size() == 0) throw InvalidArgument("mse: empty matrices");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

}  // namespace lfoica::evalign
