#pragma once

// Gaussian-kernel maximum mean discrepancy. Sample sets are stored one sample
// per column (dim x count).

#include "lfoica/diffcore.hpp"

#include <span>
#include <vector>

namespace lfoica::mmd {

enum class Estimator { Biased, Unbiased };

struct KernelSpec {
  // sigma^2 values; the kernel is the sum of one Gaussian per entry.
  std::vector<double> bandwidths;
  Estimator estimator = Estimator::Biased;

  void validate() const;

  static KernelSpec single(double sigma2, Estimator e = Estimator::Biased);
  // sigma2 * m for every multiplier m.
  static KernelSpec scaled(double sigma2, std::span<const double> multipliers,
                           Estimator e = Estimator::Biased);
};

inline const std::vector<double>& default_multipliers() {
  static const std::vector<double> m{0.25, 0.5, 1.0, 2.0, 4.0};
  return m;
}

// exp(-|x - y|^2 / (2 sigma2))
double gaussian_kernel(const Vector& x, const Vector& y, double sigma2);

struct Bandwidth {
  double sigma2 = 1.0;
  bool degenerate = false;  // all samples coincided; sigma2 fell back to 1
};

// Median of the pairwise squared distances between columns.
Bandwidth median_bandwidth(const Matrix& samples);

double mmd2(const Matrix& x, const Matrix& y, const KernelSpec& kernel);
diffcore::Var mmd2(const Matrix& x, diffcore::Var y, const KernelSpec& kernel);

// Joint MMD over tuples via the product kernel k(a,a')k(b,b')... . Slot s of
// every tuple is column j of real[s] / generated[s]; one KernelSpec per slot.
// All slots must share one estimator.
double joint_mmd2(std::span<const Matrix> real, std::span<const Matrix> generated,
                  std::span<const KernelSpec> kernels);
// Gradients flow into every generated slot that requires one; real slots are
// treated as constants.
diffcore::Var joint_mmd2(std::span<const Matrix> real, std::span<const diffcore::Var> generated,
                         std::span<const KernelSpec> kernels);

}  // namespace lfoica::mmd
