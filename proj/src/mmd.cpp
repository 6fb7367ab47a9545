#include "lfoica/mmd.hpp"

#include "lfoica/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>

namespace lfoica::mmd {

using diffcore::Tape;
using diffcore::Var;

void KernelSpec::validate() const {
  if (bandwidths.empty()) throw InvalidArgument("kernel: bandwidth list is empty");
  for (double b : bandwidths)
    if (!(b > 0) || !std::isfinite(b)) throw InvalidArgument("kernel: bandwidths must be finite and > 0");
}

KernelSpec KernelSpec::single(double sigma2, Estimator e) {
  KernelSpec k{{sigma2}, e};
  k.validate();
  return k;
}

KernelSpec KernelSpec::scaled(double sigma2, std::span<const double> multipliers, Estimator e) {
  KernelSpec k;
  k.estimator = e;
  for (double m : multipliers) k.bandwidths.push_back(sigma2 * m);
  k.validate();
  return k;
}

double gaussian_kernel(const Vector& x, const Vector& y, double sigma2) {
  if (x.size() != y.size()) throw InvalidArgument("gaussian_kernel: dimension mismatch");
  if (!(sigma2 > 0)) throw InvalidArgument("gaussian_kernel: sigma2 must be > 0");
  return std::exp(-(x - y).squaredNorm() / (2 * sigma2));
}

Bandwidth median_bandwidth(const Matrix& samples) {
  const Eigen::Index n = samples.cols();
  if (n < 2) throw InvalidArgument("median_bandwidth: need at least 2 samples");
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((samples.col(i) - samples.col(j)).squaredNorm());
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double med = d[mid];
  if (d.size() % 2 == 0) {
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  if (!(med > 0)) {
    // The median can vanish with ties even when points differ.
    const double mx = *std::max_element(d.begin(), d.end());
    if (!(mx > 0)) return {1.0, true};
    return {mx, false};
  }
  return {med, false};
}

namespace {

Matrix squared_distances(const Matrix& a, const Matrix& b, bool same) {
  Eigen::RowVectorXd a2 = a.colwise().squaredNorm();
  Eigen::RowVectorXd b2 = b.colwise().squaredNorm();
  Matrix d = -2.0 * (a.transpose() * b);
  d.colwise() += a2.transpose();
  d.rowwise() += b2;
  d = d.cwiseMax(0.0);
  if (same) d.diagonal().setZero();
  return d;
}

// Sum-of-Gaussians kernel matrix and its 1/sigma^2-weighted companion, which
// carries the derivative: d k / d y_j = kw * (y_i - y_j).
struct Gram {
  Matrix k;
  Matrix kw;
};

// True when the sorted-descending bandwidths halve at every step, so each
// kernel is the square of the previous one.
bool halving_ladder(std::vector<double>& sorted) {
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] * 2 != sorted[i - 1]) return false;
  return true;
}

Gram gram(const Matrix& a, const Matrix& b, bool same, const KernelSpec& spec, bool want_weighted) {
  const Matrix d = squared_distances(a, b, same);
  Gram g{Matrix::Zero(d.rows(), d.cols()), {}};
  if (want_weighted) g.kw = Matrix::Zero(d.rows(), d.cols());
  std::vector<double> bw = spec.bandwidths;
  if (bw.size() > 1 && halving_ladder(bw)) {
    Eigen::ArrayXXd e = (d.array() * (-0.5 / bw[0])).exp();
    for (std::size_t i = 0; i < bw.size(); ++i) {
      if (i > 0) e = e.square();
      g.k.array() += e;
      if (want_weighted) g.kw.array() += e * (1.0 / bw[i]);
    }
    return g;
  }
  for (double s2 : spec.bandwidths) {
    Eigen::ArrayXXd e = (d.array() * (-0.5 / s2)).exp();
    g.k.array() += e;
    if (want_weighted) g.kw.array() += e * (1.0 / s2);
  }
  return g;
}

struct Coefficients {
  double xx, yy, xy;
};

Coefficients coefficients(Eigen::Index m, Eigen::Index n, Estimator e) {
  const double dm = static_cast<double>(m), dn = static_cast<double>(n);
  if (e == Estimator::Biased) return {1.0 / (dm * dm), 1.0 / (dn * dn), 2.0 / (dm * dn)};
  return {1.0 / (dm * (dm - 1)), 1.0 / (dn * (dn - 1)), 2.0 / (dm * dn)};
}

double block_sum(const Matrix& k, bool exclude_diagonal) {
  double s = k.sum();
  if (exclude_diagonal) s -= k.diagonal().sum();
  return s;
}

struct JointTerms {
  double value = 0;
  std::vector<Matrix> grads;  // per generated slot, empty when not requested
};

void validate_sets(std::span<const Matrix> real, std::span<const Matrix> gen,
                   std::span<const KernelSpec> kernels) {
  if (real.empty()) throw InvalidArgument("mmd: tuples must have at least one slot");
  if (real.size() != gen.size())
    throw InvalidArgument("mmd: arity mismatch (" + std::to_string(real.size()) + " vs " +
                          std::to_string(gen.size()) + " slots)");
  if (kernels.size() != real.size() && kernels.size() != 1)
    throw InvalidArgument("mmd: need one kernel per slot");
  const Eigen::Index m = real[0].cols(), n = gen[0].cols();
  if (m == 0 || n == 0) throw InvalidArgument("mmd: empty sample set");
  const Estimator est = kernels[0].estimator;
  for (std::size_t s = 0; s < real.size(); ++s) {
    if (real[s].cols() != m || gen[s].cols() != n)
      throw InvalidArgument("mmd: slot " + std::to_string(s) + " has inconsistent sample count");
    if (real[s].rows() != gen[s].rows())
      throw InvalidArgument("mmd: slot " + std::to_string(s) + " dimension mismatch");
    const KernelSpec& k = kernels.size() == 1 ? kernels[0] : kernels[s];
    k.validate();
    if (k.estimator != est) throw InvalidArgument("mmd: slots must share one estimator");
  }
  if (est == Estimator::Unbiased && (m < 2 || n < 2))
    throw InvalidArgument("mmd: unbiased estimator needs at least 2 samples per set");
}

JointTerms joint_terms(std::span<const Matrix> real, std::span<const Matrix> gen,
                       std::span<const KernelSpec> kernels, const std::vector<bool>& want_grad) {
  validate_sets(real, gen, kernels);
  const std::size_t slots = real.size();
  const Eigen::Index m = real[0].cols(), n = gen[0].cols();
  const Estimator est = kernels[0].estimator;
  const bool unbiased = est == Estimator::Unbiased;
  const bool any_grad = std::find(want_grad.begin(), want_grad.end(), true) != want_grad.end();

  std::vector<Gram> gxx, gyy, gxy;
  for (std::size_t s = 0; s < slots; ++s) {
    const KernelSpec& k = kernels.size() == 1 ? kernels[0] : kernels[s];
    gxx.push_back(gram(real[s], real[s], true, k, false));
    gyy.push_back(gram(gen[s], gen[s], true, k, want_grad[s]));
    gxy.push_back(gram(real[s], gen[s], false, k, want_grad[s]));
  }

  auto product_except = [&](const std::vector<Gram>& g, std::size_t skip) {
    Matrix p = Matrix::Ones(g[0].k.rows(), g[0].k.cols());
    for (std::size_t s = 0; s < slots; ++s)
      if (s != skip) p = p.cwiseProduct(g[s].k);
    return p;
  };

  const Coefficients c = coefficients(m, n, est);
  const Matrix kxx = product_except(gxx, slots);
  const Matrix kyy = product_except(gyy, slots);
  const Matrix kxy = product_except(gxy, slots);

  JointTerms out;
  out.value = c.xx * block_sum(kxx, unbiased) + c.yy * block_sum(kyy, unbiased) - c.xy * kxy.sum();
  if (!any_grad) return out;

  out.grads.resize(slots);
  for (std::size_t s = 0; s < slots; ++s) {
    if (!want_grad[s]) continue;
    Matrix gy = product_except(gyy, s).cwiseProduct(gyy[s].kw);
    if (unbiased) gy.diagonal().setZero();
    Matrix gx = product_except(gxy, s).cwiseProduct(gxy[s].kw);
    const Matrix& y = gen[s];
    const Matrix& x = real[s];
    Eigen::RowVectorXd gy_col = gy.colwise().sum();
    Eigen::RowVectorXd gx_col = gx.colwise().sum();
    Matrix grad = 2.0 * c.yy * (y * gy - y * gy_col.asDiagonal());
    grad -= c.xy * (x * gx - y * gx_col.asDiagonal());
    out.grads[s] = std::move(grad);
  }
  return out;
}

}  // namespace

double mmd2(const Matrix& x, const Matrix& y, const KernelSpec& kernel) {
  const Matrix rs[1] = {x};
  const Matrix gs[1] = {y};
  const KernelSpec ks[1] = {kernel};
  return joint_mmd2(rs, gs, ks);
}

Var mmd2(const Matrix& x, Var y, const KernelSpec& kernel) {
  const Matrix rs[1] = {x};
  const Var gs[1] = {y};
  const KernelSpec ks[1] = {kernel};
  return joint_mmd2(rs, gs, ks);
}

double joint_mmd2(std::span<const Matrix> real, std::span<const Matrix> generated,
                  std::span<const KernelSpec> kernels) {
  return joint_terms(real, generated, kernels, std::vector<bool>(real.size(), false)).value;
}

Var joint_mmd2(std::span<const Matrix> real, std::span<const Var> generated,
               std::span<const KernelSpec> kernels) {
  if (generated.empty()) throw InvalidArgument("mmd: tuples must have at least one slot");
  Tape& tape = generated[0].tape();
  std::vector<Matrix> gen;
  std::vector<bool> want;
  for (const Var& v : generated) {
    gen.push_back(v.value());
    want.push_back(tape.requires_grad(v));
  }
  JointTerms terms = joint_terms(real, gen, kernels, want);
  Matrix value(1, 1);
  value(0, 0) = terms.value;
  std::vector<Var> parents(generated.begin(), generated.end());
  auto grads = std::make_shared<std::vector<Matrix>>(std::move(terms.grads));
  return tape.record(std::move(value), parents, [parents, grads](Tape& t, const Matrix& g) {
    for (std::size_t s = 0; s < parents.size(); ++s)
      if (s < grads->size() && (*grads)[s].size() > 0) t.accumulate(parents[s], g(0, 0) * (*grads)[s]);
  });
}

}  // namespace lfoica::mmd
