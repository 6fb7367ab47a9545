#include "doctest.h"
#include "test_util.hpp"

#include "lfoica/errors.hpp"
#include "lfoica/mmd.hpp"

#include <cmath>

using namespace lfoica;
using namespace lfoica::mmd;
using lfoica::testing::randn;

TEST_CASE("gaussian kernel values") {
  const Vector x = randn(3, 1, 1);
  CHECK(gaussian_kernel(x, x, 0.7) == 1.0);
  CHECK(gaussian_kernel(Vector{{0.0}}, Vector{{1.0}}, 0.5) == doctest::Approx(std::exp(-1.0)));
  CHECK(gaussian_kernel(Vector{{0.0, 0.0}}, Vector{{3.0, 4.0}}, 12.5) == doctest::Approx(0.367879).epsilon(1e-6));
  const Vector y = randn(3, 1, 2);
  CHECK(gaussian_kernel(x, y, 1.3) == gaussian_kernel(y, x, 1.3));
}

TEST_CASE("gaussian kernel rejects a dimension mismatch") {
  CHECK_THROWS_AS(gaussian_kernel(Vector::Zero(2), Vector::Zero(3), 1.0), InvalidArgument);
}

TEST_CASE("kernel spec validation") {
  KernelSpec k;
  CHECK_THROWS_AS(k.validate(), InvalidArgument);
  CHECK_THROWS_AS(KernelSpec::single(0.0), InvalidArgument);
  CHECK_THROWS_AS(KernelSpec::single(std::nan("")), InvalidArgument);
  const auto s = KernelSpec::scaled(2.0, default_multipliers());
  REQUIRE(s.bandwidths.size() == 5);
  CHECK(s.bandwidths.front() == 0.5);
  CHECK(s.bandwidths.back() == 8.0);
}

TEST_CASE("median bandwidth") {
  CHECK(median_bandwidth(Matrix{{0.0, 2.0}}).sigma2 == 4.0);
  CHECK(median_bandwidth(Matrix{{0.0, 1.0, 2.0}}).sigma2 == 1.0);
  const auto degenerate = median_bandwidth(Matrix::Constant(2, 4, 3.0));
  CHECK(degenerate.sigma2 == 1.0);
  CHECK(degenerate.degenerate);
  CHECK_FALSE(median_bandwidth(Matrix{{0.0, 1.0}}).degenerate);
  CHECK_THROWS_AS(median_bandwidth(Matrix::Zero(1, 1)), InvalidArgument);
}

TEST_CASE("mmd2 examples") {
  const Matrix x = randn(2, 8, 3);
  CHECK(std::abs(mmd2(x, x, KernelSpec::single(1.0))) < 1e-14);
  CHECK(mmd2(Matrix{{0.0}}, Matrix{{2.0}}, KernelSpec::single(2.0)) ==
        doctest::Approx(2 - 2 * std::exp(-1.0)).epsilon(1e-12));
  CHECK(mmd2(Matrix{{0.0}}, Matrix{{2.0}}, KernelSpec::single(2.0)) == doctest::Approx(1.264241).epsilon(1e-6));
}

TEST_CASE("mmd2 is invariant to sample order") {
  const Matrix x = randn(2, 7, 4), y = randn(2, 5, 5);
  const Matrix xr = x.rowwise().reverse(), yr = y.rowwise().reverse();
  const auto k = KernelSpec::scaled(1.0, default_multipliers());
  CHECK(std::abs(mmd2(x, y, k) - mmd2(xr, yr, k)) < 1e-14);
}

TEST_CASE("mmd2 is symmetric and additive over bandwidths") {
  const Matrix x = randn(3, 9, 6), y = 1.3 * randn(3, 6, 7);
  const std::vector<double> bws{0.3, 1.1, 5.0};
  KernelSpec multi{bws};
  double total = 0;
  for (double b : bws) total += mmd2(x, y, KernelSpec::single(b));
  CHECK(mmd2(x, y, multi) == doctest::Approx(total).epsilon(1e-12));
  CHECK(mmd2(x, y, multi) == doctest::Approx(mmd2(y, x, multi)).epsilon(1e-12));
}

TEST_CASE("halving bandwidth ladder agrees with direct evaluation") {
  const Matrix x = randn(2, 10, 8), y = randn(2, 12, 9);
  const auto ladder = KernelSpec::scaled(1.7, default_multipliers());
  double total = 0;
  for (double b : ladder.bandwidths) total += mmd2(x, y, KernelSpec::single(b));
  CHECK(mmd2(x, y, ladder) == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("unbiased estimator") {
  const Matrix x = randn(1, 30, 10);
  const auto k = KernelSpec::single(1.0, Estimator::Unbiased);
  // Can go negative for samples of one distribution.
  const double v = mmd2(x.leftCols(15), x.rightCols(15), k);
  CHECK(std::isfinite(v));
  CHECK_THROWS_AS(mmd2(Matrix::Zero(1, 1), Matrix::Zero(1, 3), k), InvalidArgument);
}

TEST_CASE("empty sample set is rejected") {
  CHECK_THROWS_AS(mmd2(Matrix::Zero(1, 0), Matrix::Zero(1, 2), KernelSpec::single(1.0)), InvalidArgument);
  CHECK_THROWS_AS(mmd2(Matrix::Zero(2, 3), Matrix::Zero(1, 3), KernelSpec::single(1.0)), InvalidArgument);
}

TEST_CASE("joint mmd2 examples") {
  const auto k = KernelSpec::single(2.0);
  const KernelSpec ks[1] = {k};
  {
    const Matrix real[2] = {Matrix{{0.0}}, Matrix{{0.0}}};
    const Matrix gen[2] = {Matrix{{2.0}}, Matrix{{2.0}}};
    CHECK(joint_mmd2(real, gen, ks) == doctest::Approx(2 - 2 * std::exp(-2.0)).epsilon(1e-12));
    CHECK(joint_mmd2(real, gen, ks) == doctest::Approx(1.729329).epsilon(1e-6));
  }
  {
    const Matrix a = randn(2, 6, 11), b = randn(1, 6, 12);
    const Matrix real[2] = {a, b};
    CHECK(std::abs(joint_mmd2(real, real, ks)) < 1e-14);
  }
  {
    // Constant identical targets: reduces to the condition slot alone.
    const Matrix a = randn(2, 6, 13), c = randn(2, 4, 14);
    const Matrix real[2] = {a, Matrix::Constant(1, 6, 0.3)};
    const Matrix gen[2] = {c, Matrix::Constant(1, 4, 0.3)};
    CHECK(joint_mmd2(real, gen, ks) == doctest::Approx(mmd2(a, c, k)).epsilon(1e-12));
    const Matrix r1[1] = {a};
    const Matrix g1[1] = {c};
    CHECK(joint_mmd2(r1, g1, ks) == mmd2(a, c, k));
  }
}

TEST_CASE("joint mmd2 arity mismatch") {
  const Matrix real[2] = {Matrix::Zero(1, 2), Matrix::Zero(1, 2)};
  const Matrix gen[1] = {Matrix::Zero(1, 2)};
  const KernelSpec ks[1] = {KernelSpec::single(1.0)};
  CHECK_THROWS_AS(joint_mmd2(real, gen, ks), InvalidArgument);
}

TEST_CASE("mmd gradient of a tiny generator matches finite differences") {
  diffcore::Param a("a", randn(1, 2, 15));
  const Matrix s = randn(2, 6, 16), x = randn(1, 9, 17);
  diffcore::Param* ps[] = {&a};
  const auto k = KernelSpec::scaled(1.0, default_multipliers());
  const auto r = diffcore::grad_check(
      [&](diffcore::Tape& t) { return mmd2(x, diffcore::matmul(t.param(a), t.constant(s)), k); }, ps, 1e-5);
  CHECK(r.max_rel_error <= 1e-4);
}
