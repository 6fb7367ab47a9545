#include "doctest.h"
#include "test_util.hpp"

#include "lfoica/errors.hpp"
#include "lfoica/sources.hpp"

#include <cmath>
#include <numbers>

using namespace lfoica;
using namespace lfoica::sources;
using diffcore::Tape;
using lfoica::testing::max_abs;
using lfoica::testing::randn;

namespace {

// 1 -> 2 -> 1 network computing f(z) = z through the leaky rectifier.
void make_identity(MlpSourceGen& gen, Eigen::Index source, double slope) {
  auto& layers = gen.layers(source);
  layers[0].value = Matrix{{1.0}, {-1.0}};
  layers[1].value.setZero();
  layers[2].value = Matrix{{1.0 / (1 + slope), -1.0 / (1 + slope)}};
  layers[3].value.setZero();
}

}  // namespace

TEST_CASE("derive_seed is deterministic and separates streams") {
  CHECK(derive_seed(5, 1) == derive_seed(5, 1));
  CHECK(derive_seed(5, 1) != derive_seed(5, 2));
  CHECK(derive_seed(5, 1) != derive_seed(6, 1));
}

TEST_CASE("identity network passes the noise through") {
  MlpConfig cfg;
  cfg.hidden = {2};
  MlpSourceGen gen(2, cfg, 1);
  make_identity(gen, 0, cfg.slope);
  make_identity(gen, 1, cfg.slope);
  const Matrix noise = randn(2, 20, 2);
  Tape t;
  CHECK(max_abs(gen.forward(t, noise).value() - noise) < 1e-14);
}

TEST_CASE("perturbing one source network leaves the other rows unchanged") {
  MlpSourceGen gen(3, {}, 3);
  const Matrix noise = randn(3, 10, 4);
  Matrix before;
  {
    Tape t;
    before = gen.forward(t, noise).value();
  }
  for (auto& p : gen.layers(0)) p.value.array() += 0.3;
  Tape t;
  const Matrix after = gen.forward(t, noise).value();
  CHECK(max_abs(after.row(0) - before.row(0)) > 1e-3);
  CHECK(after.bottomRows(2) == before.bottomRows(2));
}

TEST_CASE("MLP source gradient of a row mean matches finite differences") {
  MlpSourceGen gen(2, {}, 5);
  const Matrix noise = randn(2, 12, 6);
  std::vector<diffcore::Param*> ps;
  for (auto& p : gen.layers(0)) ps.push_back(&p);
  const auto r = diffcore::grad_check(
      [&](Tape& t) { return diffcore::mean(diffcore::row(gen.forward(t, noise), 0)); }, ps, 1e-5);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("standardized MLP rows have zero mean and unit variance") {
  MlpConfig cfg;
  cfg.standardize = true;
  MlpSourceGen gen(2, cfg, 7);
  Tape t;
  Rng rng(8);
  const Matrix s = gen.sample(t, 100, rng).value();
  for (Eigen::Index i = 0; i < 2; ++i) {
    CHECK(std::abs(s.row(i).mean()) < 1e-10);
    CHECK(s.row(i).squaredNorm() / 100 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("gumbel inverse transform fixed points") {
  CHECK(std::abs(gumbel_from_uniform(std::exp(-1.0))) < 1e-15);
  CHECK(gumbel_from_uniform(std::exp(-std::numbers::e)) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::isfinite(gumbel_from_uniform(0.0)));
  CHECK(std::isfinite(gumbel_from_uniform(1.0)));
}

TEST_CASE("gumbel draws have the Euler-Mascheroni mean") {
  Rng rng(9);
  const Matrix g = sample_gumbel(1, 100000, rng);
  CHECK(std::abs(g.mean() - std::numbers::egamma) < 0.01);
}

TEST_CASE("gumbel softmax examples") {
  CHECK(max_abs(gumbel_softmax(Vector::Constant(3, 1.0 / 3), Vector::Zero(3), 0.7) - Vector::Constant(3, 1.0 / 3)) <
        1e-15);
  const Vector z = gumbel_softmax(Vector{{0.5, 0.5}}, Vector{{1.0, 0.0}}, 1.0);
  const double e = std::numbers::e;
  CHECK(z(0) == doctest::Approx(e / (e + 1)).epsilon(1e-12));
  CHECK(z(1) == doctest::Approx(1 / (e + 1)).epsilon(1e-12));
  CHECK(z(0) == doctest::Approx(0.731059).epsilon(1e-6));

  const Vector w{{0.2, 0.5, 0.3}};
  const Vector g{{0.4, -0.1, 0.9}};
  const Vector sharp = gumbel_softmax(w, g, 1e-3);
  Eigen::Index arg;
  (w.array().log() + g.array()).maxCoeff(&arg);
  CHECK(sharp(arg) > 0.999);
  CHECK_THROWS_AS(gumbel_softmax(w, g, 0.0), InvalidArgument);
}

TEST_CASE("gumbel softmax stays on the simplex and ignores logit shifts") {
  Rng rng(10);
  const Matrix g = sample_gumbel(4, 50, rng);
  const Matrix logw = randn(4, 1, 11);
  Tape t;
  const Matrix a = gumbel_softmax(t.constant(logw), g, 0.5).value();
  const Matrix b = gumbel_softmax(t.constant(Matrix(logw.array() + 3.0)), g, 0.5).value();
  CHECK(max_abs(a.colwise().sum().array() - 1.0) < 1e-12);
  CHECK((a.array() > 0).all());
  CHECK((a.array() < 1).all());
  CHECK(max_abs(a - b) < 1e-12);
}

TEST_CASE("single standard MoG component returns the epsilon draws") {
  MogConfig cfg;
  cfg.components = 1;
  MogSourceGen gen(2, cfg, 12);
  gen.set_means(Matrix::Zero(2, 1));
  gen.set_scales(Matrix::Ones(2, 1));
  Rng rng(13);
  const auto draws = gen.draw(30, rng);
  Tape t;
  CHECK(max_abs(gen.sample_with(t, draws).value() - draws.eps) < 1e-15);
}

TEST_CASE("sharp two-component MoG reproduces the target mixture") {
  MogConfig cfg;
  cfg.tau = 0.01;
  MogSourceGen gen(1, cfg, 14);
  gen.set_means(Matrix{{-5.0, 5.0}});
  gen.set_scales(Matrix{{0.01, 0.01}});
  gen.set_weights(Matrix{{0.5, 0.5}});
  Rng rng(15);
  Tape t;
  const Matrix s = gen.sample(t, 10000, rng).value();
  CHECK(std::abs(s.mean()) < 0.2);
  // A few draws land between the modes when the relaxed one-hot is not sharp.
  const double near = ((s.array().abs() - 5.0).abs() < 0.1).cast<double>().mean();
  CHECK(near > 0.95);
}

TEST_CASE("MoG gradient of a row mean with respect to the means") {
  MogSourceGen gen(2, {}, 16);
  Rng rng(17);
  const auto draws = gen.draw(20, rng);
  const auto r = diffcore::grad_check(
      [&](Tape& t) { return diffcore::mean(diffcore::row(gen.sample_with(t, draws), 1)); }, gen.params(), 1e-5);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("MoG parameters are validated") {
  MogSourceGen gen(1, {}, 18);
  CHECK_THROWS_AS(gen.set_weights(Matrix{{0.7, 0.7}}), InvalidArgument);
  CHECK_THROWS_AS(gen.set_scales(Matrix{{1.0, -1.0}}), InvalidArgument);
  const Matrix w = gen.weights();
  CHECK(std::abs(w.sum() - 1.0) < 1e-12);
  MogConfig bad;
  bad.tau = 0;
  CHECK_THROWS_AS(MogSourceGen(1, bad, 1), InvalidArgument);
}

TEST_CASE("MoG with frozen weights exposes no logit parameter gradient") {
  MogConfig cfg;
  cfg.learn_weights = false;
  MogSourceGen gen(1, cfg, 19);
  const Matrix before = gen.weights();
  Rng rng(20);
  Tape t;
  for (auto* p : gen.params()) p->zero_grad();
  t.backward(diffcore::mean(gen.sample(t, 10, rng)));
  for (auto* p : gen.params())
    if (p->name == "mog.logits") CHECK(max_abs(p->grad) == 0.0);
  CHECK(gen.weights() == before);
}

TEST_CASE("family selection by sample count") {
  CHECK(choose_family(1000) == SourceFamily::Mog);
  CHECK(choose_family(1999) == SourceFamily::Mog);
  CHECK(choose_family(2000) == SourceFamily::Mlp);
  GeneratorOptions forced;
  forced.family = SourceFamily::Mlp;
  CHECK(dynamic_cast<MlpSourceGen*>(make_generator(3, 100, forced, 1).get()) != nullptr);
  CHECK(dynamic_cast<MogSourceGen*>(make_generator(3, 100, {}, 1).get()) != nullptr);
}

TEST_CASE("clones are independent copies") {
  MlpSourceGen gen(2, {}, 21);
  auto copy = gen.clone();
  gen.layers(0)[0].value.setZero();
  CHECK(max_abs(copy->params()[0]->value) > 0);
}
