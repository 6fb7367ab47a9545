#include "doctest.h"
#include "test_util.hpp"

#include "lfoica/errors.hpp"
#include "lfoica/oica.hpp"
#include "lfoica/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace lfoica;
using namespace lfoica::oica;
using diffcore::Tape;
using diffcore::Var;
using lfoica::testing::max_abs;
using lfoica::testing::randn;

namespace {

// Standard normal sources with nothing to learn.
class FixedGaussian final : public sources::SourceGenerator {
 public:
  explicit FixedGaussian(Eigen::Index d) : d_(d) {}
  Eigen::Index dim() const override { return d_; }
  Var sample(Tape& tape, Eigen::Index batch, Rng& rng) override {
    return tape.constant(standard_normal(d_, batch, rng));
  }
  std::vector<diffcore::Param*> params() override { return {}; }
  std::unique_ptr<sources::SourceGenerator> clone() const override { return std::make_unique<FixedGaussian>(d_); }

 private:
  Eigen::Index d_;
};

}  // namespace

TEST_CASE("mix examples") {
  Tape t;
  const Matrix s = randn(3, 5, 1);
  CHECK(mix(t.constant(Matrix::Identity(3, 3)), t.constant(s)).value() == s);
  CHECK(max_abs(mix(t.constant(Matrix::Zero(2, 3)), t.constant(s)).value()) == 0.0);
  const Matrix a{{1, 1, 0}, {0, 1, 1}};
  const Matrix col{{1}, {2}, {3}};
  CHECK(mix(t.constant(a), t.constant(col)).value() == Matrix{{3}, {5}});
  CHECK_THROWS_AS(mix(t.constant(a), t.constant(Matrix::Zero(2, 1))), InvalidArgument);
}

TEST_CASE("model shape validation") {
  CHECK_THROWS_AS(OicaModel(3, 2, std::make_unique<FixedGaussian>(2), 0), InvalidArgument);
  CHECK_THROWS_AS(OicaModel(2, 3, std::make_unique<FixedGaussian>(2), 0), InvalidArgument);
  OicaModel m(2, 3, std::make_unique<FixedGaussian>(3), 0);
  CHECK((m.mixing.value.array().abs() <= 0.5).all());
}

TEST_CASE("oracle init adds noise around the truth") {
  OicaModel m(2, 4, std::make_unique<FixedGaussian>(4), 0);
  const Matrix truth = randn(2, 4, 2);
  m.init_oracle(truth, 0.0, 3);
  CHECK(m.mixing.value == truth);
  m.init_oracle(truth, 0.5, 3);
  CHECK(max_abs(m.mixing.value - truth) > 0);
}

TEST_CASE("one-dimensional scale matching recovers |A| = 2") {
  Rng rng(4);
  const Matrix data = 2.0 * standard_normal(1, 4000, rng);
  OicaModel m(1, 1, std::make_unique<FixedGaussian>(1), 5);
  TrainConfig cfg;
  cfg.batch = 256;
  cfg.iters = 2000;
  cfg.adam.lr = 0.01;
  cfg.seed = 6;
  const auto r = train_lfoica(m, data, cfg);
  CHECK(std::abs(std::abs(r.mixing(0, 0)) - 2.0) <= 0.1);
}

TEST_CASE("a dominating prox collapses A to zero in one step") {
  const auto data = synth::gen_oica(2, 3, 300, {synth::laplace_sources(3), 7});
  OicaModel m(2, 3, std::make_unique<FixedGaussian>(3), 8);
  TrainConfig cfg;
  cfg.batch = 64;
  cfg.iters = 1;
  cfg.lambda = 1e6;
  const auto r = train_lfoica(m, data.mixtures, cfg);
  CHECK(max_abs(r.mixing) == 0.0);
}

TEST_CASE("training with lambda zero matches a run without prox") {
  const auto data = synth::gen_oica(2, 3, 300, {synth::laplace_sources(3), 9});
  TrainConfig cfg;
  cfg.batch = 32;
  cfg.iters = 15;
  cfg.seed = 10;
  OicaModel a(2, 3, std::make_unique<sources::MlpSourceGen>(3, sources::MlpConfig{}, 11), 12);
  OicaModel b = a;
  const auto ra = train_lfoica(a, data.mixtures, cfg);
  cfg.lambda = 1e-3;
  const auto rb = train_lfoica(b, data.mixtures, cfg);
  CHECK(ra.loss_trace.size() == 15);
  CHECK(std::all_of(ra.loss_trace.begin(), ra.loss_trace.end(), [](double v) { return v >= 0; }));
  CHECK(ra.loss_trace.front() == rb.loss_trace.front());
}

TEST_CASE("training is reproducible under a fixed seed") {
  const auto data = synth::gen_oica(2, 4, 500, {synth::laplace_sources(4), 13});
  TrainConfig cfg;
  cfg.batch = 64;
  cfg.iters = 20;
  cfg.seed = 14;
  cfg.source_lr = 0.01;
  cfg.final_lr_fraction = 0.1;
  auto run = [&] {
    OicaModel m(2, 4, std::make_unique<sources::MlpSourceGen>(4, sources::MlpConfig{}, 15), 16);
    return train_lfoica(m, data.mixtures, cfg);
  };
  const auto a = run(), b = run();
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.mixing == b.mixing);
}

TEST_CASE("fewer samples than the batch is rejected") {
  OicaModel m(1, 1, std::make_unique<FixedGaussian>(1), 0);
  TrainConfig cfg;
  cfg.batch = 100;
  CHECK_THROWS_AS(train_lfoica(m, Matrix::Zero(1, 50), cfg), InvalidArgument);
}

TEST_CASE("non-finite loss aborts with the iteration index") {
  TrainingProblem problem;
  diffcore::Param p("p", Matrix::Constant(1, 1, 1.0));
  problem.params.push_back(&p);
  problem.loss = [&](Tape& t, long iter) {
    Var x = t.param(p);
    return iter == 3 ? diffcore::sum(diffcore::scale(x, std::nan(""))) : diffcore::squared_norm(x);
  };
  TrainConfig cfg;
  cfg.iters = 10;
  try {
    run_training(problem, cfg);
    FAIL("expected divergence");
  } catch (const NumericalDivergence& e) {
    CHECK(e.iteration() == 3);
  }
}

TEST_CASE("train config validation and step-size schedule") {
  TrainConfig cfg;
  cfg.batch = 1;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.final_lr_fraction = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.source_lr = -1;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);

  cfg = {};
  cfg.iters = 101;
  cfg.adam.lr = 0.1;
  cfg.source_lr = 0.2;
  cfg.final_lr_fraction = 0.1;
  CHECK(cfg.lr_at(0) == doctest::Approx(0.1));
  CHECK(cfg.lr_at(100) == doctest::Approx(0.01));
  CHECK(cfg.lr_at(50) == doctest::Approx(0.055));
  CHECK(cfg.source_lr_at(100) == doctest::Approx(0.02));
  cfg.final_lr_fraction = 1.0;
  CHECK(cfg.lr_at(77) == 0.1);
}

TEST_CASE("epoch sampler covers the population without replacement") {
  EpochSampler s(10, 5, 17);
  std::set<Eigen::Index> seen;
  for (int i = 0; i < 2; ++i)
    for (Eigen::Index j : s.next()) seen.insert(j);
  CHECK(seen.size() == 10);
}

TEST_CASE("training kernel uses the median heuristic ladder") {
  const Matrix real{{0.0, 2.0}};
  TrainConfig cfg;
  const auto k = training_kernel(real, cfg, 0);
  REQUIRE(k.bandwidths.size() == 5);
  CHECK(k.bandwidths[2] == 4.0);
  cfg.kernel = mmd::KernelSpec::single(3.0);
  CHECK(training_kernel(real, cfg, 0).bandwidths == std::vector<double>{3.0});
}
