#include "doctest.h"
#include "test_util.hpp"

#include "lfoica/causal.hpp"
#include "lfoica/errors.hpp"
#include "lfoica/synthdata.hpp"

#include <cmath>

using namespace lfoica;
using namespace lfoica::causal;
using diffcore::Tape;
using diffcore::Var;
using lfoica::testing::max_abs;
using lfoica::testing::randn;

TEST_CASE("measurement mixing examples") {
  CHECK(measurement_mixing(Matrix::Zero(3, 3)) ==
        (Matrix(3, 6) << Matrix::Identity(3, 3), Matrix::Identity(3, 3)).finished());
  const Matrix m = measurement_mixing(Matrix{{0, 0}, {0.6, 0}});
  CHECK(max_abs(m.leftCols(2) - Matrix{{1, 0}, {0.6, 1}}) < 1e-15);
  CHECK(m.rightCols(2) == Matrix::Identity(2, 2));

  Matrix b = 0.4 * randn(4, 4, 1);
  b.diagonal().setZero();
  const Matrix left = measurement_mixing(b).leftCols(4);
  CHECK(max_abs((Matrix::Identity(4, 4) - b) * left - Matrix::Identity(4, 4)) < 1e-10);
}

TEST_CASE("ill-conditioned I - B is rejected") {
  CHECK_THROWS_AS(measurement_mixing(Matrix{{0, 1}, {1, 0}}), SingularMatrix);
  Tape t;
  CHECK_THROWS_AS(measurement_mixing(t.constant(Matrix{{0, 1}, {1, 0}})), SingularMatrix);
}

TEST_CASE("matrix power") {
  const Matrix c = randn(3, 3, 2);
  CHECK(matrix_power(c, 0) == Matrix::Identity(3, 3));
  CHECK(matrix_power(Matrix{{0.5}}, 3)(0, 0) == 0.125);
  const Matrix c2 = matrix_power(c, 2);
  CHECK(max_abs(matrix_power(c, 4) - c2 * c2) < 1e-12);
  CHECK(max_abs(matrix_power(c, 5) - c * c * c * c * c) < 1e-12);
}

TEST_CASE("build_L examples") {
  CHECK(build_L(Matrix{{0.3}}, 1) == Matrix{{1.0}});
  CHECK(build_L(Matrix{{0.5}}, 3) == Matrix{{1.0, 0.5, 0.25}});
  const Matrix c = randn(2, 2, 3);
  CHECK(build_L(c, 4).leftCols(2) == Matrix::Identity(2, 2));
  Tape t;
  CHECK(max_abs(build_L(t.constant(c), 4).value() - build_L(c, 4)) < 1e-14);
}

TEST_CASE("build_M0_M1 examples") {
  const auto k1 = build_M0_M1(randn(2, 2, 4), 1);
  CHECK(k1.m0 == Matrix::Identity(2, 2));
  CHECK(k1.m1 == Matrix::Zero(2, 2));
  const double c = 0.7;
  const auto k2 = build_M0_M1(Matrix{{c}}, 2);
  CHECK(max_abs(k2.m0 - Matrix{{1.0, 1.0 + c}}) < 1e-15);
  CHECK(max_abs(k2.m1 - Matrix{{c, 0.0}}) < 1e-15);
}

TEST_CASE("conditional generate examples") {
  Tape t;
  const Matrix c = randn(2, 2, 5);
  const Matrix cond = randn(2, 6, 6);
  CHECK(max_abs(conditional_generate(t.constant(c), 1, cond, t.constant(Matrix::Zero(2, 6))).value() - c * cond) <
        1e-14);
  const Matrix noise = randn(6, 6, 7);
  CHECK(max_abs(conditional_generate(t.constant(Matrix::Zero(2, 2)), 3, cond, t.constant(noise)).value() -
                noise.topRows(2)) < 1e-15);
  const Var v = conditional_generate(t.constant(Matrix{{0.5}}), 2, Matrix{{2.0}}, t.constant(Matrix{{0.1}, {0.3}}));
  CHECK(v.value()(0, 0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK_THROWS_AS(conditional_generate(t.constant(c), 2, cond, t.constant(Matrix::Zero(3, 6))), InvalidArgument);
}

TEST_CASE("divided rollout examples") {
  Tape t;
  {
    const Var eps[3] = {t.constant(Matrix{{0.0}, {0.0}}), t.constant(Matrix{{0.2}, {0.4}}),
                        t.constant(Matrix{{0.0}, {0.0}})};
    const auto out = divided_generate_piece(t.constant(Matrix{{0.5}}), 2, Matrix{{1.0}}, eps);
    REQUIRE(out.size() == 2);
    CHECK(out[0].value()(0, 0) == doctest::Approx(1.05).epsilon(1e-14));
  }
  {
    const Matrix c = 0.5 * randn(2, 2, 8);
    const Matrix cond = randn(2, 3, 9);
    std::vector<Var> eps(4, t.constant(Matrix::Zero(6, 3)));
    const auto out = divided_generate_piece(t.constant(c), 3, cond, eps);
    const Matrix ck = matrix_power(c, 3);
    Matrix expected = cond;
    for (const Var& v : out) {
      expected = ck * expected;
      CHECK(max_abs(v.value() - expected) < 1e-13);
    }
  }
}

TEST_CASE("k = 1 divided rollout equals a direct VAR(1) rollout") {
  Tape t;
  const Matrix c = 0.5 * randn(3, 3, 10);
  const Matrix cond = randn(3, 4, 11);
  std::vector<Matrix> noise;
  std::vector<Var> eps;
  for (int j = 0; j < 5; ++j) {
    noise.push_back(randn(3, 4, 12 + static_cast<std::uint64_t>(j)));
    eps.push_back(t.constant(noise.back()));
  }
  const auto out = divided_generate_piece(t.constant(c), 1, cond, eps);
  Matrix x = cond;
  for (std::size_t j = 1; j < noise.size(); ++j) {
    x = c * x + noise[j];
    CHECK(max_abs(out[j - 1].value() - x) <= 1e-12);
  }
}

TEST_CASE("piece partition") {
  const auto p = partition_pieces(23, 5);
  CHECK(p.starts == std::vector<Eigen::Index>{0, 5, 10, 15});
  CHECK(p.dropped == 3);
  CHECK(partition_pieces(10, 10).starts.size() == 1);
  CHECK_THROWS_AS(partition_pieces(4, 5), InvalidArgument);
}

TEST_CASE("aggregated trainer needs at least two pieces") {
  const Matrix data = randn(2, 10, 13);
  AggregatedModel m(Matrix::Zero(2, 2), 2, 10, std::make_unique<sources::MlpSourceGen>(4, sources::MlpConfig{}, 1));
  oica::TrainConfig cfg;
  cfg.batch = 2;
  cfg.iters = 1;
  try {
    train_aggregated(m, data, cfg);
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("at least 2") != std::string::npos);
  }
}

TEST_CASE("least-squares transition recovers a noiseless VAR") {
  const Matrix c{{0.6, 0.2}, {-0.1, 0.5}};
  Matrix y(2, 20);
  y.col(0) = Vector{{0.0, 1.0}};
  for (Eigen::Index t = 1; t < 20; ++t) y.col(t) = c * y.col(t - 1);
  CHECK(max_abs(least_squares_transition(y) - c) < 1e-8);
}

TEST_CASE("least-squares principal root init") {
  const Matrix c{{0.7, 0.1}, {0.2, 0.6}};
  const Matrix c2 = c * c;
  Matrix y(2, 40);
  Rng rng(14);
  y.col(0) = standard_normal(2, 1, rng);
  for (Eigen::Index t = 1; t < 40; ++t) y.col(t) = c2 * y.col(t - 1) + 1e-3 * standard_normal(2, 1, rng);
  const Matrix root = initial_transition(y, 2, TransitionInit::LeastSquaresRoot, 0);
  CHECK(max_abs(root - c) < 0.05);
  const Matrix u = initial_transition(y, 2, TransitionInit::Uniform, 15);
  CHECK((u.array().abs() <= 0.5).all());
}

TEST_CASE("measurement-error training keeps a zero diagonal and stays near zero on null data") {
  synth::MeasurementErrorRecipe recipe;
  recipe.edge_probability = 0.0;
  const auto data = synth::gen_measurement_error(3, 2000, 16, recipe);
  CHECK(max_abs(data.adjacency) == 0.0);
  MeasurementErrorModel m(3, std::make_unique<sources::MlpSourceGen>(3, sources::MlpConfig{}, 17), 18);
  oica::TrainConfig cfg;
  cfg.batch = 256;
  cfg.iters = 400;
  cfg.adam.lr = 0.003;
  cfg.source_lr = 0.01;
  cfg.lambda = 1e-3;
  cfg.seed = 19;
  const auto r = train_measurement_error(m, data.observed, cfg);
  CHECK(r.adjacency.diagonal() == Vector::Zero(3));
  CHECK(r.adjacency.cwiseAbs().maxCoeff() <= 0.1);
  CHECK((r.noise_scales.array() > 0).all());
}

TEST_CASE("subsampled training is deterministic and validates the series length") {
  synth::VarRecipe recipe;
  recipe.length = 60;
  const auto data = synth::gen_var(recipe, 20);
  oica::TrainConfig cfg;
  cfg.batch = 16;
  cfg.iters = 10;
  cfg.seed = 21;
  auto run = [&] {
    SubsampledModel m(Matrix::Zero(2, 2), 2, std::make_unique<sources::MlpSourceGen>(4, sources::MlpConfig{}, 22));
    return train_subsampled(m, data.observed, cfg);
  };
  const auto a = run(), b = run();
  CHECK(a.transition == b.transition);
  CHECK(a.loss_trace == b.loss_trace);
  cfg.batch = 60;
  SubsampledModel m(Matrix::Zero(2, 2), 2, std::make_unique<sources::MlpSourceGen>(4, sources::MlpConfig{}, 22));
  CHECK_THROWS_AS(train_subsampled(m, data.observed, cfg), InvalidArgument);
}

TEST_CASE("aggregated training is deterministic and reports the partition") {
  synth::VarRecipe recipe;
  recipe.length = 103;
  recipe.scheme = synth::Scheme::Aggregate;
  const auto data = synth::gen_var(recipe, 23);
  oica::TrainConfig cfg;
  cfg.batch = 10;
  cfg.iters = 10;
  cfg.seed = 24;
  auto run = [&] {
    AggregatedModel m(Matrix::Zero(2, 2), 2, 5, std::make_unique<sources::MlpSourceGen>(4, sources::MlpConfig{}, 25));
    return train_aggregated(m, data.observed, cfg);
  };
  const auto a = run(), b = run();
  CHECK(a.transition == b.transition);
  CHECK(a.pieces == 20);
  CHECK(a.dropped == 3);
}
