#include "lfoica/causal.hpp"

#include "lfoica/errors.hpp"
#include "lfoica/mmd.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <string>

namespace lfoica::causal {

using diffcore::Param;
using diffcore::Tape;
using diffcore::Var;
using oica::TrainConfig;

double condition_number(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double smin = s(s.size() - 1);
  if (!(smin > 0)) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

namespace {

void check_conditioning(const Matrix& adjacency) {
  const Eigen::Index n = adjacency.rows();
  const double cond = condition_number(Matrix::Identity(n, n) - adjacency);
  if (!(cond <= kMaxConditionNumber))
    throw SingularMatrix("measurement mixing: condition number of (I - B) is " + std::to_string(cond));
}

}  // namespace

Matrix measurement_mixing(const Matrix& adjacency) {
  const Eigen::Index n = adjacency.rows();
  if (adjacency.cols() != n) throw InvalidArgument("measurement_mixing: B must be square");
  check_conditioning(adjacency);
  Matrix out(n, 2 * n);
  out.leftCols(n) = (Matrix::Identity(n, n) - adjacency).partialPivLu().inverse();
  out.rightCols(n).setIdentity();
  return out;
}

Var measurement_mixing(Var adjacency) {
  const Eigen::Index n = adjacency.rows();
  if (adjacency.cols() != n) throw InvalidArgument("measurement_mixing: B must be square");
  check_conditioning(adjacency.value());
  Tape& tape = adjacency.tape();
  Var left = diffcore::inverse(tape.constant(Matrix::Identity(n, n)) - adjacency);
  const Var parts[] = {left, tape.constant(Matrix::Identity(n, n))};
  return diffcore::hconcat(parts);
}

// ---- measurement error ------------------------------------------------------------

MeasurementErrorModel::MeasurementErrorModel(Eigen::Index n, std::unique_ptr<sources::SourceGenerator> gen,
                                             std::uint64_t seed)
    : tilde_sources(std::move(gen)) {
  if (n < 1) throw InvalidArgument("measurement model: need n >= 1");
  if (!tilde_sources || tilde_sources->dim() != n)
    throw InvalidArgument("measurement model: generator must provide n sources");
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  Matrix b(n, n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index r = 0; r < n; ++r) b(r, c) = r == c ? 0.0 : u(rng);
  adjacency = Param("adjacency", std::move(b));
  log_noise_scale = Param("measurement.log_scale", Matrix::Constant(n, 1, std::log(0.3)));
}

MeasurementErrorModel::MeasurementErrorModel(const MeasurementErrorModel& other)
    : adjacency(other.adjacency),
      tilde_sources(other.tilde_sources ? other.tilde_sources->clone() : nullptr),
      log_noise_scale(other.log_noise_scale) {}

Var MeasurementErrorModel::generate(Tape& tape, Eigen::Index batch, Rng& rng) {
  Var mixing = measurement_mixing(tape.param(adjacency));
  Var tilde = tilde_sources->sample(tape, batch, rng);
  Var meas = diffcore::scale_rows(tape.constant(standard_normal(n(), batch, rng)),
                                  diffcore::exp(tape.param(log_noise_scale)));
  const Var stacked[] = {tilde, meas};
  return diffcore::matmul(mixing, diffcore::vconcat(stacked));
}

void MeasurementErrorModel::project() { adjacency.value.diagonal().setZero(); }

MeasurementTrainResult train_measurement_error(MeasurementErrorModel& model, const Matrix& data,
                                               const TrainConfig& config) {
  config.validate();
  if (data.rows() != model.n()) throw InvalidArgument("train_measurement_error: data must have n rows");
  if (data.cols() < config.batch) throw InvalidArgument("train_measurement_error: fewer samples than batch");
  if (!data.allFinite()) throw InvalidArgument("train_measurement_error: data contains non-finite values");

  const mmd::KernelSpec kernel = oica::training_kernel(data, config, derive_seed(config.seed, 1));
  oica::EpochSampler sampler(data.cols(), config.batch, derive_seed(config.seed, 2));
  Rng noise_rng(derive_seed(config.seed, 3));
  model.project();

  oica::TrainingProblem problem;
  problem.params.push_back(&model.adjacency);
  for (Param* p : model.tilde_sources->params()) problem.source_params.push_back(p);
  problem.params.push_back(&model.log_noise_scale);
  problem.loss = [&](Tape& tape, long) {
    const Matrix real = oica::gather_columns(data, sampler.next());
    return mmd::mmd2(real, model.generate(tape, config.batch, noise_rng), kernel);
  };
  problem.after_step = [&](double lr) {
    const double threshold = diffcore::ProxConfig{config.lambda, lr}.threshold();
    if (threshold > 0) model.adjacency.value = diffcore::prox_l1(model.adjacency.value, threshold);
    model.project();
  };

  MeasurementTrainResult out;
  out.loss_trace = oica::run_training(problem, config);
  out.adjacency = model.adjacency.value;
  out.noise_scales = model.noise_scales();
  return out;
}

// ---- matrix helpers ------------------------------------------------------------------

Matrix matrix_power(const Matrix& c, Eigen::Index j) {
  if (c.rows() != c.cols()) throw InvalidArgument("matrix_power: matrix must be square");
  if (j < 0) throw InvalidArgument("matrix_power: exponent must be >= 0");
  Matrix result = Matrix::Identity(c.rows(), c.cols());
  Matrix base = c;
  while (j > 0) {
    if (j & 1) result = result * base;
    j >>= 1;
    if (j > 0) base = base * base;
  }
  return result;
}

Matrix build_L(const Matrix& c, Eigen::Index k) {
  if (k < 1) throw InvalidArgument("build_L: k must be >= 1");
  const Eigen::Index n = c.rows();
  Matrix out(n, n * k);
  Matrix power = Matrix::Identity(n, n);
  for (Eigen::Index j = 0; j < k; ++j) {
    out.middleCols(j * n, n) = power;
    power = power * c;
  }
  return out;
}

VarmaBlocks build_M0_M1(const Matrix& c, Eigen::Index k) {
  if (k < 1) throw InvalidArgument("build_M0_M1: k must be >= 1");
  const Eigen::Index n = c.rows();
  std::vector<Matrix> partial;  // partial[j] = sum_{i<=j} C^i
  Matrix power = Matrix::Identity(n, n);
  Matrix acc = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < k; ++j) {
    acc += power;
    partial.push_back(acc);
    power = power * c;
  }
  VarmaBlocks out{Matrix(n, n * k), Matrix(n, n * k)};
  for (Eigen::Index j = 0; j < k; ++j) {
    out.m0.middleCols(j * n, n) = partial[static_cast<std::size_t>(j)];
    out.m1.middleCols(j * n, n) = partial.back() - partial[static_cast<std::size_t>(j)];
  }
  return out;
}

std::vector<Var> matrix_powers(Var c, Eigen::Index count) {
  if (c.rows() != c.cols()) throw InvalidArgument("matrix_powers: matrix must be square");
  std::vector<Var> out;
  if (count < 1) return out;
  out.push_back(c.tape().constant(Matrix::Identity(c.rows(), c.cols())));
  for (Eigen::Index j = 1; j < count; ++j) out.push_back(j == 1 ? c : diffcore::matmul(c, out.back()));
  return out;
}

Var build_L(Var c, Eigen::Index k) {
  if (k < 1) throw InvalidArgument("build_L: k must be >= 1");
  const auto powers = matrix_powers(c, k);
  return diffcore::hconcat(powers);
}

namespace {

// Returns {C^k, M0, M1} on the tape.
struct VarmaVars {
  Var ck, m0, m1;
};

VarmaVars varma_vars(Var c, Eigen::Index k) {
  const auto powers = matrix_powers(c, k);
  std::vector<Var> partial;
  for (Eigen::Index j = 0; j < k; ++j)
    partial.push_back(j == 0 ? powers[0] : diffcore::add(partial.back(), powers[static_cast<std::size_t>(j)]));
  std::vector<Var> m1_blocks;
  for (const Var& p : partial) m1_blocks.push_back(diffcore::sub(partial.back(), p));
  return {diffcore::matmul(c, powers.back()), diffcore::hconcat(partial), diffcore::hconcat(m1_blocks)};
}

}  // namespace

Matrix least_squares_transition(const Matrix& series) {
  if (series.cols() < 2) throw InvalidArgument("least_squares_transition: need at least two observations");
  const Eigen::Index t = series.cols();
  const Matrix past = series.leftCols(t - 1);
  const Matrix next = series.rightCols(t - 1);
  const Matrix gram = past * past.transpose();
  return (next * past.transpose()) * gram.completeOrthogonalDecomposition().pseudoInverse();
}

Matrix initial_transition(const Matrix& data, Eigen::Index k, TransitionInit init, std::uint64_t seed) {
  const Eigen::Index n = data.rows();
  if (k < 1) throw InvalidArgument("initial_transition: k must be >= 1");
  if (init == TransitionInit::LeastSquaresRoot) {
    const Matrix fit = least_squares_transition(data);
    const auto eig = Eigen::EigenSolver<Matrix>(fit, false).eigenvalues();
    bool usable = fit.allFinite();
    for (Eigen::Index i = 0; i < eig.size() && usable; ++i)
      usable = eig(i).real() > 0 && std::abs(eig(i).imag()) < 1e-12 * std::max(1.0, std::abs(eig(i)));
    if (usable) {
      const Matrix root = k == 1 ? fit : Matrix(Eigen::MatrixPower<Matrix>(const_cast<Matrix&>(fit))(1.0 / static_cast<double>(k)));
      if (root.allFinite() && (matrix_power(root, k) - fit).norm() <= 1e-6 * std::max(1.0, fit.norm()))
        return root;
    }
    return 0.5 * Matrix::Identity(n, n);
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Matrix c(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) c(i, j) = u(rng);
  return c;
}

// ---- subsampled ---------------------------------------------------------------------------

SubsampledModel::SubsampledModel(Matrix initial, Eigen::Index k, std::unique_ptr<sources::SourceGenerator> gen)
    : factor(k), noise_sources(std::move(gen)) {
  if (initial.rows() != initial.cols() || initial.rows() < 1)
    throw InvalidArgument("subsampled model: transition must be square");
  if (k < 1) throw InvalidArgument("subsampled model: k must be >= 1");
  if (!noise_sources || noise_sources->dim() != initial.rows() * k)
    throw InvalidArgument("subsampled model: generator must provide n*k sources");
  transition = Param("transition", std::move(initial));
}

SubsampledModel::SubsampledModel(const SubsampledModel& other)
    : transition(other.transition),
      factor(other.factor),
      noise_sources(other.noise_sources ? other.noise_sources->clone() : nullptr) {}

Var conditional_generate(Var transition, Eigen::Index k, const Matrix& cond, Var noise) {
  const Eigen::Index n = transition.rows();
  if (transition.cols() != n) throw InvalidArgument("conditional_generate: transition must be square");
  if (k < 1) throw InvalidArgument("conditional_generate: k must be >= 1");
  if (cond.rows() != n) throw InvalidArgument("conditional_generate: condition must have n rows");
  if (noise.rows() != n * k || noise.cols() != cond.cols())
    throw InvalidArgument("conditional_generate: noise must be (n*k) x batch");
  Tape& tape = transition.tape();
  const auto powers = matrix_powers(transition, k);
  Var ck = diffcore::matmul(transition, powers.back());
  Var l = diffcore::hconcat(powers);
  return diffcore::add(diffcore::matmul(ck, tape.constant(cond)), diffcore::matmul(l, noise));
}

Var conditional_generate(Tape& tape, SubsampledModel& model, const Matrix& cond, Rng& rng) {
  Var noise = model.noise_sources->sample(tape, cond.cols(), rng);
  return conditional_generate(tape.param(model.transition), model.k(), cond, noise);
}

TransitionTrainResult train_subsampled(SubsampledModel& model, const Matrix& data, const TrainConfig& config) {
  config.validate();
  if (data.rows() != model.n()) throw InvalidArgument("train_subsampled: data must have n rows");
  if (data.cols() < config.batch + 1)
    throw InvalidArgument("train_subsampled: series length " + std::to_string(data.cols()) +
                          " is shorter than batch + 1");
  if (!data.allFinite()) throw InvalidArgument("train_subsampled: data contains non-finite values");

  const mmd::KernelSpec kernel = oica::training_kernel(data, config, derive_seed(config.seed, 1));
  const mmd::KernelSpec kernels[] = {kernel, kernel};
  oica::EpochSampler sampler(data.cols() - 1, config.batch, derive_seed(config.seed, 2));
  Rng noise_rng(derive_seed(config.seed, 3));

  oica::TrainingProblem problem;
  problem.params.push_back(&model.transition);
  for (Param* p : model.noise_sources->params()) problem.source_params.push_back(p);
  problem.loss = [&](Tape& tape, long) {
    std::vector<Eigen::Index> idx = sampler.next();
    const Matrix cond = oica::gather_columns(data, idx);
    for (auto& i : idx) ++i;
    const Matrix target = oica::gather_columns(data, idx);
    Var generated = conditional_generate(tape, model, cond, noise_rng);
    const Matrix real[] = {cond, target};
    const Var gen[] = {tape.constant(cond), generated};
    return mmd::joint_mmd2(real, gen, kernels);
  };

  TransitionTrainResult out;
  out.loss_trace = oica::run_training(problem, config);
  out.transition = model.transition.value;
  return out;
}

// ---- aggregated -------------------------------------------------------------------------------

AggregatedModel::AggregatedModel(Matrix initial, Eigen::Index k, Eigen::Index l,
                                 std::unique_ptr<sources::SourceGenerator> gen)
    : factor(k), piece_len(l), eps_sources(std::move(gen)) {
  if (initial.rows() != initial.cols() || initial.rows() < 1)
    throw InvalidArgument("aggregated model: transition must be square");
  if (k < 1) throw InvalidArgument("aggregated model: k must be >= 1");
  if (l < 2) throw InvalidArgument("aggregated model: piece length must be >= 2");
  if (!eps_sources || eps_sources->dim() != initial.rows() * k)
    throw InvalidArgument("aggregated model: generator must provide n*k sources");
  transition = Param("transition", std::move(initial));
}

AggregatedModel::AggregatedModel(const AggregatedModel& other)
    : transition(other.transition),
      factor(other.factor),
      piece_len(other.piece_len),
      eps_sources(other.eps_sources ? other.eps_sources->clone() : nullptr) {}

std::vector<Var> divided_generate_piece(Var transition, Eigen::Index k, const Matrix& cond,
                                        std::span<const Var> eps) {
  const Eigen::Index n = transition.rows();
  if (transition.cols() != n) throw InvalidArgument("divided_generate_piece: transition must be square");
  if (k < 1) throw InvalidArgument("divided_generate_piece: k must be >= 1");
  if (cond.rows() != n) throw InvalidArgument("divided_generate_piece: condition must have n rows");
  if (eps.size() < 2) throw InvalidArgument("divided_generate_piece: need at least two noise blocks");
  for (const Var& e : eps)
    if (e.rows() != n * k || e.cols() != cond.cols())
      throw InvalidArgument("divided_generate_piece: noise blocks must be (n*k) x batch");
  Tape& tape = transition.tape();
  const VarmaVars v = varma_vars(transition, k);
  std::vector<Var> out;
  Var prev = tape.constant(cond);
  for (std::size_t j = 1; j < eps.size(); ++j) {
    Var next = diffcore::matmul(v.ck, prev);
    next = diffcore::add(next, diffcore::matmul(v.m0, eps[j]));
    next = diffcore::add(next, diffcore::matmul(v.m1, eps[j - 1]));
    out.push_back(next);
    prev = next;
  }
  return out;
}

PiecePartition partition_pieces(Eigen::Index length, Eigen::Index piece_len) {
  if (piece_len < 1) throw InvalidArgument("partition_pieces: piece length must be >= 1");
  if (length < piece_len)
    throw InvalidArgument("partition_pieces: series length " + std::to_string(length) +
                          " is shorter than the piece length " + std::to_string(piece_len));
  PiecePartition p;
  for (Eigen::Index s = 0; s + piece_len <= length; s += piece_len) p.starts.push_back(s);
  p.dropped = length - static_cast<Eigen::Index>(p.starts.size()) * piece_len;
  return p;
}

TransitionTrainResult train_aggregated(AggregatedModel& model, const Matrix& data, const TrainConfig& config) {
  config.validate();
  if (data.rows() != model.n()) throw InvalidArgument("train_aggregated: data must have n rows");
  if (!data.allFinite()) throw InvalidArgument("train_aggregated: data contains non-finite values");
  const Eigen::Index l = model.piece_len;
  const PiecePartition part = partition_pieces(data.cols(), l);
  const auto pieces = static_cast<Eigen::Index>(part.starts.size());
  if (pieces < 2)
    throw InvalidArgument("train_aggregated: " + std::to_string(pieces) +
                          " piece(s) of length " + std::to_string(l) + "; MMD needs at least 2");
  if (pieces < config.batch)
    throw InvalidArgument("train_aggregated: " + std::to_string(pieces) + " pieces is fewer than batch " +
                          std::to_string(config.batch));

  const mmd::KernelSpec kernel = oica::training_kernel(data, config, derive_seed(config.seed, 1));
  const std::vector<mmd::KernelSpec> kernels(static_cast<std::size_t>(l), kernel);
  oica::EpochSampler sampler(pieces, config.batch, derive_seed(config.seed, 2));
  Rng noise_rng(derive_seed(config.seed, 3));

  oica::TrainingProblem problem;
  problem.params.push_back(&model.transition);
  for (Param* p : model.eps_sources->params()) problem.source_params.push_back(p);
  problem.loss = [&](Tape& tape, long) {
    const std::vector<Eigen::Index> chosen = sampler.next();
    std::vector<Matrix> real;
    for (Eigen::Index j = 0; j < l; ++j) {
      std::vector<Eigen::Index> cols;
      for (Eigen::Index c : chosen) cols.push_back(part.starts[static_cast<std::size_t>(c)] + j);
      real.push_back(oica::gather_columns(data, cols));
    }
    std::vector<Var> eps;
    for (Eigen::Index j = 0; j < l; ++j) eps.push_back(model.eps_sources->sample(tape, config.batch, noise_rng));
    std::vector<Var> gen{tape.constant(real[0])};
    for (const Var& v : divided_generate_piece(tape.param(model.transition), model.k(), real[0], eps))
      gen.push_back(v);
    return mmd::joint_mmd2(real, gen, kernels);
  };

  TransitionTrainResult out;
  out.loss_trace = oica::run_training(problem, config);
  out.transition = model.transition.value;
  out.pieces = pieces;
  out.dropped = part.dropped;
  return out;
}

}  // namespace lfoica::causal
