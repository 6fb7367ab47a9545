#include "lfoica/oica.hpp"

#include "lfoica/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace lfoica::oica {

using diffcore::Param;
using diffcore::Tape;
using diffcore::Var;

void TrainConfig::validate() const {
  if (batch < 2) throw InvalidArgument("train: batch must be >= 2");
  if (iters < 1) throw InvalidArgument("train: iters must be >= 1");
  if (!(lambda >= 0)) throw InvalidArgument("train: lambda must be >= 0");
  if (!(final_lr_fraction > 0 && final_lr_fraction <= 1))
    throw InvalidArgument("train: final_lr_fraction must lie in (0, 1]");
  if (source_lr && !(*source_lr > 0 && std::isfinite(*source_lr)))
    throw InvalidArgument("train: source_lr must be finite and > 0");
  adam.validate();
  if (kernel) kernel->validate();
  if (!kernel && multipliers.empty()) throw InvalidArgument("train: bandwidth multipliers are empty");
}

double TrainConfig::decay_at(long iter) const {
  if (final_lr_fraction == 1.0 || iters <= 1) return 1.0;
  const double progress = static_cast<double>(iter) / static_cast<double>(iters - 1);
  const double cosine = 0.5 * (1 + std::cos(std::numbers::pi * progress));
  return final_lr_fraction + (1 - final_lr_fraction) * cosine;
}

EpochSampler::EpochSampler(Eigen::Index population, Eigen::Index batch, std::uint64_t seed)
    : batch_(batch), order_(static_cast<std::size_t>(population)), cursor_(order_.size()), rng_(seed) {
  if (batch < 1 || batch > population) throw InvalidArgument("sampler: batch must lie in [1, population]");
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
}

std::vector<Eigen::Index> EpochSampler::next() {
  if (cursor_ + static_cast<std::size_t>(batch_) > order_.size()) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }
  std::vector<Eigen::Index> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                order_.begin() + static_cast<std::ptrdiff_t>(cursor_) + batch_);
  cursor_ += static_cast<std::size_t>(batch_);
  return out;
}

Matrix gather_columns(const Matrix& data, const std::vector<Eigen::Index>& columns) {
  Matrix out(data.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = data.col(columns[j]);
  return out;
}

mmd::KernelSpec training_kernel(const Matrix& real, const TrainConfig& config, std::uint64_t seed) {
  if (config.kernel) return *config.kernel;
  const Eigen::Index held = std::min<Eigen::Index>(real.cols(), 500);
  EpochSampler sampler(real.cols(), held, seed);
  const mmd::Bandwidth bw = mmd::median_bandwidth(gather_columns(real, sampler.next()));
  return mmd::KernelSpec::scaled(bw.sigma2, config.multipliers, config.estimator);
}

std::vector<double> run_training(TrainingProblem& problem, const TrainConfig& config) {
  config.validate();
  std::vector<Param*> all = problem.params;
  all.insert(all.end(), problem.source_params.begin(), problem.source_params.end());
  const std::size_t structural = problem.params.size();
  std::vector<diffcore::AdamState> states;
  states.reserve(all.size());
  for (Param* p : all) states.push_back(diffcore::AdamState::for_param(*p, config.adam));

  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(config.iters));
  for (long it = 0; it < config.iters; ++it) {
    for (Param* p : all) p->zero_grad();
    Tape tape;
    Var loss = problem.loss(tape, it);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) throw NumericalDivergence("loss", it);
    trace.push_back(value);
    const double lr = config.lr_at(it);
    const double source_lr = config.source_lr_at(it);
    try {
      tape.backward(loss);
      for (std::size_t i = 0; i < states.size(); ++i) {
        states[i].config.lr = i < structural ? lr : source_lr;
        diffcore::adam_step(*all[i], states[i]);
      }
    } catch (const NumericalDivergence& e) {
      throw NumericalDivergence(e.where(), it);
    }
    if (problem.after_step) problem.after_step(lr);
  }
  return trace;
}

OicaModel::OicaModel(Eigen::Index p, Eigen::Index d, std::unique_ptr<sources::SourceGenerator> gen,
                     std::uint64_t seed)
    : sources(std::move(gen)) {
  if (p < 1 || d < p) throw InvalidArgument("oica model: need 1 <= p <= d");
  if (!sources || sources->dim() != d) throw InvalidArgument("oica model: generator must provide d sources");
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Matrix a(p, d);
  for (Eigen::Index c = 0; c < d; ++c)
    for (Eigen::Index r = 0; r < p; ++r) a(r, c) = u(rng);
  mixing = Param("mixing", std::move(a));
}

OicaModel::OicaModel(const OicaModel& other)
    : mixing(other.mixing), sources(other.sources ? other.sources->clone() : nullptr) {}

OicaModel& OicaModel::operator=(const OicaModel& other) {
  if (this != &other) {
    mixing = other.mixing;
    sources = other.sources ? other.sources->clone() : nullptr;
  }
  return *this;
}

void OicaModel::init_oracle(const Matrix& truth, double noise_std, std::uint64_t seed) {
  if (truth.rows() != p() || truth.cols() != d()) throw InvalidArgument("oracle init: truth shape mismatch");
  Rng rng(seed);
  mixing.value = truth + noise_std * standard_normal(p(), d(), rng);
}

Var mix(Var mixing, Var source_batch) {
  if (mixing.cols() != source_batch.rows())
    throw InvalidArgument("mix: source batch has " + std::to_string(source_batch.rows()) + " rows, expected " +
                          std::to_string(mixing.cols()));
  return diffcore::matmul(mixing, source_batch);
}

Var mix(Tape& tape, OicaModel& model, Var source_batch) { return mix(tape.param(model.mixing), source_batch); }

TrainResult train_lfoica(OicaModel& model, const Matrix& data, const TrainConfig& config) {
  config.validate();
  if (data.rows() != model.p()) throw InvalidArgument("train_lfoica: data must have p rows");
  if (data.cols() < config.batch)
    throw InvalidArgument("train_lfoica: " + std::to_string(data.cols()) + " samples is fewer than batch " +
                          std::to_string(config.batch));
  if (!data.allFinite()) throw InvalidArgument("train_lfoica: data contains non-finite values");

  const mmd::KernelSpec kernel = training_kernel(data, config, derive_seed(config.seed, 1));
  EpochSampler sampler(data.cols(), config.batch, derive_seed(config.seed, 2));
  Rng noise_rng(derive_seed(config.seed, 3));

  TrainingProblem problem;
  problem.params.push_back(&model.mixing);
  for (Param* p : model.sources->params()) problem.source_params.push_back(p);
  problem.loss = [&](Tape& tape, long) {
    const Matrix real = gather_columns(data, sampler.next());
    Var s = model.sources->sample(tape, config.batch, noise_rng);
    return mmd::mmd2(real, mix(tape, model, s), kernel);
  };
  problem.after_step = [&](double lr) {
    const double threshold = diffcore::ProxConfig{config.lambda, lr}.threshold();
    if (threshold > 0) model.mixing.value = diffcore::prox_l1(model.mixing.value, threshold);
  };

  TrainResult out;
  out.loss_trace = run_training(problem, config);
  out.mixing = model.mixing.value;
  return out;
}

}  // namespace lfoica::oica
