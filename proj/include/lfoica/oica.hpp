#pragma once

// Likelihood-free overcomplete ICA: x_hat = A * s_hat with s_hat drawn from a
// learnable source generator; A and the generator are fit by minimizing the
// MMD between generated and observed minibatches.

#include "lfoica/diffcore.hpp"
#include "lfoica/mmd.hpp"
#include "lfoica/sources.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace lfoica::oica {

struct TrainConfig {
  Eigen::Index batch = 256;
  long iters = 2000;
  diffcore::AdamConfig adam;
  double lambda = 0.0;  // L1 weight on the structural matrix; threshold lambda * lr
  // Fixed kernel; when unset the median heuristic on a real minibatch is
  // scaled by `multipliers`.
  std::optional<mmd::KernelSpec> kernel;
  std::vector<double> multipliers = mmd::default_multipliers();
  mmd::Estimator estimator = mmd::Estimator::Biased;
  std::uint64_t seed = 0;
  // Step size for source-generator parameters; adam.lr when unset.
  std::optional<double> source_lr;
  // Cosine decay of both step sizes down to final_lr_fraction of their start.
  double final_lr_fraction = 1.0;

  void validate() const;
  double decay_at(long iter) const;
  double lr_at(long iter) const { return adam.lr * decay_at(iter); }
  double source_lr_at(long iter) const { return source_lr.value_or(adam.lr) * decay_at(iter); }
  diffcore::ProxConfig prox() const { return {lambda, adam.lr}; }
};

// Draws minibatch column indices without replacement, reshuffling each epoch.
class EpochSampler {
 public:
  EpochSampler(Eigen::Index population, Eigen::Index batch, std::uint64_t seed);
  std::vector<Eigen::Index> next();

 private:
  Eigen::Index batch_;
  std::vector<Eigen::Index> order_;
  std::size_t cursor_;
  Rng rng_;
};

Matrix gather_columns(const Matrix& data, const std::vector<Eigen::Index>& columns);

// Kernel frozen for a whole run: config.kernel if set, else median heuristic
// over (at most 500) randomly chosen columns of `real`.
mmd::KernelSpec training_kernel(const Matrix& real, const TrainConfig& config, std::uint64_t seed);

// One optimization problem handed to run_training.
struct TrainingProblem {
  std::vector<diffcore::Param*> params;         // structural parameters, step size adam.lr
  std::vector<diffcore::Param*> source_params;  // generator parameters, step size source_lr
  // Builds the scalar loss for iteration `iter` on a fresh tape.
  std::function<diffcore::Var(diffcore::Tape&, long iter)> loss;
  // Runs after every optimizer step (prox, projections) with the step size used.
  std::function<void(double lr)> after_step;
};

// Adam on every param, loss recorded before each update. Throws
// NumericalDivergence carrying the iteration index on a non-finite loss/grad.
std::vector<double> run_training(TrainingProblem& problem, const TrainConfig& config);

enum class InitMode { Uniform, Oracle };

class OicaModel {
 public:
  OicaModel(Eigen::Index p, Eigen::Index d, std::unique_ptr<sources::SourceGenerator> sources,
            std::uint64_t seed);
  OicaModel(const OicaModel& other);
  OicaModel& operator=(const OicaModel& other);
  OicaModel(OicaModel&&) noexcept = default;
  OicaModel& operator=(OicaModel&&) noexcept = default;

  // A = truth + N(0, noise_std^2) elementwise.
  void init_oracle(const Matrix& truth, double noise_std, std::uint64_t seed);

  Eigen::Index p() const { return mixing.value.rows(); }
  Eigen::Index d() const { return mixing.value.cols(); }

  diffcore::Param mixing;
  std::unique_ptr<sources::SourceGenerator> sources;
};

inline constexpr double kOracleInitNoise = 0.5;

diffcore::Var mix(diffcore::Var mixing, diffcore::Var source_batch);
diffcore::Var mix(diffcore::Tape& tape, OicaModel& model, diffcore::Var source_batch);

struct TrainResult {
  std::vector<double> loss_trace;
  Matrix mixing;
};

TrainResult train_lfoica(OicaModel& model, const Matrix& data, const TrainConfig& config);

}  // namespace lfoica::oica
