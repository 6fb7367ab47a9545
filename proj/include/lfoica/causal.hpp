#pragma once

// Causal-discovery models built on the LFOICA trainer:
//  - LiNGAM with measurement error: X = [(I - B)^-1  I] [E~; E]
//  - subsampled VAR(1): x~_{t+1} = C^k x~_t + L e~_{t+1},  L = [I, C, ..., C^{k-1}]
//  - aggregated VAR(1): x~_t = C^k x~_{t-1} + M0 eps_t + M1 eps_{t-1}

#include "lfoica/diffcore.hpp"
#include "lfoica/oica.hpp"
#include "lfoica/sources.hpp"

#include <memory>
#include <span>
#include <vector>

namespace lfoica::causal {

inline constexpr double kMaxConditionNumber = 1e8;

double condition_number(const Matrix& m);

// [(I - B)^-1  I], n x 2n. Throws SingularMatrix when cond(I - B) > 1e8.
Matrix measurement_mixing(const Matrix& adjacency);
diffcore::Var measurement_mixing(diffcore::Var adjacency);

class MeasurementErrorModel {
 public:
  MeasurementErrorModel(Eigen::Index n, std::unique_ptr<sources::SourceGenerator> tilde_sources,
                        std::uint64_t seed);
  MeasurementErrorModel(const MeasurementErrorModel& other);
  MeasurementErrorModel(MeasurementErrorModel&&) noexcept = default;

  Eigen::Index n() const { return adjacency.value.rows(); }
  Vector noise_scales() const { return log_noise_scale.value.col(0).array().exp().matrix(); }

  // X_hat = (I - B)^-1 E~_hat + diag(scales) z, z ~ N(0, I).
  diffcore::Var generate(diffcore::Tape& tape, Eigen::Index batch, Rng& rng);

  // Zeroes the diagonal of B.
  void project();

  diffcore::Param adjacency;
  std::unique_ptr<sources::SourceGenerator> tilde_sources;
  diffcore::Param log_noise_scale;  // n x 1
};

struct MeasurementTrainResult {
  std::vector<double> loss_trace;
  Matrix adjacency;
  Vector noise_scales;
};

MeasurementTrainResult train_measurement_error(MeasurementErrorModel& model, const Matrix& data,
                                               const oica::TrainConfig& config);

// C^j by repeated squaring; C^0 = I.
Matrix matrix_power(const Matrix& c, Eigen::Index j);
Matrix build_L(const Matrix& c, Eigen::Index k);

struct VarmaBlocks {
  Matrix m0;  // block j = sum_{i<=j} C^i
  Matrix m1;  // block j = sum_{j<i<k} C^i
};
VarmaBlocks build_M0_M1(const Matrix& c, Eigen::Index k);

// Tape versions; powers[j] = C^j for j = 0..count-1.
std::vector<diffcore::Var> matrix_powers(diffcore::Var c, Eigen::Index count);
diffcore::Var build_L(diffcore::Var c, Eigen::Index k);

// Least-squares fit of y_{t+1} = M y_t over consecutive columns.
Matrix least_squares_transition(const Matrix& series);

enum class TransitionInit {
  Uniform,        // entries uniform(-0.5, 0.5)
  LeastSquaresRoot,  // principal k-th root of the lag-one least-squares fit
};

class SubsampledModel {
 public:
  SubsampledModel(Matrix initial, Eigen::Index k, std::unique_ptr<sources::SourceGenerator> noise_sources);
  SubsampledModel(const SubsampledModel& other);
  SubsampledModel(SubsampledModel&&) noexcept = default;

  Eigen::Index n() const { return transition.value.rows(); }
  Eigen::Index k() const { return factor; }

  diffcore::Param transition;
  Eigen::Index factor;
  std::unique_ptr<sources::SourceGenerator> noise_sources;  // n*k sources
};

// C^k cond + L noise for cond (n x B) and noise (nk x B).
diffcore::Var conditional_generate(diffcore::Var transition, Eigen::Index k, const Matrix& cond,
                                   diffcore::Var noise);
diffcore::Var conditional_generate(diffcore::Tape& tape, SubsampledModel& model, const Matrix& cond, Rng& rng);

struct TransitionTrainResult {
  std::vector<double> loss_trace;
  Matrix transition;
  Eigen::Index pieces = 0;   // aggregated only
  Eigen::Index dropped = 0;  // tail observations outside any piece
};

TransitionTrainResult train_subsampled(SubsampledModel& model, const Matrix& data, const oica::TrainConfig& config);

class AggregatedModel {
 public:
  AggregatedModel(Matrix initial, Eigen::Index k, Eigen::Index piece_len,
                  std::unique_ptr<sources::SourceGenerator> eps_sources);
  AggregatedModel(const AggregatedModel& other);
  AggregatedModel(AggregatedModel&&) noexcept = default;

  Eigen::Index n() const { return transition.value.rows(); }
  Eigen::Index k() const { return factor; }

  diffcore::Param transition;
  Eigen::Index factor;
  Eigen::Index piece_len;
  std::unique_ptr<sources::SourceGenerator> eps_sources;  // n*k sources
};

// Rolls x_hat_{t+j} = C^k x_hat_{t+j-1} + M0 eps_{t+j} + M1 eps_{t+j-1}
// for j = 1..l-1 starting from the real condition; eps holds l blocks.
std::vector<diffcore::Var> divided_generate_piece(diffcore::Var transition, Eigen::Index k, const Matrix& cond,
                                                  std::span<const diffcore::Var> eps);

struct PiecePartition {
  std::vector<Eigen::Index> starts;
  Eigen::Index dropped = 0;
};

// Non-overlapping pieces starting at 0 and advancing by l.
PiecePartition partition_pieces(Eigen::Index length, Eigen::Index piece_len);

TransitionTrainResult train_aggregated(AggregatedModel& model, const Matrix& data, const oica::TrainConfig& config);

// Initial transition matrix from data according to `init`.
Matrix initial_transition(const Matrix& data, Eigen::Index k, TransitionInit init, std::uint64_t seed);

}  // namespace lfoica::causal
