#pragma once

// Synthetic data recipes: overcomplete mixtures, LiNGAM data with
// measurement error, and VAR(1) series observed through subsampling or
// temporal aggregation. Everything is deterministic given the seed.

#include "lfoica/diffcore.hpp"
#include "lfoica/sources.hpp"

#include <cstdint>
#include <variant>
#include <vector>

namespace lfoica::synth {

struct Laplace {
  double scale = 1.0;  // b; variance 2 b^2
};

// Variances, not standard deviations.
struct GaussianMixture {
  Vector weights;
  Vector means;
  Vector variances;
};

using SourceSpec = std::variant<Laplace, GaussianMixture>;

void validate(const SourceSpec& spec);
double variance(const SourceSpec& spec);
double draw(const SourceSpec& spec, Rng& rng);
Vector draw(const SourceSpec& spec, Eigen::Index count, Rng& rng);

struct McMixSpec {
  std::vector<SourceSpec> sources;
  std::uint64_t seed = 0;
  bool require_distinct = false;
};

// Laplace sources with a different variance per component.
std::vector<SourceSpec> laplace_sources(Eigen::Index d);
// N(0,1) + N(0,4) with a different mixing proportion per component.
std::vector<SourceSpec> mog_sources(Eigen::Index d);

struct OicaData {
  Matrix mixing;   // p x d, entries uniform(-0.5, 0.5)
  Matrix sources;  // d x N
  Matrix mixtures; // p x N
};

OicaData gen_oica(Eigen::Index p, Eigen::Index d, Eigen::Index samples, const McMixSpec& spec);

struct MeasurementErrorRecipe {
  double edge_probability = 0.3;
  double weight_low = 0.5;
  double weight_high = 1.0;
  GaussianMixture tilde_noise{Vector{{0.8, 0.2}}, Vector{{0.0, 0.0}}, Vector{{0.01, 1.0}}};
  double measurement_variance = 0.1;
};

struct MeasurementErrorData {
  Matrix adjacency;      // B, n x n, zero diagonal, original variable order
  Matrix observed;       // X = (I - B)^-1 tilde_noise + measurement_noise
  Matrix tilde_noise;    // n x N
  Matrix measurement_noise;
  std::vector<Eigen::Index> causal_order;
};

// X = (I - B)^-1 tilde + measurement.
Matrix observe_measurement(const Matrix& adjacency, const Matrix& tilde, const Matrix& measurement);

MeasurementErrorData gen_measurement_error(Eigen::Index n, Eigen::Index samples, std::uint64_t seed,
                                           const MeasurementErrorRecipe& recipe = {});

struct VarSeries {
  Matrix series;  // n x T_high
  Matrix noise;   // e_t for every kept step
};

double spectral_radius(const Matrix& c);

// x_t = C x_{t-1} + e_t from x_{-1} = 0; the first burn_in steps are dropped.
VarSeries var_simulate(const Matrix& transition, const std::vector<SourceSpec>& noise, Eigen::Index length,
                       Eigen::Index burn_in, std::uint64_t seed);

// Keeps columns 0, k, 2k, ...
Matrix subsample(const Matrix& series, Eigen::Index k);
// Means of consecutive non-overlapping length-k windows; the tail is dropped.
Matrix aggregate(const Matrix& series, Eigen::Index k);

struct TransitionRanges {
  double diag_low = 0.5, diag_high = 1.0;
  double off_low = 0.0, off_high = 0.5;
};

struct Transition {
  Matrix matrix;
  bool rescaled = false;
  double radius_before = 0.0;
};

inline constexpr double kRescaledRadius = 0.95;

Transition sample_transition(Eigen::Index n, const TransitionRanges& ranges, std::uint64_t seed);
// C <- 0.95 C / rho(C) when rho(C) >= 1.
Transition stabilize(Matrix c);

enum class Scheme { Subsample, Aggregate };

// MoG noise N(0, 0.1) + N(0, 4) with a different proportion per variable.
std::vector<SourceSpec> var_noise_sources(Eigen::Index n);

struct VarRecipe {
  Eigen::Index n = 2;
  TransitionRanges ranges;
  std::vector<SourceSpec> noise;  // empty: var_noise_sources(n)
  Eigen::Index length = 300;      // number of low-resolution observations
  Eigen::Index factor = 2;
  Scheme scheme = Scheme::Subsample;
  Eigen::Index burn_in = 500;
};

struct VarDataset {
  Transition transition;
  Matrix observed;  // n x length
  VarSeries high;
};

VarDataset gen_var(const VarRecipe& recipe, std::uint64_t seed);

}  // namespace lfoica::synth
