#pragma once

// Generators of independent non-Gaussian sources: per-source MLPs applied to
// Gaussian noise, or a learnable mixture of Gaussians sampled through
// Gumbel-softmax and the reparameterization trick.

#include "lfoica/diffcore.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

namespace lfoica {

using Rng = std::mt19937_64;

// Deterministic child seed for stream `index` of a run seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng);

namespace sources {

// Interface shared by the two source families. sample() returns a
// dim() x batch block on the given tape; row i depends only on the
// parameters of source i.
class SourceGenerator {
 public:
  virtual ~SourceGenerator() = default;

  virtual Eigen::Index dim() const = 0;
  virtual diffcore::Var sample(diffcore::Tape& tape, Eigen::Index batch, Rng& rng) = 0;
  virtual std::vector<diffcore::Param*> params() = 0;
  virtual std::unique_ptr<SourceGenerator> clone() const = 0;
};

struct MlpConfig {
  std::vector<Eigen::Index> hidden{16, 16};
  double slope = 0.2;
  // Standardize each source over the batch, leaving scale to the mixing matrix.
  bool standardize = false;
};

// One independent 1 -> hidden... -> 1 network per source.
class MlpSourceGen final : public SourceGenerator {
 public:
  MlpSourceGen(Eigen::Index sources, const MlpConfig& config, std::uint64_t seed);

  Eigen::Index dim() const override { return static_cast<Eigen::Index>(nets_.size()); }
  diffcore::Var sample(diffcore::Tape& tape, Eigen::Index batch, Rng& rng) override;
  std::vector<diffcore::Param*> params() override;
  std::unique_ptr<SourceGenerator> clone() const override;

  // Deterministic pass of an explicit noise block (dim() x batch).
  diffcore::Var forward(diffcore::Tape& tape, const Matrix& noise);

  const MlpConfig& config() const { return config_; }
  // layers are stored as weight, bias, weight, bias, ...
  std::vector<diffcore::Param>& layers(Eigen::Index source) { return nets_[static_cast<std::size_t>(source)]; }

 private:
  MlpConfig config_;
  std::vector<std::vector<diffcore::Param>> nets_;
};

Matrix sample_gumbel(Eigen::Index rows, Eigen::Index cols, Rng& rng);
// Inverse CDF -log(-log(u)), with u clamped to [eps, 1 - eps].
double gumbel_from_uniform(double u);

// Soft one-hot over m categories for every column of g (m x batch).
Vector gumbel_softmax(const Vector& weights, const Vector& g, double tau);
diffcore::Var gumbel_softmax(diffcore::Var log_weights, const Matrix& g, double tau);

struct MogConfig {
  Eigen::Index components = 2;
  double tau = 0.5;
  bool learn_weights = true;
};

// Random draws consumed by one MoG sample call.
struct MogDraws {
  Matrix eps;                  // dim x batch, standard normal
  std::vector<Matrix> gumbel;  // per source, components x batch
};

class MogSourceGen final : public SourceGenerator {
 public:
  MogSourceGen(Eigen::Index sources, const MogConfig& config, std::uint64_t seed);

  Eigen::Index dim() const override { return logits_.value.rows(); }
  diffcore::Var sample(diffcore::Tape& tape, Eigen::Index batch, Rng& rng) override;
  std::vector<diffcore::Param*> params() override;
  std::unique_ptr<SourceGenerator> clone() const override;

  MogDraws draw(Eigen::Index batch, Rng& rng) const;
  diffcore::Var sample_with(diffcore::Tape& tape, const MogDraws& draws);

  // Rows are sources, columns components. Weights are normalized on read.
  Matrix weights() const;
  Matrix means() const { return means_.value; }
  Matrix scales() const { return log_scales_.value.array().exp().matrix(); }
  void set_weights(const Matrix& w);
  void set_means(const Matrix& mu) { means_.value = mu; }
  void set_scales(const Matrix& sigma);

  const MogConfig& config() const { return config_; }

 private:
  MogConfig config_;
  diffcore::Param logits_;
  diffcore::Param means_;
  diffcore::Param log_scales_;
};

enum class SourceFamily { Mlp, Mog };

// Sample-count rule for picking a family when the caller does not force one.
inline constexpr Eigen::Index kMogBelowSamples = 2000;
SourceFamily choose_family(Eigen::Index samples);

struct GeneratorOptions {
  // Unset: chosen from the data size by choose_family.
  std::optional<SourceFamily> family;
  MlpConfig mlp;
  MogConfig mog;
};

std::unique_ptr<SourceGenerator> make_generator(Eigen::Index sources, Eigen::Index samples,
                                                const GeneratorOptions& options, std::uint64_t seed);

}  // namespace sources
}  // namespace lfoica
