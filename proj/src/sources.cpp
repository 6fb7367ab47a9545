#include "lfoica/sources.hpp"

#include "lfoica/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace lfoica {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over (seed, index)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix m(rows, cols);
  // Column-major fill: column j is sample j.
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n01(rng);
  return m;
}

namespace sources {

using diffcore::Param;
using diffcore::Tape;
using diffcore::Var;

// ---- MLP --------------------------------------------------------------------

MlpSourceGen::MlpSourceGen(Eigen::Index sources, const MlpConfig& config, std::uint64_t seed)
    : config_(config) {
  if (sources < 1) throw InvalidArgument("mlp sources: need at least one source");
  for (Eigen::Index w : config.hidden)
    if (w < 1) throw InvalidArgument("mlp sources: hidden widths must be positive");
  nets_.resize(static_cast<std::size_t>(sources));
  for (Eigen::Index i = 0; i < sources; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    auto& net = nets_[static_cast<std::size_t>(i)];
    Eigen::Index fan_in = 1;
    std::vector<Eigen::Index> widths = config.hidden;
    widths.push_back(1);
    for (std::size_t l = 0; l < widths.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      Matrix w(widths[l], fan_in);
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = u(rng);
      const std::string prefix = "mlp." + std::to_string(i) + ".layer" + std::to_string(l);
      net.emplace_back(prefix + ".weight", std::move(w));
      net.emplace_back(prefix + ".bias", Matrix::Zero(widths[l], 1));
      fan_in = widths[l];
    }
  }
}

Var MlpSourceGen::forward(Tape& tape, const Matrix& noise) {
  if (noise.rows() != dim()) throw InvalidArgument("mlp sources: noise must have one row per source");
  std::vector<Var> rows;
  rows.reserve(nets_.size());
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    auto& net = nets_[i];
    Var h = tape.constant(noise.row(static_cast<Eigen::Index>(i)));
    const std::size_t layers = net.size() / 2;
    for (std::size_t l = 0; l < layers; ++l) {
      h = diffcore::add_column(diffcore::matmul(tape.param(net[2 * l]), h), tape.param(net[2 * l + 1]));
      if (l + 1 < layers) h = diffcore::leaky_relu(h, config_.slope);
    }
    rows.push_back(h);
  }
  Var out = diffcore::vconcat(rows);
  return config_.standardize ? diffcore::standardize_rows(out) : out;
}

Var MlpSourceGen::sample(Tape& tape, Eigen::Index batch, Rng& rng) {
  if (batch < 1) throw InvalidArgument("mlp sources: batch must be >= 1");
  return forward(tape, standard_normal(dim(), batch, rng));
}

std::vector<Param*> MlpSourceGen::params() {
  std::vector<Param*> out;
  for (auto& net : nets_)
    for (auto& p : net) out.push_back(&p);
  return out;
}

std::unique_ptr<SourceGenerator> MlpSourceGen::clone() const { return std::make_unique<MlpSourceGen>(*this); }

// ---- Gumbel-softmax ------------------------------------------------------------

double gumbel_from_uniform(double u) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  u = std::min(std::max(u, eps), 1.0 - eps);
  return -std::log(-std::log(u));
}

Matrix sample_gumbel(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Matrix g(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) g(i, j) = gumbel_from_uniform(u01(rng));
  return g;
}

Vector gumbel_softmax(const Vector& weights, const Vector& g, double tau) {
  if (!(tau > 0)) throw InvalidArgument("gumbel_softmax: tau must be > 0");
  if (weights.size() != g.size()) throw InvalidArgument("gumbel_softmax: weights and draws differ in size");
  Vector x = (weights.array().log() + g.array()) / tau;
  x.array() -= x.maxCoeff();
  x = x.array().exp().matrix();
  return x / x.sum();
}

Var gumbel_softmax(Var log_weights, const Matrix& g, double tau) {
  if (!(tau > 0)) throw InvalidArgument("gumbel_softmax: tau must be > 0");
  if (log_weights.cols() != 1 || log_weights.rows() != g.rows())
    throw InvalidArgument("gumbel_softmax: log-weights must be a column matching the draws");
  Tape& tape = log_weights.tape();
  Var logits = diffcore::add_column(tape.constant(g), log_weights);
  return diffcore::softmax_columns(diffcore::scale(logits, 1.0 / tau));
}

// ---- MoG ---------------------------------------------------------------------

MogSourceGen::MogSourceGen(Eigen::Index sources, const MogConfig& config, std::uint64_t seed)
    : config_(config) {
  if (sources < 1) throw InvalidArgument("mog sources: need at least one source");
  if (config.components < 1) throw InvalidArgument("mog sources: need at least one component");
  if (!(config.tau > 0)) throw InvalidArgument("mog sources: tau must be > 0");
  const Eigen::Index m = config.components;
  Rng rng(seed);
  std::uniform_real_distribution<double> mu(-0.1, 0.1);
  std::uniform_real_distribution<double> ls(std::log(0.5), std::log(2.0));
  Matrix means(sources, m), log_scales(sources, m);
  for (Eigen::Index i = 0; i < sources; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      means(i, j) = mu(rng);
      log_scales(i, j) = ls(rng);
    }
  logits_ = Param("mog.logits", Matrix::Zero(sources, m));
  means_ = Param("mog.means", std::move(means));
  log_scales_ = Param("mog.log_scales", std::move(log_scales));
}

Matrix MogSourceGen::weights() const {
  Matrix w = logits_.value;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    w.row(i).array() -= w.row(i).maxCoeff();
    w.row(i) = w.row(i).array().exp().matrix();
    w.row(i) /= w.row(i).sum();
  }
  return w;
}

void MogSourceGen::set_weights(const Matrix& w) {
  if (w.rows() != logits_.value.rows() || w.cols() != logits_.value.cols())
    throw InvalidArgument("mog sources: weight shape mismatch");
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    if ((w.row(i).array() <= 0).any() || std::abs(w.row(i).sum() - 1) > 1e-9)
      throw InvalidArgument("mog sources: each weight row must be a positive simplex vector");
  }
  logits_.value = w.array().log().matrix();
}

void MogSourceGen::set_scales(const Matrix& sigma) {
  if ((sigma.array() <= 0).any()) throw InvalidArgument("mog sources: scales must be > 0");
  log_scales_.value = sigma.array().log().matrix();
}

MogDraws MogSourceGen::draw(Eigen::Index batch, Rng& rng) const {
  if (batch < 1) throw InvalidArgument("mog sources: batch must be >= 1");
  MogDraws d;
  d.eps = standard_normal(dim(), batch, rng);
  for (Eigen::Index i = 0; i < dim(); ++i) d.gumbel.push_back(sample_gumbel(config_.components, batch, rng));
  return d;
}

Var MogSourceGen::sample_with(Tape& tape, const MogDraws& draws) {
  const Eigen::Index d = dim();
  if (draws.eps.rows() != d || static_cast<Eigen::Index>(draws.gumbel.size()) != d)
    throw InvalidArgument("mog sources: draws do not match the source count");
  Var logits = config_.learn_weights ? tape.param(logits_) : tape.constant(logits_.value);
  Var means = tape.param(means_);
  Var scales = diffcore::exp(tape.param(log_scales_));
  std::vector<Var> rows;
  rows.reserve(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) {
    Var log_w = diffcore::log_softmax_columns(diffcore::transpose(diffcore::row(logits, i)));
    Var onehot = gumbel_softmax(log_w, draws.gumbel[static_cast<std::size_t>(i)], config_.tau);
    Var loc = diffcore::matmul(diffcore::row(means, i), onehot);
    Var spread = diffcore::matmul(diffcore::row(scales, i), onehot);
    Var eps = tape.constant(draws.eps.row(i));
    rows.push_back(diffcore::add(loc, diffcore::hadamard(eps, spread)));
  }
  return diffcore::vconcat(rows);
}

Var MogSourceGen::sample(Tape& tape, Eigen::Index batch, Rng& rng) {
  return sample_with(tape, draw(batch, rng));
}

std::vector<Param*> MogSourceGen::params() {
  std::vector<Param*> out;
  if (config_.learn_weights) out.push_back(&logits_);
  out.push_back(&means_);
  out.push_back(&log_scales_);
  return out;
}

std::unique_ptr<SourceGenerator> MogSourceGen::clone() const { return std::make_unique<MogSourceGen>(*this); }

// ---- factory -------------------------------------------------------------------

SourceFamily choose_family(Eigen::Index samples) {
  return samples < kMogBelowSamples ? SourceFamily::Mog : SourceFamily::Mlp;
}

std::unique_ptr<SourceGenerator> make_generator(Eigen::Index sources, Eigen::Index samples,
                                                const GeneratorOptions& options, std::uint64_t seed) {
  const SourceFamily family = options.family.value_or(choose_family(samples));
  if (family == SourceFamily::Mog) return std::make_unique<MogSourceGen>(sources, options.mog, seed);
  return std::make_unique<MlpSourceGen>(sources, options.mlp, seed);
}

}  // namespace sources
}  // namespace lfoica
