#include "lfoica/synthdata.hpp"

#include "lfoica/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lfoica::synth {

namespace {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;
}  // namespace

void validate(const SourceSpec& spec) {
  std::visit(overloaded{
                 [](const Laplace& l) {
                   if (!(l.scale > 0) || !std::isfinite(l.scale))
                     throw InvalidArgument("laplace source: scale must be finite and > 0");
                 },
                 [](const GaussianMixture& g) {
                   const auto m = g.weights.size();
                   if (m == 0 || g.means.size() != m || g.variances.size() != m)
                     throw InvalidArgument("mixture source: weights, means, variances must align");
                   if ((g.weights.array() < 0).any() || std::abs(g.weights.sum() - 1) > 1e-9)
                     throw InvalidArgument("mixture source: weights must form a simplex");
                   if ((g.variances.array() < 0).any())
                     throw InvalidArgument("mixture source: variances must be >= 0");
                   if (variance(GaussianMixture{g}) <= 0)
                     throw InvalidArgument("mixture source: distribution is degenerate (zero variance)");
                 },
             },
             spec);
}

double variance(const SourceSpec& spec) {
  return std::visit(overloaded{
                        [](const Laplace& l) { return 2 * l.scale * l.scale; },
                        [](const GaussianMixture& g) {
                          const double mean = g.weights.dot(g.means);
                          return g.weights.dot((g.variances.array() + g.means.array().square()).matrix()) -
                                 mean * mean;
                        },
                    },
                    spec);
}

double draw(const SourceSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  return std::visit(overloaded{
                        [&](const Laplace& l) {
                          const double u = u01(rng) - 0.5;
                          const double mag = -l.scale * std::log1p(-2 * std::abs(u));
                          return u < 0 ? -mag : mag;
                        },
                        [&](const GaussianMixture& g) {
                          const double u = u01(rng);
                          Eigen::Index j = 0;
                          double acc = g.weights(0);
                          while (u >= acc && j + 1 < g.weights.size()) acc += g.weights(++j);
                          std::normal_distribution<double> n01(0.0, 1.0);
                          return g.means(j) + std::sqrt(g.variances(j)) * n01(rng);
                        },
                    },
                    spec);
}

Vector draw(const SourceSpec& spec, Eigen::Index count, Rng& rng) {
  Vector v(count);
  for (Eigen::Index i = 0; i < count; ++i) v(i) = draw(spec, rng);
  return v;
}

std::vector<SourceSpec> laplace_sources(Eigen::Index d) {
  std::vector<SourceSpec> out;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double frac = d > 1 ? static_cast<double>(i) / static_cast<double>(d - 1) : 0.0;
    out.emplace_back(Laplace{0.5 + 0.5 * frac});
  }
  return out;
}

std::vector<SourceSpec> mog_sources(Eigen::Index d) {
  std::vector<SourceSpec> out;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double frac = d > 1 ? static_cast<double>(i) / static_cast<double>(d - 1) : 0.0;
    const double w = 0.2 + 0.6 * frac;
    out.emplace_back(GaussianMixture{Vector{{w, 1 - w}}, Vector{{0.0, 0.0}}, Vector{{1.0, 4.0}}});
  }
  return out;
}

OicaData gen_oica(Eigen::Index p, Eigen::Index d, Eigen::Index samples, const McMixSpec& spec) {
  if (p < 1 || d < p) throw InvalidArgument("gen_oica: need 1 <= p <= d");
  if (samples < 1) throw InvalidArgument("gen_oica: need at least one sample");
  if (static_cast<Eigen::Index>(spec.sources.size()) != d)
    throw InvalidArgument("gen_oica: one source descriptor per component required");
  for (const auto& s : spec.sources) validate(s);
  if (spec.require_distinct) {
    for (std::size_t i = 0; i < spec.sources.size(); ++i)
      for (std::size_t j = i + 1; j < spec.sources.size(); ++j) {
        const auto& a = spec.sources[i];
        const auto& b = spec.sources[j];
        bool same = a.index() == b.index();
        if (same && std::holds_alternative<Laplace>(a))
          same = std::get<Laplace>(a).scale == std::get<Laplace>(b).scale;
        else if (same) {
          const auto& ga = std::get<GaussianMixture>(a);
          const auto& gb = std::get<GaussianMixture>(b);
          same = ga.weights == gb.weights && ga.means == gb.means && ga.variances == gb.variances;
        }
        if (same) throw InvalidArgument("gen_oica: source descriptors must be pairwise distinct");
      }
  }
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  OicaData out;
  out.mixing.resize(p, d);
  for (Eigen::Index c = 0; c < d; ++c)
    for (Eigen::Index r = 0; r < p; ++r) out.mixing(r, c) = u(rng);
  out.sources.resize(d, samples);
  for (Eigen::Index i = 0; i < d; ++i) out.sources.row(i) = draw(spec.sources[static_cast<std::size_t>(i)], samples, rng).transpose();
  out.mixtures = out.mixing * out.sources;
  return out;
}

Matrix observe_measurement(const Matrix& adjacency, const Matrix& tilde, const Matrix& measurement) {
  const Eigen::Index n = adjacency.rows();
  if (adjacency.cols() != n || tilde.rows() != n || measurement.rows() != n || tilde.cols() != measurement.cols())
    throw InvalidArgument("observe_measurement: shape mismatch");
  const Matrix i_minus_b = Matrix::Identity(n, n) - adjacency;
  return i_minus_b.partialPivLu().solve(tilde) + measurement;
}

MeasurementErrorData gen_measurement_error(Eigen::Index n, Eigen::Index samples, std::uint64_t seed,
                                           const MeasurementErrorRecipe& recipe) {
  if (n < 2) throw InvalidArgument("gen_measurement_error: need n >= 2");
  if (samples < 1) throw InvalidArgument("gen_measurement_error: need at least one sample");
  validate(recipe.tilde_noise);
  Rng rng(seed);
  MeasurementErrorData out;
  out.causal_order.resize(static_cast<std::size_t>(n));
  std::iota(out.causal_order.begin(), out.causal_order.end(), Eigen::Index{0});
  std::shuffle(out.causal_order.begin(), out.causal_order.end(), rng);

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> weight(recipe.weight_low, recipe.weight_high);
  out.adjacency = Matrix::Zero(n, n);
  for (std::size_t b = 1; b < out.causal_order.size(); ++b)
    for (std::size_t a = 0; a < b; ++a) {
      if (u01(rng) < recipe.edge_probability)
        out.adjacency(out.causal_order[b], out.causal_order[a]) = weight(rng);
    }

  out.tilde_noise.resize(n, samples);
  for (Eigen::Index i = 0; i < n; ++i) out.tilde_noise.row(i) = draw(recipe.tilde_noise, samples, rng).transpose();
  std::normal_distribution<double> meas(0.0, std::sqrt(recipe.measurement_variance));
  out.measurement_noise.resize(n, samples);
  for (Eigen::Index j = 0; j < samples; ++j)
    for (Eigen::Index i = 0; i < n; ++i) out.measurement_noise(i, j) = meas(rng);
  out.observed = observe_measurement(out.adjacency, out.tilde_noise, out.measurement_noise);
  return out;
}

double spectral_radius(const Matrix& c) {
  if (c.rows() != c.cols()) throw InvalidArgument("spectral_radius: matrix must be square");
  if (c.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(c, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

VarSeries var_simulate(const Matrix& transition, const std::vector<SourceSpec>& noise, Eigen::Index length,
                       Eigen::Index burn_in, std::uint64_t seed) {
  const Eigen::Index n = transition.rows();
  if (transition.cols() != n) throw InvalidArgument("var_simulate: transition must be square");
  if (static_cast<Eigen::Index>(noise.size()) != n) throw InvalidArgument("var_simulate: one noise spec per variable");
  if (length < 1 || burn_in < 0) throw InvalidArgument("var_simulate: bad length or burn-in");
  for (const auto& s : noise) validate(s);
  const double rho = spectral_radius(transition);
  if (!(rho < 1)) throw StabilityError("var_simulate: spectral radius " + std::to_string(rho) + " >= 1");

  Rng rng(seed);
  VarSeries out;
  out.series.resize(n, length);
  out.noise.resize(n, length);
  Vector x = Vector::Zero(n);
  Vector e(n);
  for (Eigen::Index t = 0; t < burn_in + length; ++t) {
    for (Eigen::Index i = 0; i < n; ++i) e(i) = draw(noise[static_cast<std::size_t>(i)], rng);
    x = transition * x + e;
    if (t >= burn_in) {
      out.series.col(t - burn_in) = x;
      out.noise.col(t - burn_in) = e;
    }
  }
  return out;
}

Matrix subsample(const Matrix& series, Eigen::Index k) {
  if (k < 1) throw InvalidArgument("subsample: factor must be >= 1");
  if (series.cols() == 0) return series;
  const Eigen::Index out_len = (series.cols() - 1) / k + 1;
  Matrix out(series.rows(), out_len);
  for (Eigen::Index t = 0; t < out_len; ++t) out.col(t) = series.col(t * k);
  return out;
}

Matrix aggregate(const Matrix& series, Eigen::Index k) {
  if (k < 1) throw InvalidArgument("aggregate: factor must be >= 1");
  const Eigen::Index out_len = series.cols() / k;
  Matrix out(series.rows(), out_len);
  for (Eigen::Index t = 0; t < out_len; ++t) out.col(t) = series.middleCols(t * k, k).rowwise().mean();
  return out;
}

Transition stabilize(Matrix c) {
  Transition t;
  t.radius_before = spectral_radius(c);
  if (t.radius_before >= 1) {
    c *= kRescaledRadius / t.radius_before;
    t.rescaled = true;
  }
  t.matrix = std::move(c);
  return t;
}

Transition sample_transition(Eigen::Index n, const TransitionRanges& ranges, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("sample_transition: need n >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> diag(ranges.diag_low, ranges.diag_high);
  std::uniform_real_distribution<double> off(ranges.off_low, ranges.off_high);
  Matrix c(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) c(i, j) = i == j ? diag(rng) : off(rng);
  return stabilize(std::move(c));
}

std::vector<SourceSpec> var_noise_sources(Eigen::Index n) {
  std::vector<SourceSpec> out;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double frac = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    const double w = 0.5 + 0.4 * frac;
    out.emplace_back(GaussianMixture{Vector{{w, 1 - w}}, Vector{{0.0, 0.0}}, Vector{{0.1, 4.0}}});
  }
  return out;
}

VarDataset gen_var(const VarRecipe& recipe, std::uint64_t seed) {
  if (recipe.length < 2) throw InvalidArgument("gen_var: need at least two observations");
  if (recipe.factor < 1) throw InvalidArgument("gen_var: factor must be >= 1");
  VarDataset out;
  out.transition = sample_transition(recipe.n, recipe.ranges, derive_seed(seed, 0));
  const auto noise = recipe.noise.empty() ? var_noise_sources(recipe.n) : recipe.noise;
  const Eigen::Index high_len = recipe.scheme == Scheme::Subsample ? (recipe.length - 1) * recipe.factor + 1
                                                                   : recipe.length * recipe.factor;
  out.high = var_simulate(out.transition.matrix, noise, high_len, recipe.burn_in, derive_seed(seed, 1));
  out.observed = recipe.scheme == Scheme::Subsample ? subsample(out.high.series, recipe.factor)
                                                    : aggregate(out.high.series, recipe.factor);
  return out;
}

}  // namespace lfoica::synth
