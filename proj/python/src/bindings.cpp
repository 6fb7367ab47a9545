#include "lfoica/causal.hpp"
#include "lfoica/errors.hpp"
#include "lfoica/evalign.hpp"
#include "lfoica/experiment.hpp"
#include "lfoica/mmd.hpp"
#include "lfoica/oica.hpp"
#include "lfoica/synthdata.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace pybind11::literals;
using namespace lfoica;

namespace {

struct TrainArgs {
  Eigen::Index batch;
  long iters;
  double lr;
  std::optional<double> source_lr;
  double final_lr_fraction;
  double lam;
  std::uint64_t seed;
  std::string sources;
  bool standardize;
};

oica::TrainConfig train_config(const TrainArgs& a) {
  oica::TrainConfig c;
  c.batch = a.batch;
  c.iters = a.iters;
  c.adam.lr = a.lr;
  c.source_lr = a.source_lr;
  c.final_lr_fraction = a.final_lr_fraction;
  c.lambda = a.lam;
  c.seed = a.seed;
  return c;
}

sources::GeneratorOptions generator_options(const TrainArgs& a) {
  sources::GeneratorOptions g;
  if (a.sources == "mlp")
    g.family = sources::SourceFamily::Mlp;
  else if (a.sources == "mog")
    g.family = sources::SourceFamily::Mog;
  else if (a.sources != "auto")
    throw InvalidArgument("sources must be 'auto', 'mlp' or 'mog'");
  g.mlp.standardize = a.standardize;
  return g;
}

causal::TransitionInit transition_init(const std::string& name) {
  if (name == "ls-root") return causal::TransitionInit::LeastSquaresRoot;
  if (name == "uniform") return causal::TransitionInit::Uniform;
  throw InvalidArgument("init must be 'ls-root' or 'uniform'");
}

mmd::KernelSpec kernel_spec(const std::vector<double>& bandwidths, bool unbiased) {
  mmd::KernelSpec k{bandwidths, unbiased ? mmd::Estimator::Unbiased : mmd::Estimator::Biased};
  k.validate();
  return k;
}

// Keyword arguments shared by every trainer.
#define LFOICA_TRAIN_KWARGS(default_lr, default_sources, default_standardize)                               \
  py::kw_only(), "batch"_a = 256, "iters"_a = 2000, "lr"_a = default_lr, "source_lr"_a = py::none(),      \
      "final_lr_fraction"_a = 1.0, "lam"_a = 0.0, "seed"_a = 0, "sources"_a = default_sources,             \
      "standardize"_a = default_standardize

}  // namespace

PYBIND11_MODULE(_lfoica, m) {
  m.doc() = "Native core of the lfoica package.";

  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  static py::exception<NumericalDivergence> divergence(m, "NumericalDivergence", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      PyErr_SetString(config_error.ptr(), e.what());
    } catch (const NumericalDivergence& e) {
      PyErr_SetString(divergence.ptr(), e.what());
    } catch (const InvalidArgument& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const ParseError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const SingularMatrix& e) {
      PyErr_SetString(PyExc_ArithmeticError, e.what());
    } catch (const DegenerateMatrix& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const StabilityError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  // ---- kernels and MMD
  m.def("gaussian_kernel", &mmd::gaussian_kernel, "x"_a, "y"_a, "sigma2"_a);
  m.def(
      "median_bandwidth",
      [](const Matrix& samples) {
        const auto b = mmd::median_bandwidth(samples);
        return py::make_tuple(b.sigma2, b.degenerate);
      },
      "samples"_a, "Median pairwise squared distance of the columns; returns (sigma2, degenerate).");
  m.def(
      "mmd2",
      [](const Matrix& x, const Matrix& y, const std::vector<double>& bandwidths, bool unbiased) {
        return mmd::mmd2(x, y, kernel_spec(bandwidths, unbiased));
      },
      "x"_a, "y"_a, "bandwidths"_a, "unbiased"_a = false, "Squared MMD between column sample sets.");
  m.def(
      "joint_mmd2",
      [](const std::vector<Matrix>& real, const std::vector<Matrix>& gen, const std::vector<double>& bandwidths,
         bool unbiased) {
        const mmd::KernelSpec ks[1] = {kernel_spec(bandwidths, unbiased)};
        return mmd::joint_mmd2(real, gen, ks);
      },
      "real"_a, "generated"_a, "bandwidths"_a, "unbiased"_a = false, "Product-kernel MMD over tuple slots.");
  m.def("prox_l1", py::overload_cast<const Matrix&, double>(&diffcore::prox_l1), "a"_a, "threshold"_a);

  // ---- alignment
  m.def("normalize_first_column", &evalign::normalize_first_column, "a"_a);
  m.def("mse", &evalign::mse, "a"_a, "b"_a);
  m.def(
      "align",
      [](const Matrix& est, const Matrix& truth) {
        const auto r = evalign::align(est, truth);
        return py::dict("aligned"_a = r.aligned, "permutation"_a = r.alignment.permutation,
                        "scales"_a = r.alignment.scales, "residual_mse"_a = r.alignment.residual_mse);
      },
      "est"_a, "truth"_a);

  // ---- structural helpers
  m.def("measurement_mixing", py::overload_cast<const Matrix&>(&causal::measurement_mixing), "adjacency"_a);
  m.def("matrix_power", &causal::matrix_power, "c"_a, "j"_a);
  m.def("build_L", py::overload_cast<const Matrix&, Eigen::Index>(&causal::build_L), "c"_a, "k"_a);
  m.def(
      "build_M0_M1",
      [](const Matrix& c, Eigen::Index k) {
        auto b = causal::build_M0_M1(c, k);
        return py::make_tuple(b.m0, b.m1);
      },
      "c"_a, "k"_a);
  m.def("least_squares_transition", &causal::least_squares_transition, "series"_a);
  m.def("subsample", &synth::subsample, "series"_a, "k"_a);
  m.def("aggregate", &synth::aggregate, "series"_a, "k"_a);

  // ---- data
  m.def(
      "gen_oica",
      [](Eigen::Index p, Eigen::Index d, Eigen::Index n, std::uint64_t seed, const std::string& kind) {
        if (kind != "laplace" && kind != "mog") throw InvalidArgument("sources must be 'laplace' or 'mog'");
        const auto specs = kind == "laplace" ? synth::laplace_sources(d) : synth::mog_sources(d);
        const auto data = synth::gen_oica(p, d, n, {specs, seed, true});
        return py::dict("mixing"_a = data.mixing, "sources"_a = data.sources, "mixtures"_a = data.mixtures);
      },
      "p"_a, "d"_a, "n"_a, "seed"_a = 0, "sources"_a = "laplace");
  m.def(
      "gen_measurement_error",
      [](Eigen::Index n, Eigen::Index samples, std::uint64_t seed, double edge_probability) {
        synth::MeasurementErrorRecipe r;
        r.edge_probability = edge_probability;
        const auto data = synth::gen_measurement_error(n, samples, seed, r);
        return py::dict("adjacency"_a = data.adjacency, "observed"_a = data.observed,
                        "causal_order"_a = data.causal_order);
      },
      "n"_a, "samples"_a, "seed"_a = 0, "edge_probability"_a = 0.3);
  m.def(
      "gen_var",
      [](Eigen::Index n, Eigen::Index length, Eigen::Index k, const std::string& scheme, std::uint64_t seed) {
        synth::VarRecipe r;
        r.n = n;
        r.length = length;
        r.factor = k;
        if (scheme == "subsample")
          r.scheme = synth::Scheme::Subsample;
        else if (scheme == "aggregate")
          r.scheme = synth::Scheme::Aggregate;
        else
          throw InvalidArgument("scheme must be 'subsample' or 'aggregate'");
        const auto data = synth::gen_var(r, seed);
        return py::dict("transition"_a = data.transition.matrix, "observed"_a = data.observed,
                        "rescaled"_a = data.transition.rescaled);
      },
      "n"_a, "length"_a, "k"_a, "scheme"_a = "subsample", "seed"_a = 0);
  m.def(
      "load_timeseries_csv",
      [](const std::string& path) {
        auto ts = experiment::load_timeseries_csv(path);
        return py::make_tuple(ts.values, ts.names);
      },
      "path"_a, "Returns (values as variables x time, column names).");

  // ---- training
  m.def(
      "train_lfoica",
      [](const Matrix& data, Eigen::Index d, std::optional<Matrix> init, Eigen::Index batch, long iters, double lr,
         std::optional<double> source_lr, double final_lr_fraction, double lam, std::uint64_t seed,
         const std::string& kind, bool standardize) {
        const TrainArgs a{batch, iters, lr, source_lr, final_lr_fraction, lam, seed, kind, standardize};
        const auto cfg = train_config(a);
        const auto gen = generator_options(a);
        py::gil_scoped_release release;
        oica::OicaModel model(data.rows(), d, sources::make_generator(d, data.cols(), gen, derive_seed(seed, 11)),
                              derive_seed(seed, 12));
        if (init) {
          if (init->rows() != model.p() || init->cols() != d) throw InvalidArgument("init must be p x d");
          model.mixing.value = *init;
        }
        auto r = oica::train_lfoica(model, data, cfg);
        py::gil_scoped_acquire acquire;
        return py::dict("mixing"_a = r.mixing, "loss_trace"_a = r.loss_trace);
      },
      "data"_a, "d"_a, "init"_a = py::none(), LFOICA_TRAIN_KWARGS(1e-3, "auto", true),
      "Fit x = A s by MMD; data is p x N. Returns {'mixing', 'loss_trace'}.");
  m.def(
      "train_measurement_error",
      [](const Matrix& data, Eigen::Index batch, long iters, double lr, std::optional<double> source_lr,
         double final_lr_fraction, double lam, std::uint64_t seed, const std::string& kind, bool standardize) {
        const TrainArgs a{batch, iters, lr, source_lr, final_lr_fraction, lam, seed, kind, standardize};
        const auto cfg = train_config(a);
        const auto gen = generator_options(a);
        py::gil_scoped_release release;
        const Eigen::Index n = data.rows();
        causal::MeasurementErrorModel model(n, sources::make_generator(n, data.cols(), gen, derive_seed(seed, 11)),
                                            derive_seed(seed, 12));
        auto r = causal::train_measurement_error(model, data, cfg);
        py::gil_scoped_acquire acquire;
        return py::dict("adjacency"_a = r.adjacency, "noise_scales"_a = r.noise_scales, "loss_trace"_a = r.loss_trace);
      },
      "data"_a, LFOICA_TRAIN_KWARGS(1e-3, "auto", false),
      "LiNGAM with measurement error; data is n x N. Returns {'adjacency', 'noise_scales', 'loss_trace'}.");
  m.def(
      "train_subsampled",
      [](const Matrix& data, Eigen::Index k, const std::string& init, Eigen::Index batch, long iters, double lr,
         std::optional<double> source_lr, double final_lr_fraction, double lam, std::uint64_t seed,
         const std::string& kind, bool standardize) {
        const TrainArgs a{batch, iters, lr, source_lr, final_lr_fraction, lam, seed, kind, standardize};
        const auto cfg = train_config(a);
        const auto gen = generator_options(a);
        const auto mode = transition_init(init);
        py::gil_scoped_release release;
        const Eigen::Index n = data.rows();
        causal::SubsampledModel model(causal::initial_transition(data, k, mode, derive_seed(seed, 13)), k,
                                      sources::make_generator(n * k, data.cols(), gen, derive_seed(seed, 11)));
        auto r = causal::train_subsampled(model, data, cfg);
        py::gil_scoped_acquire acquire;
        return py::dict("transition"_a = r.transition, "loss_trace"_a = r.loss_trace);
      },
      "data"_a, "k"_a, "init"_a = "ls-root", LFOICA_TRAIN_KWARGS(1e-3, "mlp", false),
      "Transition matrix from a subsampled series (n x T). Returns {'transition', 'loss_trace'}.");
  m.def(
      "train_aggregated",
      [](const Matrix& data, Eigen::Index k, Eigen::Index piece_len, const std::string& init, Eigen::Index batch,
         long iters, double lr, std::optional<double> source_lr, double final_lr_fraction, double lam,
         std::uint64_t seed, const std::string& kind, bool standardize) {
        const TrainArgs a{batch, iters, lr, source_lr, final_lr_fraction, lam, seed, kind, standardize};
        const auto cfg = train_config(a);
        const auto gen = generator_options(a);
        const auto mode = transition_init(init);
        py::gil_scoped_release release;
        const Eigen::Index n = data.rows();
        causal::AggregatedModel model(causal::initial_transition(data, k, mode, derive_seed(seed, 13)), k, piece_len,
                                      sources::make_generator(n * k, data.cols(), gen, derive_seed(seed, 11)));
        auto r = causal::train_aggregated(model, data, cfg);
        py::gil_scoped_acquire acquire;
        return py::dict("transition"_a = r.transition, "loss_trace"_a = r.loss_trace, "pieces"_a = r.pieces,
                        "dropped"_a = r.dropped);
      },
      "data"_a, "k"_a, "piece_len"_a, "init"_a = "ls-root", LFOICA_TRAIN_KWARGS(1e-3, "mlp", false),
      "Transition matrix from an aggregated series (n x T).");

  // ---- experiments (JSON in, JSON out; wrapped in the package)
  m.def(
      "_run_experiment_json",
      [](const std::string& text, int threads) {
        const auto cfg = experiment::parse_config(nlohmann::json::parse(text));
        py::gil_scoped_release release;
        return experiment::results_to_json(experiment::run_experiment(cfg, threads)).dump();
      },
      "config"_a, "threads"_a = 1);
  m.def(
      "_run_experiment_file",
      [](const std::string& path, int threads) {
        const auto cfg = experiment::load_config(path);
        py::gil_scoped_release release;
        return experiment::results_to_json(experiment::run_experiment(cfg, threads)).dump();
      },
      "path"_a, "threads"_a = 1);
}
