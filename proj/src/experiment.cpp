#include "lfoica/experiment.hpp"

#include "lfoica/errors.hpp"
#include "lfoica/evalign.hpp"
#include "lfoica/synthdata.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace lfoica::experiment {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::map<Task, std::string>& task_names() {
  static const std::map<Task, std::string> names{{Task::Oica, "oica"},
                                                 {Task::MeasurementError, "measurement-error"},
                                                 {Task::Subsampled, "subsampled"},
                                                 {Task::Aggregated, "aggregated"}};
  return names;
}

const std::set<std::string>& common_keys() {
  static const std::set<std::string> keys{
      "task",         "seed",         "replications",     "model.sources",     "model.mlp.hidden",
      "model.mlp.slope", "model.mlp.standardize", "model.mog.components", "model.mog.tau",
      "model.mog.learn_weights", "model.init", "train.lr", "train.source_lr", "train.beta1",
      "train.beta2",  "train.eps",    "train.batch",      "train.iters",       "train.final_lr_fraction",
      "train.lambda", "kernel.multipliers", "kernel.estimator", "kernel.bandwidths"};
  return keys;
}

std::set<std::string> task_keys(Task task) {
  switch (task) {
    case Task::Oica:
      return {"data.p", "data.d", "data.N", "data.sources"};
    case Task::MeasurementError:
      return {"data.n", "data.N", "data.edge_probability", "data.csv"};
    case Task::Subsampled:
      return {"data.n", "data.T", "data.k", "data.csv"};
    case Task::Aggregated:
      return {"data.n", "data.T", "data.k", "data.csv", "model.piece_len"};
  }
  return {};
}

// Typed access to a flat document, naming the key on every failure.
class Fields {
 public:
  explicit Fields(const json& doc) : doc_(doc) {}

  bool has(const std::string& key) const { return doc_.contains(key); }

  double real(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (!v.is_number()) throw ConfigError(key, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(key, "must be finite");
    return x;
  }

  long long integer(const std::string& key, long long fallback) const {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
    return v.get<long long>();
  }

  long long required_integer(const std::string& key) const {
    if (!has(key)) throw ConfigError(key, "required for this task");
    return integer(key, 0);
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(key, "expected a non-negative integer");
    return static_cast<std::uint64_t>(v.get<long long>());
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (!v.is_string()) throw ConfigError(key, "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> reals(const std::string& key) const {
    const json& v = doc_.at(key);
    if (!v.is_array() || v.empty()) throw ConfigError(key, "expected a non-empty array of numbers");
    std::vector<double> out;
    for (const json& e : v) {
      if (!e.is_number()) throw ConfigError(key, "expected a non-empty array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

 private:
  const json& doc_;
};

template <typename T>
T choice(const std::string& key, const std::string& value, const std::map<std::string, T>& options) {
  auto it = options.find(value);
  if (it != options.end()) return it->second;
  std::string allowed;
  for (const auto& [name, _] : options) allowed += (allowed.empty() ? "" : ", ") + name;
  throw ConfigError(key, "unknown value '" + value + "' (expected one of: " + allowed + ")");
}

}  // namespace

std::string to_string(Task task) { return task_names().at(task); }

Task task_from_string(const std::string& name) {
  for (const auto& [task, text] : task_names())
    if (text == name) return task;
  throw ConfigError("task", "unknown task '" + name + "'");
}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("", "config must be a JSON object");
  for (const auto& [key, value] : doc.items())
    if (value.is_object()) throw ConfigError(key, "nested objects are not allowed; use dotted keys");

  const Fields f(doc);
  ExperimentConfig c;
  if (!f.has("task")) throw ConfigError("task", "required");
  c.task = task_from_string(f.text("task", ""));
  c.echo = doc;

  std::set<std::string> allowed = common_keys();
  for (const auto& key : task_keys(c.task)) allowed.insert(key);
  for (const auto& [key, _] : doc.items())
    if (!allowed.count(key)) throw ConfigError(key, "not a recognized key for task " + to_string(c.task));

  c.seed = f.unsigned_integer("seed", 0);
  c.replications = static_cast<int>(f.integer("replications", 1));

  switch (c.task) {
    case Task::Oica:
      c.p = f.required_integer("data.p");
      c.d = f.required_integer("data.d");
      c.samples = f.required_integer("data.N");
      c.oica_sources = choice<OicaSources>("data.sources", f.text("data.sources", "laplace"),
                                           {{"laplace", OicaSources::Laplace}, {"mog", OicaSources::Mog}});
      break;
    case Task::MeasurementError:
      c.edge_probability = f.real("data.edge_probability", 0.3);
      break;
    case Task::Subsampled:
    case Task::Aggregated:
      c.k = f.required_integer("data.k");
      break;
  }
  if (c.task != Task::Oica) {
    if (f.has("data.csv")) {
      c.csv = f.text("data.csv", "");
      for (const char* key : {"data.n", "data.N", "data.T"})
        if (f.has(key)) throw ConfigError(key, "dimensions come from data.csv");
    } else {
      c.n = f.required_integer("data.n");
      c.samples = f.required_integer(c.task == Task::MeasurementError ? "data.N" : "data.T");
    }
  }
  if (c.task == Task::Aggregated) c.piece_len = f.required_integer("model.piece_len");

  auto& gen = c.generator;
  const std::string family = f.text("model.sources", "auto");
  if (family != "auto")
    gen.family = choice<sources::SourceFamily>("model.sources", family,
                                               {{"mlp", sources::SourceFamily::Mlp}, {"mog", sources::SourceFamily::Mog}});
  if (f.has("model.mlp.hidden")) {
    gen.mlp.hidden.clear();
    for (double w : f.reals("model.mlp.hidden")) {
      if (w < 1 || w != std::floor(w)) throw ConfigError("model.mlp.hidden", "widths must be positive integers");
      gen.mlp.hidden.push_back(static_cast<Eigen::Index>(w));
    }
  }
  gen.mlp.slope = f.real("model.mlp.slope", gen.mlp.slope);
  gen.mlp.standardize = f.boolean("model.mlp.standardize", c.task == Task::Oica);
  gen.mog.components = f.integer("model.mog.components", gen.mog.components);
  gen.mog.tau = f.real("model.mog.tau", gen.mog.tau);
  gen.mog.learn_weights = f.boolean("model.mog.learn_weights", gen.mog.learn_weights);

  c.init = choice<InitMode>("model.init", f.text("model.init", "uniform"),
                            {{"uniform", InitMode::Uniform},
                             {"oracle", InitMode::Oracle},
                             {"ls-root", InitMode::LeastSquaresRoot}});

  auto& t = c.train;
  t.adam.lr = f.real("train.lr", t.adam.lr);
  if (f.has("train.source_lr")) t.source_lr = f.real("train.source_lr", 0);
  t.adam.beta1 = f.real("train.beta1", t.adam.beta1);
  t.adam.beta2 = f.real("train.beta2", t.adam.beta2);
  t.adam.eps = f.real("train.eps", t.adam.eps);
  t.batch = f.integer("train.batch", t.batch);
  t.iters = static_cast<long>(f.integer("train.iters", t.iters));
  t.final_lr_fraction = f.real("train.final_lr_fraction", t.final_lr_fraction);
  t.lambda = f.real("train.lambda", c.task == Task::MeasurementError ? 1e-3 : 0.0);
  if (f.has("kernel.multipliers")) t.multipliers = f.reals("kernel.multipliers");
  t.estimator = choice<mmd::Estimator>("kernel.estimator", f.text("kernel.estimator", "biased"),
                                       {{"biased", mmd::Estimator::Biased}, {"unbiased", mmd::Estimator::Unbiased}});
  if (f.has("kernel.bandwidths")) t.kernel = mmd::KernelSpec{f.reals("kernel.bandwidths"), t.estimator};

  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const char* field, const std::string& what) {
    if (!ok) throw ConfigError(field, what);
  };
  require(replications >= 1, "replications", "must be >= 1");
  require(train.batch >= 2, "train.batch", "must be >= 2");
  require(train.iters >= 1, "train.iters", "must be >= 1");
  require(train.adam.lr > 0, "train.lr", "must be > 0");
  require(!train.source_lr || *train.source_lr > 0, "train.source_lr", "must be > 0");
  require(train.adam.beta1 > 0 && train.adam.beta1 < 1, "train.beta1", "must lie in (0, 1)");
  require(train.adam.beta2 > 0 && train.adam.beta2 < 1, "train.beta2", "must lie in (0, 1)");
  require(train.adam.eps > 0, "train.eps", "must be > 0");
  require(train.final_lr_fraction > 0 && train.final_lr_fraction <= 1, "train.final_lr_fraction",
          "must lie in (0, 1]");
  require(train.lambda >= 0, "train.lambda", "must be >= 0");
  for (double m : train.multipliers) require(m > 0, "kernel.multipliers", "entries must be > 0");
  if (train.kernel)
    for (double b : train.kernel->bandwidths) require(b > 0, "kernel.bandwidths", "entries must be > 0");
  for (Eigen::Index w : generator.mlp.hidden) require(w >= 1, "model.mlp.hidden", "widths must be >= 1");
  require(generator.mog.components >= 1, "model.mog.components", "must be >= 1");
  require(generator.mog.tau > 0, "model.mog.tau", "must be > 0");

  const bool from_file = csv.has_value();
  switch (task) {
    case Task::Oica:
      require(p >= 1, "data.p", "must be >= 1");
      require(d >= p, "data.d", "must be >= data.p");
      require(samples >= train.batch, "data.N", "must be >= train.batch");
      require(init != InitMode::LeastSquaresRoot, "model.init", "ls-root applies to time-series tasks");
      break;
    case Task::MeasurementError:
      require(edge_probability >= 0 && edge_probability <= 1, "data.edge_probability", "must lie in [0, 1]");
      if (!from_file) {
        require(n >= 2, "data.n", "must be >= 2");
        require(samples >= train.batch, "data.N", "must be >= train.batch");
      }
      require(init == InitMode::Uniform, "model.init", "only uniform applies to measurement-error");
      break;
    case Task::Subsampled:
    case Task::Aggregated:
      require(k >= 1, "data.k", "must be >= 1");
      require(init != InitMode::Oracle, "model.init", "oracle applies to oica only");
      if (!from_file) require(n >= 1, "data.n", "must be >= 1");
      if (task == Task::Subsampled) {
        if (!from_file) require(samples >= train.batch + 1, "data.T", "must be >= train.batch + 1");
      } else {
        require(piece_len >= 2, "model.piece_len", "must be >= 2");
        if (!from_file)
          require(samples / piece_len >= std::max<Eigen::Index>(2, train.batch), "data.T",
                  "must hold at least max(2, train.batch) pieces of length model.piece_len");
      }
      break;
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", path.string() + ": " + e.what());
  }
  ExperimentConfig c = parse_config(doc);
  if (c.csv && c.csv->is_relative()) c.csv = path.parent_path() / *c.csv;
  return c;
}

// ---- replications ----------------------------------------------------------------------

namespace {

struct ReplicationSeeds {
  std::uint64_t run, data, generator, model, init;
};

ReplicationSeeds seeds_for(const ExperimentConfig& c, int index) {
  const std::uint64_t run = c.seed + static_cast<std::uint64_t>(index);
  return {run, derive_seed(run, 10), derive_seed(run, 11), derive_seed(run, 12), derive_seed(run, 13)};
}

Matrix load_observed(const ExperimentConfig& c) {
  TimeSeries ts = load_timeseries_csv(*c.csv);
  return std::move(ts.values);
}

synth::VarRecipe var_recipe(const ExperimentConfig& c) {
  synth::VarRecipe r;
  r.n = c.n;
  r.length = c.samples;
  r.factor = c.k;
  r.scheme = c.task == Task::Subsampled ? synth::Scheme::Subsample : synth::Scheme::Aggregate;
  return r;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

GeneratedData generate_data(const ExperimentConfig& c, int index) {
  const ReplicationSeeds s = seeds_for(c, index);
  switch (c.task) {
    case Task::Oica: {
      const auto specs = c.oica_sources == OicaSources::Laplace ? synth::laplace_sources(c.d) : synth::mog_sources(c.d);
      synth::OicaData data = synth::gen_oica(c.p, c.d, c.samples, synth::McMixSpec{specs, s.data, true});
      return {std::move(data.mixtures), std::move(data.mixing)};
    }
    case Task::MeasurementError: {
      if (c.csv) return {load_observed(c), Matrix()};
      synth::MeasurementErrorRecipe recipe;
      recipe.edge_probability = c.edge_probability;
      synth::MeasurementErrorData data = synth::gen_measurement_error(c.n, c.samples, s.data, recipe);
      return {std::move(data.observed), std::move(data.adjacency)};
    }
    case Task::Subsampled:
    case Task::Aggregated: {
      if (c.csv) return {load_observed(c), Matrix()};
      synth::VarDataset data = synth::gen_var(var_recipe(c), s.data);
      return {std::move(data.observed), std::move(data.transition.matrix)};
    }
  }
  throw InvalidArgument("generate_data: unknown task");
}

ReplicationResult run_replication(const ExperimentConfig& c, int index) {
  const ReplicationSeeds s = seeds_for(c, index);
  ReplicationResult r;
  r.index = index;
  r.seed = s.run;
  GeneratedData data = generate_data(c, index);
  r.truth = data.truth;
  if (!data.observed.allFinite()) throw InvalidArgument("observed data contains non-finite values");

  oica::TrainConfig train = c.train;
  train.seed = s.run;
  const Eigen::Index rows = data.observed.rows();
  const Eigen::Index cols = data.observed.cols();

  using Clock = std::chrono::steady_clock;
  Clock::time_point start;
  std::vector<double> trace;
  try {
    switch (c.task) {
      case Task::Oica: {
        oica::OicaModel model(c.p, c.d, sources::make_generator(c.d, cols, c.generator, s.generator), s.model);
        if (c.init == InitMode::Oracle) model.init_oracle(data.truth, oica::kOracleInitNoise, s.init);
        start = Clock::now();
        oica::TrainResult t = oica::train_lfoica(model, data.observed, train);
        trace = std::move(t.loss_trace);
        r.estimate = std::move(t.mixing);
        break;
      }
      case Task::MeasurementError: {
        if (data.observed.cols() < train.batch) throw InvalidArgument("fewer samples than train.batch");
        causal::MeasurementErrorModel model(rows, sources::make_generator(rows, cols, c.generator, s.generator),
                                            s.model);
        start = Clock::now();
        causal::MeasurementTrainResult t = causal::train_measurement_error(model, data.observed, train);
        trace = std::move(t.loss_trace);
        r.estimate = std::move(t.adjacency);
        break;
      }
      case Task::Subsampled:
      case Task::Aggregated: {
        const auto init = c.init == InitMode::LeastSquaresRoot ? causal::TransitionInit::LeastSquaresRoot
                                                               : causal::TransitionInit::Uniform;
        Matrix initial = causal::initial_transition(data.observed, c.k, init, s.model);
        auto gen = sources::make_generator(rows * c.k, cols, c.generator, s.generator);
        causal::TransitionTrainResult t;
        start = Clock::now();
        if (c.task == Task::Subsampled) {
          causal::SubsampledModel model(std::move(initial), c.k, std::move(gen));
          t = causal::train_subsampled(model, data.observed, train);
        } else {
          causal::AggregatedModel model(std::move(initial), c.k, c.piece_len, std::move(gen));
          t = causal::train_aggregated(model, data.observed, train);
        }
        trace = std::move(t.loss_trace);
        r.estimate = std::move(t.transition);
        break;
      }
    }
  } catch (const NumericalDivergence& e) {
    r.diverged = true;
    r.error = e.what();
  } catch (const SingularMatrix& e) {
    r.diverged = true;
    r.error = e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();

  if (r.diverged) {
    r.mse = r.raw_mse = r.final_loss = kNaN;
    r.estimate = Matrix();
    return r;
  }
  r.final_loss = trace.empty() ? kNaN : trace.back();
  if (r.truth.size() == 0) {
    r.mse = r.raw_mse = kNaN;
  } else if (c.task == Task::Oica) {
    r.mse = evalign::align(r.estimate, evalign::normalize_first_column(r.truth)).alignment.residual_mse;
    r.raw_mse = evalign::align(r.estimate, r.truth).alignment.residual_mse;
  } else {
    r.mse = r.raw_mse = evalign::mse(r.estimate, r.truth);
  }
  return r;
}

Aggregate aggregate(const std::vector<ReplicationResult>& reps) {
  Aggregate a;
  std::vector<double> values;
  for (const auto& r : reps) {
    if (r.diverged) {
      ++a.diverged;
      continue;
    }
    ++a.completed;
    if (std::isfinite(r.mse)) values.push_back(r.mse);
  }
  a.mean_mse = values.empty() ? kNaN : std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  a.median_mse = median_of(values);
  return a;
}

RunResult run_experiment(const ExperimentConfig& c, int threads) {
  c.validate();
  RunResult out;
  out.task = c.task;
  out.config = c.echo;
  out.replications.resize(static_cast<std::size_t>(c.replications));
  std::vector<std::exception_ptr> errors(out.replications.size());

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < c.replications; i = next++) {
      try {
        out.replications[static_cast<std::size_t>(i)] = run_replication(c, i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const int workers = std::clamp(threads, 1, c.replications);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  out.aggregate = aggregate(out.replications);
  return out;
}

// ---- CSV -------------------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    cells.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return cells;
}

std::string shortest(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

}  // namespace

TimeSeries parse_timeseries_csv(const std::string& text) {
  std::vector<std::string_view> lines;
  std::string_view rest(text);
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    rest.remove_prefix(nl + 1);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("empty file", 1);

  TimeSeries ts;
  for (auto name : split_cells(lines[0])) {
    if (name.empty()) throw ParseError("empty column name in header", 1);
    ts.names.emplace_back(name);
  }
  const std::size_t n = ts.names.size();
  const std::size_t steps = lines.size() - 1;
  if (steps == 0) throw ParseError("no data rows after the header", 2);

  ts.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(steps));
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t line_no = t + 2;
    const auto cells = split_cells(lines[t + 1]);
    if (cells.size() != n)
      throw ParseError("expected " + std::to_string(n) + " cells, found " + std::to_string(cells.size()), line_no);
    for (std::size_t j = 0; j < n; ++j) {
      const std::string_view cell = cells[j];
      if (cell.empty()) throw ParseError("missing value in column " + ts.names[j], line_no);
      const char* first = cell.data();
      if (*first == '+') ++first;
      double v = 0;
      auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw ParseError("non-numeric value '" + std::string(cell) + "' in column " + ts.names[j], line_no);
      ts.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t)) = v;
    }
  }
  return ts;
}

TimeSeries load_timeseries_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_timeseries_csv(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

void save_timeseries_csv(const TimeSeries& ts, const std::filesystem::path& path) {
  if (static_cast<Eigen::Index>(ts.names.size()) != ts.values.rows())
    throw InvalidArgument("save_timeseries_csv: one name per variable required");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t j = 0; j < ts.names.size(); ++j) out << (j ? "," : "") << ts.names[j];
  out << '\n';
  for (Eigen::Index t = 0; t < ts.values.cols(); ++t) {
    for (Eigen::Index j = 0; j < ts.values.rows(); ++j) out << (j ? "," : "") << shortest(ts.values(j, t));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// ---- results ---------------------------------------------------------------------------

namespace {

// Non-finite numbers become null and their key is listed under "non_finite".
void put(json& obj, const std::string& key, double x) {
  if (std::isfinite(x)) {
    obj[key] = x;
  } else {
    obj[key] = nullptr;
    obj["non_finite"].push_back(key);
  }
}

double get(const json& obj, const std::string& key) {
  const json& v = obj.at(key);
  return v.is_null() ? kNaN : v.get<double>();
}

json matrix_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(std::isfinite(m(r, c)) ? json(m(r, c)) : json());
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ParseError("matrix data does not match its shape");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      const json& v = data[static_cast<std::size_t>(r * cols + c)];
      m(r, c) = v.is_null() ? kNaN : v.get<double>();
    }
  return m;
}

}  // namespace

json results_to_json(const RunResult& result) {
  json doc;
  doc["task"] = to_string(result.task);
  doc["config"] = result.config;
  json reps = json::array();
  json seconds = json::array();
  double total = 0;
  for (const auto& r : result.replications) {
    json j;
    j["index"] = r.index;
    j["seed"] = r.seed;
    j["diverged"] = r.diverged;
    j["error"] = r.error.empty() ? json() : json(r.error);
    put(j, "mse", r.mse);
    put(j, "raw_mse", r.raw_mse);
    put(j, "final_loss", r.final_loss);
    j["estimate"] = matrix_json(r.estimate);
    j["truth"] = matrix_json(r.truth);
    reps.push_back(std::move(j));
    seconds.push_back(r.seconds);
    total += r.seconds;
  }
  doc["replications"] = std::move(reps);
  json agg;
  agg["completed"] = result.aggregate.completed;
  agg["diverged"] = result.aggregate.diverged;
  put(agg, "mean_mse", result.aggregate.mean_mse);
  put(agg, "median_mse", result.aggregate.median_mse);
  doc["aggregate"] = std::move(agg);
  doc["timing"] = {{"training_seconds", std::move(seconds)}, {"total_training_seconds", total}};
  return doc;
}

RunResult results_from_json(const json& doc) {
  try {
    RunResult out;
    out.task = task_from_string(doc.at("task").get<std::string>());
    out.config = doc.at("config");
    const json& seconds = doc.at("timing").at("training_seconds");
    const json& reps = doc.at("replications");
    if (seconds.size() != reps.size()) throw ParseError("timing does not match the replication count");
    for (std::size_t i = 0; i < reps.size(); ++i) {
      const json& j = reps[i];
      ReplicationResult r;
      r.index = j.at("index").get<int>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.diverged = j.at("diverged").get<bool>();
      r.error = j.at("error").is_null() ? "" : j.at("error").get<std::string>();
      r.mse = get(j, "mse");
      r.raw_mse = get(j, "raw_mse");
      r.final_loss = get(j, "final_loss");
      r.estimate = matrix_from(j.at("estimate"));
      r.truth = matrix_from(j.at("truth"));
      r.seconds = seconds[i].get<double>();
      out.replications.push_back(std::move(r));
    }
    const json& agg = doc.at("aggregate");
    out.aggregate.completed = agg.at("completed").get<int>();
    out.aggregate.diverged = agg.at("diverged").get<int>();
    out.aggregate.mean_mse = get(agg, "mean_mse");
    out.aggregate.median_mse = get(agg, "median_mse");
    return out;
  } catch (const json::exception& e) {
    throw ParseError(std::string("results document: ") + e.what());
  }
}

void save_results(const RunResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write results to " + path.string());
  out << results_to_json(result).dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

RunResult load_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return results_from_json(doc);
}

}  // namespace lfoica::experiment
