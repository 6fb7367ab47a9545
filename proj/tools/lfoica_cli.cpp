// lfoica: run experiments from config files and generate synthetic data.

#include "lfoica/errors.hpp"
#include "lfoica/experiment.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace ex = lfoica::experiment;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kAllDiverged = 4 };

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> replications;
  int threads = 1;
};

void add_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "experiment config (flat JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output path")->required();
  cmd->add_option("--seed", o.seed, "override the base seed");
  cmd->add_option("--replications", o.replications, "override the replication count");
  cmd->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
}

ex::ExperimentConfig load(const Options& o) {
  ex::ExperimentConfig c = ex::load_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.echo["seed"] = *o.seed;
  }
  if (o.replications) {
    c.replications = *o.replications;
    c.echo["replications"] = *o.replications;
  }
  c.validate();
  return c;
}

std::string fmt(double x) {
  if (!std::isfinite(x)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

int run_task(ex::Task task, const Options& o) {
  ex::ExperimentConfig c = load(o);
  if (c.task != task)
    throw lfoica::ConfigError("task", "config is for '" + ex::to_string(c.task) + "', not '" + ex::to_string(task) + "'");
  const ex::RunResult r = ex::run_experiment(c, o.threads);
  ex::save_results(r, o.out);
  for (const auto& rep : r.replications) {
    std::cout << "replication " << rep.index << " seed " << rep.seed;
    if (rep.diverged)
      std::cout << " diverged: " << rep.error << '\n';
    else
      std::cout << " mse " << fmt(rep.mse) << " loss " << fmt(rep.final_loss) << " time " << fmt(rep.seconds) << "s\n";
  }
  std::cout << "median mse " << fmt(r.aggregate.median_mse) << " mean mse " << fmt(r.aggregate.mean_mse) << " ("
            << r.aggregate.completed << " completed, " << r.aggregate.diverged << " diverged)\n";
  if (r.aggregate.completed == 0) {
    std::cerr << "all replications diverged\n";
    return kAllDiverged;
  }
  return kOk;
}

std::filesystem::path replication_path(const std::filesystem::path& out, int index, int count) {
  if (count == 1) return out;
  std::filesystem::path p = out;
  p.replace_filename(out.stem().string() + "_r" + std::to_string(index) + out.extension().string());
  return p;
}

int datagen(const Options& o) {
  ex::ExperimentConfig c = load(o);
  for (int r = 0; r < c.replications; ++r) {
    ex::GeneratedData data = ex::generate_data(c, r);
    ex::TimeSeries ts{data.observed, {}};
    for (Eigen::Index i = 0; i < ts.values.rows(); ++i) ts.names.push_back("x" + std::to_string(i + 1));
    const auto path = replication_path(o.out, r, c.replications);
    ex::save_timeseries_csv(ts, path);
    std::cout << "wrote " << path.string() << " (" << ts.values.rows() << " variables, " << ts.values.cols()
              << " rows)\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Likelihood-free overcomplete ICA and causal discovery experiments"};
  app.require_subcommand(1);

  Options o;
  struct Sub {
    const char* name;
    const char* help;
    std::optional<ex::Task> task;
  };
  const Sub subs[] = {
      {"oica", "recover an overcomplete mixing matrix", ex::Task::Oica},
      {"measurement-error", "causal adjacency under measurement error", ex::Task::MeasurementError},
      {"subsampled", "transition matrix from subsampled series", ex::Task::Subsampled},
      {"aggregated", "transition matrix from temporally aggregated series", ex::Task::Aggregated},
      {"datagen", "write the configured synthetic data as CSV", std::nullopt},
  };
  std::vector<std::pair<CLI::App*, std::optional<ex::Task>>> commands;
  for (const Sub& s : subs) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    add_options(cmd, o);
    commands.emplace_back(cmd, s.task);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    for (auto& [cmd, task] : commands)
      if (cmd->parsed()) return task ? run_task(*task, o) : datagen(o);
  } catch (const lfoica::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const lfoica::ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const lfoica::InvalidArgument& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const lfoica::StabilityError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
