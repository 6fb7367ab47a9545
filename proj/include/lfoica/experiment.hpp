#pragma once

// Seeded experiment harness: flat dotted-key JSON configs, replicated runs,
// CSV time-series ingestion and a JSON results document.

#include "lfoica/causal.hpp"
#include "lfoica/oica.hpp"
#include "lfoica/sources.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lfoica::experiment {

enum class Task { Oica, MeasurementError, Subsampled, Aggregated };

std::string to_string(Task task);
Task task_from_string(const std::string& name);  // throws ConfigError on "task"

enum class OicaSources { Laplace, Mog };
enum class InitMode { Uniform, Oracle, LeastSquaresRoot };

struct ExperimentConfig {
  Task task = Task::Oica;
  std::uint64_t seed = 0;
  int replications = 1;

  // data.*
  Eigen::Index p = 0, d = 0;  // oica
  Eigen::Index n = 0;         // causal tasks
  Eigen::Index samples = 0;   // N (oica, measurement-error) or T (time series)
  Eigen::Index k = 1;
  OicaSources oica_sources = OicaSources::Laplace;
  double edge_probability = 0.3;
  std::optional<std::filesystem::path> csv;  // observed series instead of a generated one

  // model.*
  sources::GeneratorOptions generator;
  InitMode init = InitMode::Uniform;
  Eigen::Index piece_len = 0;  // aggregated

  oica::TrainConfig train;

  // The parsed document, echoed into results.
  nlohmann::json echo;

  // Cross-field checks; throws ConfigError naming the field.
  void validate() const;
};

ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

struct ReplicationResult {
  int index = 0;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string error;
  double mse = 0.0;      // oica: aligned against the unit-first-column truth
  double raw_mse = 0.0;  // oica: aligned against the truth as generated
  double final_loss = 0.0;
  double seconds = 0.0;  // training only
  Matrix estimate;
  Matrix truth;  // empty when the data came from a file
};

struct Aggregate {
  int completed = 0;
  int diverged = 0;
  double mean_mse = 0.0;  // NaN when nothing completed or there is no truth
  double median_mse = 0.0;
};

struct RunResult {
  Task task = Task::Oica;
  nlohmann::json config;
  std::vector<ReplicationResult> replications;
  Aggregate aggregate;
};

// Replication r runs with seed + r on freshly generated data. Divergence is
// recorded on the replication and left out of the aggregate.
RunResult run_experiment(const ExperimentConfig& config, int threads = 1);

ReplicationResult run_replication(const ExperimentConfig& config, int index);

Aggregate aggregate(const std::vector<ReplicationResult>& replications);

struct TimeSeries {
  Matrix values;  // variables x time steps
  std::vector<std::string> names;
};

// Header row of names, then one row per time step. CRLF accepted.
TimeSeries load_timeseries_csv(const std::filesystem::path& path);
TimeSeries parse_timeseries_csv(const std::string& text);
void save_timeseries_csv(const TimeSeries& series, const std::filesystem::path& path);

nlohmann::json results_to_json(const RunResult& result);
RunResult results_from_json(const nlohmann::json& doc);
void save_results(const RunResult& result, const std::filesystem::path& path);
RunResult load_results(const std::filesystem::path& path);

// Observed data and truth of replication `index`, as datagen writes them.
struct GeneratedData {
  Matrix observed;
  Matrix truth;
};
GeneratedData generate_data(const ExperimentConfig& config, int index);

}  // namespace lfoica::experiment
