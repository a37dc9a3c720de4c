#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "simedu/course.hpp"
#include "simedu/dqn.hpp"
#include "simedu/error.hpp"
#include "simedu/environment.hpp"
#include "simedu/policies.hpp"
#include "simedu/population_model.hpp"

namespace simedu {

enum class ExperimentKind { Baselines, TimeRewardSweep, HiddenInfo, DistShift, Structure };
std::string_view to_string(ExperimentKind kind);
ExperimentKind experiment_from_string(std::string_view name);

/// Settings for pre-training a heuristic's population model, with the
/// heuristic itself as the behaviour policy.
struct PopulationModelConfig {
  std::size_t pretrain_epochs = 10;
  std::size_t pretrain_episodes = 200;
  double eta = 1.0;
};

struct DistShiftConfig {
  std::vector<std::string> train_populations{"Typical", "AD2575"};
  std::vector<std::string> test_populations{"Typical", "AD5050", "AD2575"};
};

/// One JSON document per run; absent keys take the defaults for the
/// experiment kind (see resolve_defaults).
struct ExperimentConfig {
  static constexpr int kSchemaVersion = 1;

  std::string id;
  ExperimentKind kind = ExperimentKind::Baselines;
  std::vector<CourseKind> courses;
  std::vector<StructureKind> structures;
  std::vector<std::string> populations;
  std::vector<Observability> observability;
  std::vector<std::string> policies;
  /// Populations DQN policies are evaluated on; empty means all.
  std::vector<std::string> dqn_populations;
  std::vector<double> k_tau;
  std::size_t episodes = 1000;
  std::uint64_t seed = 42;
  HeuristicConfig heuristic;  // overrides shared by every heuristic policy
  DqnConfig dqn;
  PopulationModelConfig population_model;
  DistShiftConfig dist_shift;
  InterventionCatalog catalog = InterventionCatalog::defaults();
  CourseConstants course_constants;
  bool write_episodes = false;

  /// Throws InvalidConfig.
  void validate() const;
};

/// Parses and fills defaults. Throws InvalidConfig (including unknown keys).
ExperimentConfig parse_experiment_config(std::string_view json_text);
ExperimentConfig load_experiment_config(const std::string& path);
/// Canonical JSON of the fully resolved config.
std::string resolved_config_json(const ExperimentConfig& config);
/// FNV-1a of resolved_config_json, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// Policy names beyond the heuristics: "DQN" (no probing), "DQN-Probe",
/// "DQN-All".
bool is_dqn_name(std::string_view name);
ActionSpaceKind dqn_action_space(std::string_view name);

struct ResultRow {
  std::string experiment;
  std::string course;
  std::string structure;
  std::string population;
  std::string observability;
  std::string policy;
  std::string population_model;
  double k_tau = 0.0;
  double test_reward_mean = 0.0;
  double test_reward_std = 0.0;
  double pass_rate = 0.0;
  std::size_t episodes = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

struct CellStats {
  std::vector<double> rewards;  // index order
  std::vector<std::uint8_t> passed;
  std::string episodes_jsonl;
  double mean() const;
  double stddev() const;  // population std
  double pass_rate() const;
};

/// Seed of episode i in a cell. Depends on the course, structure, population
/// and index only, so every policy meets the same students.
std::uint64_t episode_seed(std::uint64_t root, std::string_view cell_key, std::size_t index);

CellStats evaluate_policy(const Policy& policy, const Course& course, const PopulationSpec& population,
                          Observability observability, const BeliefModel* belief, const EnvironmentOptions& env,
                          std::uint64_t root, std::string_view cell_key, std::size_t episodes, unsigned jobs,
                          bool keep_logs = false);

struct PopulationTraining {
  const Course* course = nullptr;
  const PopulationSpec* population = nullptr;
  Observability observability = Observability::Unobserved;
  const Policy* behaviour = nullptr;
  EnvironmentOptions env;
  std::uint64_t seed = 42;
  unsigned jobs = 1;
};

/// Runs `epochs` rounds: sample P_T, run episodes in parallel, then merge the
/// soft counts in index order and update the priors on one thread.
DirichletTable train_population_model(const PopulationTraining& setup, const PopulationModelConfig& config);

struct NamedCurve {
  std::string tag;
  std::vector<EpochMetrics> metrics;
};

struct RunArtifacts {
  std::vector<ResultRow> rows;
  std::vector<NamedCurve> curves;
  std::vector<std::pair<std::string, Checkpoint>> checkpoints;
  std::vector<std::pair<std::string, DirichletTable>> population_models;
  std::string episodes_jsonl;
};

struct RunControl {
  unsigned jobs = 1;
  std::function<void(const std::string&)> progress;
  /// Policies supplied from outside (e.g. a loaded checkpoint), by name.
  std::map<std::string, const Policy*> external_policies;
  /// Population model for every hidden-observability cell, overriding
  /// pre-training.
  const DirichletTable* external_population_model = nullptr;
};

/// Runs every cell of the experiment. On failure the rows finished so far are
/// attached to the thrown RunFailure.
RunArtifacts run_experiment(const ExperimentConfig& config, const RunControl& control);

/// Four-concept structures x {Random, SSTutorLimit, DQN}, probing disabled.
RunArtifacts structure_suite(const ExperimentConfig& config, const RunControl& control);

class RunFailure : public std::runtime_error {
 public:
  RunFailure(const Error& cause, RunArtifacts partial);
  ErrorCode code() const noexcept { return code_; }
  const RunArtifacts& partial() const noexcept { return partial_; }

 private:
  ErrorCode code_;
  RunArtifacts partial_;
};

std::string results_csv(const std::vector<ResultRow>& rows);
/// Throws InvalidConfig on malformed input, EmptyRows on no data rows.
std::vector<ResultRow> parse_results_csv(std::string_view text);

std::string format_reward(double reward);   // 4 decimals
std::string format_percent(double rate);    // one decimal and '%'
/// Fixed-width text table. Throws EmptyRows.
std::string report(const std::vector<ResultRow>& rows);

/// results.csv, resolved_config.json, curves, checkpoints, population models
/// and (when requested) episodes.jsonl. Creates the directory.
void write_outputs(const RunArtifacts& artifacts, const ExperimentConfig& config, const std::string& directory);

}  // namespace simedu
