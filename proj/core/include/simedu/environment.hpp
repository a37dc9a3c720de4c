#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "simedu/course.hpp"
#include "simedu/episode_log.hpp"
#include "simedu/intervention.hpp"
#include "simedu/population_model.hpp"
#include "simedu/random.hpp"
#include "simedu/student.hpp"

namespace simedu {

enum class Observability { FullyObserved, ConceptHidden, Unobserved };
std::string_view to_string(Observability obs);
Observability observability_from_string(std::string_view name);

/// What the agent sees. Hidden fields are absent rather than zeroed.
struct Observation {
  std::size_t step = 0;
  std::size_t num_steps = 0;
  std::size_t num_concepts = 0;
  double tau_remaining = 0.0;
  double time_budget = 0.0;
  bool exam_this_step = false;
  bool graded_exam_this_step = false;
  std::vector<FeedbackRecord> feedback;       // produced since the previous observation
  std::optional<double> motivation;           // FullyObserved and ConceptHidden
  std::optional<std::vector<double>> mastery;  // effective C', FullyObserved only
  bool study_skills_used = false;
  bool nudge_active = false;
  int nudges_used = 0;
  int probes_this_step = 0;
  std::vector<std::size_t> eligible;  // topological order
};

struct Action {
  InterventionType type = InterventionType::EndTurn;
  std::optional<std::size_t> concept_index;

  static Action end_turn() { return {}; }
  static Action on(InterventionType type, std::size_t concept_index) { return {type, concept_index}; }
  static Action plain(InterventionType type) { return {type, std::nullopt}; }
  bool operator==(const Action&) const = default;
};

std::string describe(const Action& action);

enum class StepSignal { Continue, StepClosed, BudgetExhausted, Done };

struct StepResult {
  Observation observation;
  double reward = 0.0;  // non-zero only when a step closed
  StepSignal signal = StepSignal::Continue;
  bool done = false;
};

struct EnvironmentOptions {
  InterventionCatalog catalog = InterventionCatalog::defaults();
};

/// One episode at a time. Step n's lectures run when the step opens and its
/// exam (if any) runs when it closes; the exam's minutes are reserved from
/// the step budget up front.
class Environment {
 public:
  Environment(const Course& course, const PopulationSpec& population, Observability observability,
              EnvironmentOptions options = {});

  /// Samples a fresh student. The returned type is the diagnostic label meant
  /// for the population model only.
  std::pair<Observation, StudentType> reset(std::uint64_t seed);

  /// Unaffordable actions return BudgetExhausted and close the step.
  /// Throws IllegalAction for ineligible concepts, reused study skills or
  /// stepping a finished episode.
  StepResult step(const Action& action);

  /// Legal in the current state, ignoring cost.
  bool legal(const Action& action) const;
  bool affordable(const Action& action) const;
  double cost(const Action& action) const;

  bool done() const noexcept { return done_; }
  const Course& course() const noexcept { return *course_; }
  Observability observability() const noexcept { return observability_; }
  const EnvironmentOptions& options() const noexcept { return options_; }
  const EpisodeLog& log() const noexcept { return log_; }
  /// Ground truth, for tests and analysis.
  const Student& student() const noexcept { return student_; }
  const std::vector<GradeEntry>& grades() const noexcept { return grades_; }

 private:
  void open_step(std::vector<FeedbackRecord>& feedback);
  double close_step(std::vector<FeedbackRecord>& feedback);
  Observation observe(std::vector<FeedbackRecord> feedback) const;
  void require_active() const;

  const Course* course_;
  PopulationSpec population_;
  Observability observability_;
  EnvironmentOptions options_;

  Student student_;
  Rng action_rng_;
  std::uint64_t exam_seed_ = 0;
  std::size_t step_ = 0;
  double tau_ = 0.0;
  int nudges_used_ = 0;
  int probes_this_step_ = 0;
  bool done_ = true;
  std::vector<GradeEntry> grades_;
  StepRecord current_;
  EpisodeLog log_;
};

/// A policy maps an observation (plus a belief when one is attached) to an
/// action. Implementations must be safe to call concurrently; `rng` is the
/// episode's private policy stream.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual Action decide(const Observation& obs, const BeliefState* belief, Rng& rng) const = 0;
  /// Policies that read beliefs need a tracker even when masteries are visible.
  virtual bool wants_belief() const { return false; }
};

/// Population-model handles for one evaluation phase; read-only.
struct BeliefModel {
  const DirichletTable* table = nullptr;
  const TransitionSample* sample = nullptr;
  EmissionModel emission = EmissionModel::defaults();
};

struct RunOptions {
  EnvironmentOptions env;
  const BeliefModel* belief = nullptr;
  bool collect_counts = false;
};

struct EpisodeResult {
  EpisodeLog log;
  EpisodeOutcome outcome;
  SoftCounts counts;
};

/// Runs one episode to completion. A belief tracker is attached whenever
/// masteries are hidden or the policy asks for one (MissingBelief when no
/// population model is supplied).
EpisodeResult run_episode(const Policy& policy, const Course& course, const PopulationSpec& population,
                          Observability observability, std::uint64_t seed, const RunOptions& options = {});

/// One JSON object per step.
std::string episode_jsonl(const EpisodeLog& log, const Course& course);

}  // namespace simedu
