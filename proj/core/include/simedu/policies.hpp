#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "simedu/environment.hpp"

namespace simedu {

enum class HeuristicKind {
  NoIntervention,
  TutorOnly,
  Random,
  TutorLimit,
  SSTutor,
  SSTutorLimit,
  ProbeTutorLimit,
  ProbeSSTutorLimit,
  OracleSSTutorLimit,
};

std::string_view to_string(HeuristicKind kind);
/// Accepts "SSProbeTutorLimit" as an alias of ProbeSSTutorLimit.
HeuristicKind heuristic_from_string(std::string_view name);
bool is_heuristic_name(std::string_view name);
std::vector<std::string> heuristic_names();

struct HeuristicConfig {
  HeuristicKind kind = HeuristicKind::TutorLimit;
  double tutor_limit = 0.85;
  double probe_confidence_threshold = 0.6;
  /// Motivation below this reads as "not at the top level".
  double motivation_threshold = 0.875;
  bool use_limit = true;
  bool tutor = true;
  bool study_skills = false;
  bool nudge = false;
  bool probe = false;
  bool oracle_probe = false;
  int max_probes_per_step = 2;
  int nudge_budget = 2;

  /// Flags implied by the policy name.
  static HeuristicConfig preset(HeuristicKind kind);
  /// Throws InvalidConfig, e.g. tutor_limit <= g_pass.
  void validate(double g_pass) const;
};

/// Estimated effective mastery: exact when observed, otherwise the belief's
/// expected bucket midpoint. Throws MissingBelief.
double estimated_mastery(const Observation& obs, const BeliefState* belief, std::size_t concept_index);
/// 1 when observed, otherwise the belief's largest bucket probability.
double estimate_confidence(const Observation& obs, const BeliefState* belief, std::size_t concept_index);

/// Rule cascade: probe, study skills, nudge, tutor, end turn. Pure in
/// (config, obs, belief); `rng` is only drawn by Random.
Action decide(const HeuristicConfig& config, const Observation& obs, const BeliefState* belief, Rng& rng,
              const InterventionCatalog& catalog = InterventionCatalog::defaults());

/// Uniform over the affordable intervention kinds the config enables, then
/// uniform over eligible concepts for concept-targeted kinds.
Action random_action(const HeuristicConfig& config, const Observation& obs, const InterventionCatalog& catalog,
                     Rng& rng);

class HeuristicPolicy final : public Policy {
 public:
  explicit HeuristicPolicy(HeuristicConfig config, InterventionCatalog catalog = InterventionCatalog::defaults());
  std::string name() const override { return std::string(to_string(config_.kind)); }
  Action decide(const Observation& obs, const BeliefState* belief, Rng& rng) const override;
  const HeuristicConfig& config() const noexcept { return config_; }

 private:
  HeuristicConfig config_;
  InterventionCatalog catalog_;
};

std::unique_ptr<Policy> make_heuristic(std::string_view name);

}  // namespace simedu
