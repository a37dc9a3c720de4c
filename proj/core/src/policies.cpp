#include "simedu/policies.hpp"

#include <array>
#include <limits>

#include "simedu/error.hpp"

namespace simedu {

namespace {

constexpr std::array<std::string_view, 9> kHeuristicNames{
    "NoIntervention", "TutorOnly",       "Random",          "TutorLimit",         "SSTutor",
    "SSTutorLimit",   "ProbeTutorLimit", "ProbeSSTutorLimit", "OracleSSTutorLimit"};

bool can_pay(const Observation& obs, const InterventionCatalog& catalog, InterventionType t) {
  return catalog[t].cost_minutes <= obs.tau_remaining;
}

bool motivation_low(const HeuristicConfig& config, const Observation& obs) {
  return !obs.motivation || *obs.motivation < config.motivation_threshold;
}

}  // namespace

std::string_view to_string(HeuristicKind kind) { return kHeuristicNames[static_cast<std::size_t>(kind)]; }

HeuristicKind heuristic_from_string(std::string_view name) {
  if (name == "SSProbeTutorLimit") return HeuristicKind::ProbeSSTutorLimit;
  for (std::size_t i = 0; i < kHeuristicNames.size(); ++i) {
    if (kHeuristicNames[i] == name) return static_cast<HeuristicKind>(i);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown policy '" + std::string(name) + "'");
}

bool is_heuristic_name(std::string_view name) {
  if (name == "SSProbeTutorLimit") return true;
  for (auto n : kHeuristicNames) {
    if (n == name) return true;
  }
  return false;
}

std::vector<std::string> heuristic_names() { return {kHeuristicNames.begin(), kHeuristicNames.end()}; }

HeuristicConfig HeuristicConfig::preset(HeuristicKind kind) {
  HeuristicConfig c;
  c.kind = kind;
  switch (kind) {
    case HeuristicKind::NoIntervention:
      c.tutor = false;
      break;
    case HeuristicKind::TutorOnly:
      c.use_limit = false;
      break;
    case HeuristicKind::Random:
      c.study_skills = true;
      c.nudge = true;
      break;
    case HeuristicKind::TutorLimit:
      break;
    case HeuristicKind::SSTutor:
      c.use_limit = false;
      c.study_skills = true;
      break;
    case HeuristicKind::SSTutorLimit:
      c.study_skills = true;
      break;
    case HeuristicKind::ProbeTutorLimit:
      c.probe = true;
      break;
    case HeuristicKind::ProbeSSTutorLimit:
      c.probe = true;
      c.study_skills = true;
      break;
    case HeuristicKind::OracleSSTutorLimit:
      c.oracle_probe = true;
      c.study_skills = true;
      break;
  }
  return c;
}

void HeuristicConfig::validate(double g_pass) const {
  if (use_limit && tutor && !(tutor_limit > g_pass)) {
    throw Error(ErrorCode::InvalidConfig, "tutor_limit must exceed the pass threshold");
  }
  if (!(tutor_limit <= 1.0)) throw Error(ErrorCode::InvalidConfig, "tutor_limit must be <= 1");
  if (!(probe_confidence_threshold >= 0.0 && probe_confidence_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "probe_confidence_threshold outside [0,1]");
  }
  if (max_probes_per_step < 0 || nudge_budget < 0) throw Error(ErrorCode::InvalidConfig, "negative action budget");
}

double estimated_mastery(const Observation& obs, const BeliefState* belief, std::size_t concept_index) {
  if (obs.mastery) return obs.mastery->at(concept_index);
  if (!belief) throw Error(ErrorCode::MissingBelief, "masteries are hidden and no belief is attached");
  return belief->expected_mastery(concept_index);
}

double estimate_confidence(const Observation& obs, const BeliefState* belief, std::size_t concept_index) {
  if (obs.mastery) return 1.0;
  if (!belief) throw Error(ErrorCode::MissingBelief, "masteries are hidden and no belief is attached");
  return belief->confidence(concept_index);
}

Action random_action(const HeuristicConfig& config, const Observation& obs, const InterventionCatalog& catalog,
                     Rng& rng) {
  // Uniform over intervention kinds first, then over the kind's concepts.
  std::vector<InterventionType> kinds{InterventionType::EndTurn};
  const bool has_concepts = !obs.eligible.empty();
  auto offer = [&](bool enabled, InterventionType t) {
    if (enabled && can_pay(obs, catalog, t)) kinds.push_back(t);
  };
  offer(config.tutor && has_concepts, InterventionType::Tutor);
  offer(config.probe && has_concepts, InterventionType::Probe);
  offer(config.oracle_probe && has_concepts, InterventionType::OracleProbe);
  offer(config.study_skills && !obs.study_skills_used, InterventionType::StudySkills);
  offer(config.nudge, InterventionType::Nudge);

  const auto kind = kinds[std::uniform_int_distribution<std::size_t>(0, kinds.size() - 1)(rng)];
  if (kind == InterventionType::Tutor || kind == InterventionType::Probe || kind == InterventionType::OracleProbe) {
    const auto c = obs.eligible[std::uniform_int_distribution<std::size_t>(0, obs.eligible.size() - 1)(rng)];
    return Action::on(kind, c);
  }
  return Action::plain(kind);
}

Action decide(const HeuristicConfig& config, const Observation& obs, const BeliefState* belief, Rng& rng,
              const InterventionCatalog& catalog) {
  if (config.kind == HeuristicKind::NoIntervention) return Action::end_turn();
  if (config.kind == HeuristicKind::Random) return random_action(config, obs, catalog, rng);
  if (!obs.mastery && !belief) throw Error(ErrorCode::MissingBelief, "masteries are hidden and no belief is attached");

  const bool uses_extras = config.kind != HeuristicKind::TutorOnly;

  if (uses_extras && (config.probe || config.oracle_probe) && obs.probes_this_step < config.max_probes_per_step) {
    const auto kind = config.oracle_probe ? InterventionType::OracleProbe : InterventionType::Probe;
    if (can_pay(obs, catalog, kind)) {
      std::optional<std::size_t> target;
      double lowest = config.probe_confidence_threshold;
      for (std::size_t c : obs.eligible) {
        const double conf = estimate_confidence(obs, belief, c);
        if (conf < lowest) {
          lowest = conf;
          target = c;
        }
      }
      if (target) return Action::on(kind, *target);
    }
  }

  if (uses_extras && config.study_skills && !obs.study_skills_used && motivation_low(config, obs) &&
      can_pay(obs, catalog, InterventionType::StudySkills)) {
    return Action::plain(InterventionType::StudySkills);
  }

  if (uses_extras && config.nudge && obs.graded_exam_this_step && !obs.nudge_active &&
      obs.nudges_used < config.nudge_budget && motivation_low(config, obs) &&
      can_pay(obs, catalog, InterventionType::Nudge)) {
    return Action::plain(InterventionType::Nudge);
  }

  if (config.tutor && can_pay(obs, catalog, InterventionType::Tutor)) {
    if (config.use_limit) {
      for (std::size_t c : obs.eligible) {
        if (estimated_mastery(obs, belief, c) < config.tutor_limit) return Action::on(InterventionType::Tutor, c);
      }
    } else if (!obs.eligible.empty()) {
      std::size_t target = obs.eligible.front();
      double lowest = std::numeric_limits<double>::infinity();
      for (std::size_t c : obs.eligible) {
        const double est = estimated_mastery(obs, belief, c);
        if (est < lowest) {
          lowest = est;
          target = c;
        }
      }
      return Action::on(InterventionType::Tutor, target);
    }
  }
  return Action::end_turn();
}

HeuristicPolicy::HeuristicPolicy(HeuristicConfig config, InterventionCatalog catalog)
    : config_(config), catalog_(std::move(catalog)) {}

Action HeuristicPolicy::decide(const Observation& obs, const BeliefState* belief, Rng& rng) const {
  return simedu::decide(config_, obs, belief, rng, catalog_);
}

std::unique_ptr<Policy> make_heuristic(std::string_view name) {
  return std::make_unique<HeuristicPolicy>(HeuristicConfig::preset(heuristic_from_string(name)));
}

}  // namespace simedu
