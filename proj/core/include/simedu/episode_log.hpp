#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "simedu/intervention.hpp"

namespace simedu {

struct ActionRecord {
  InterventionType type = InterventionType::EndTurn;
  std::optional<std::size_t> concept_index;
  double cost = 0.0;
};

/// One closed time-step. Masteries are the effective values at step close,
/// kept for analysis only; nothing on the agent side reads the log.
struct StepRecord {
  std::size_t step = 0;
  std::vector<ActionRecord> actions;
  double minutes_spent = 0.0;
  double tau_remaining = 0.0;
  double time_budget = 0.0;
  std::optional<double> grade;
  double grade_weight = 0.0;
  double reward = 0.0;
  double motivation = 0.0;
  std::vector<double> effective_mastery;
};

struct EpisodeLog {
  std::uint64_t seed = 0;
  std::string student_type;
  std::vector<StepRecord> steps;
  bool complete = false;
};

}  // namespace simedu
