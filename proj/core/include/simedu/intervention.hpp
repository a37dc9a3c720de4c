#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "simedu/concept_graph.hpp"
#include "simedu/random.hpp"
#include "simedu/student.hpp"

namespace simedu {

enum class InterventionType { Lecture, Exam, Tutor, Probe, OracleProbe, StudySkills, Nudge, EndTurn };
constexpr std::size_t kInterventionTypes = 8;

std::string_view to_string(InterventionType type);
InterventionType intervention_from_string(std::string_view name);

struct InterventionSpec {
  double cost_minutes = 0.0;
  double k_base = 0.0;    // per hour, scaled by motivation
  double c_target = 0.0;
  int feedback_samples = 0;
};

/// Costs, learning constants and feedback counts for every intervention kind.
struct InterventionCatalog {
  std::array<InterventionSpec, kInterventionTypes> specs{};
  int nudge_duration = 2;

  static InterventionCatalog defaults();

  const InterventionSpec& operator[](InterventionType t) const { return specs[static_cast<std::size_t>(t)]; }
  InterventionSpec& operator[](InterventionType t) { return specs[static_cast<std::size_t>(t)]; }

  /// Throws InvalidSpec when a cost, rate or target is out of range.
  void validate() const;
};

struct FeedbackRecord {
  std::size_t concept_index = 0;
  InterventionType source = InterventionType::Probe;
  std::vector<std::uint8_t> samples;  // Bernoulli outcomes, 1 = correct
  std::optional<double> oracle_value;

  double fraction_correct() const;
};

/// Closed-form step of dC/dt = k (C_target - C) with k = k_base * motivation,
/// applied to each targeted raw mastery. Concepts already at or above the
/// target are left unchanged.
void apply_learning(std::span<double> mastery, std::span<const std::size_t> concepts,
                    const InterventionSpec& spec, double motivation, double duration_minutes);

FeedbackRecord sample_feedback(std::size_t concept_index, double effective_mastery, int count, Rng& rng,
                               InterventionType source = InterventionType::Probe);

/// Realistic probe: Bernoulli(C') samples. Oracle probe: exact C', no samples.
/// Never mutates the student. Throws UnknownConcept or IllegalAction.
FeedbackRecord probe(const Student& student, const ConceptGraph& graph, std::span<const std::size_t> order,
                     const ConceptId& concept_id, InterventionType kind, const InterventionCatalog& catalog,
                     Rng& rng);

/// StudySkills: permanent +1 level, once per episode (StudySkillsAlreadyUsed).
/// Nudge: +1 level for catalog.nudge_duration steps, refreshing if active.
void apply_motivation(Student& student, InterventionType kind, const InterventionCatalog& catalog);

}  // namespace simedu
