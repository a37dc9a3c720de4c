#include "simedu/intervention.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <string>

#include "simedu/error.hpp"

namespace simedu {

namespace {
constexpr std::array<std::string_view, kInterventionTypes> kNames{
    "Lecture", "Exam", "Tutor", "Probe", "OracleProbe", "StudySkills", "Nudge", "EndTurn"};
}

std::string_view to_string(InterventionType type) { return kNames[static_cast<std::size_t>(type)]; }

InterventionType intervention_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<InterventionType>(i);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown intervention '" + std::string(name) + "'");
}

InterventionCatalog InterventionCatalog::defaults() {
  InterventionCatalog c;
  c[InterventionType::Lecture] = {90.0, 0.22, 0.95, 0};
  c[InterventionType::Exam] = {60.0, 0.0, 0.0, 0};
  c[InterventionType::Tutor] = {60.0, 0.9, 0.95, 5};
  c[InterventionType::Probe] = {15.0, 0.0, 0.0, 20};
  c[InterventionType::OracleProbe] = {15.0, 0.0, 0.0, 0};
  c[InterventionType::StudySkills] = {45.0, 0.0, 0.0, 0};
  c[InterventionType::Nudge] = {10.0, 0.0, 0.0, 0};
  c[InterventionType::EndTurn] = {0.0, 0.0, 0.0, 0};
  return c;
}

void InterventionCatalog::validate() const {
  for (std::size_t i = 0; i < kInterventionTypes; ++i) {
    const auto& s = specs[i];
    const std::string name(kNames[i]);
    if (!(s.cost_minutes >= 0.0)) throw Error(ErrorCode::InvalidSpec, name + " cost must be >= 0");
    if (!(s.k_base >= 0.0)) throw Error(ErrorCode::InvalidSpec, name + " k_base must be >= 0");
    if (!(s.c_target >= 0.0 && s.c_target <= 1.0)) throw Error(ErrorCode::InvalidSpec, name + " C_target outside [0,1]");
    if (s.feedback_samples < 0) throw Error(ErrorCode::InvalidSpec, name + " feedback count must be >= 0");
  }
  if ((*this)[InterventionType::EndTurn].cost_minutes != 0.0) {
    throw Error(ErrorCode::InvalidSpec, "EndTurn must cost 0");
  }
  if (nudge_duration < 1) throw Error(ErrorCode::InvalidSpec, "nudge duration must be >= 1");
}

double FeedbackRecord::fraction_correct() const {
  if (samples.empty()) return 0.0;
  std::size_t ones = 0;
  for (auto b : samples) ones += b;
  return static_cast<double>(ones) / static_cast<double>(samples.size());
}

void apply_learning(std::span<double> mastery, std::span<const std::size_t> concepts,
                    const InterventionSpec& spec, double motivation, double duration_minutes) {
  const double k_eff = spec.k_base * motivation;
  if (k_eff * duration_minutes <= 0.0) return;
  const double decay = std::exp(-k_eff * duration_minutes / 60.0);
  for (std::size_t c : concepts) {
    double& value = mastery[c];
    if (value >= spec.c_target) continue;
    value = spec.c_target - (spec.c_target - value) * decay;
    assert(value >= 0.0 && value <= 1.0);
  }
}

FeedbackRecord sample_feedback(std::size_t concept_index, double effective_mastery, int count, Rng& rng,
                               InterventionType source) {
  FeedbackRecord rec;
  rec.concept_index = concept_index;
  rec.source = source;
  rec.samples.reserve(static_cast<std::size_t>(std::max(count, 0)));
  std::bernoulli_distribution bern(std::clamp(effective_mastery, 0.0, 1.0));
  for (int i = 0; i < count; ++i) rec.samples.push_back(bern(rng) ? 1 : 0);
  return rec;
}

FeedbackRecord probe(const Student& student, const ConceptGraph& graph, std::span<const std::size_t> order,
                     const ConceptId& concept_id, InterventionType kind, const InterventionCatalog& catalog,
                     Rng& rng) {
  const std::size_t index = graph.index(concept_id);
  const auto effective = combined_mastery(graph, order, student.mastery);
  if (kind == InterventionType::OracleProbe) {
    FeedbackRecord rec;
    rec.concept_index = index;
    rec.source = kind;
    rec.oracle_value = effective[index];
    return rec;
  }
  if (kind != InterventionType::Probe) throw Error(ErrorCode::IllegalAction, "probe() needs Probe or OracleProbe");
  return sample_feedback(index, effective[index], catalog[kind].feedback_samples, rng, kind);
}

void apply_motivation(Student& student, InterventionType kind, const InterventionCatalog& catalog) {
  if (kind == InterventionType::StudySkills) {
    if (student.study_skills_used) {
      throw Error(ErrorCode::StudySkillsAlreadyUsed, "study skills can only be applied once");
    }
    student.study_skills_used = true;
  } else if (kind == InterventionType::Nudge) {
    student.nudge_steps_remaining = catalog.nudge_duration;
  } else {
    throw Error(ErrorCode::IllegalAction, "apply_motivation needs StudySkills or Nudge");
  }
}

}  // namespace simedu
