#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "simedu/concept_graph.hpp"
#include "simedu/random.hpp"

namespace simedu {

constexpr int kMotivationLevels = 5;
constexpr std::size_t kBuckets = 4;

/// Mastery bucket edges; the top bucket is closed on the right.
constexpr std::array<double, kBuckets + 1> kBucketEdges{0.0, 0.55, 0.75, 0.85, 1.0};

enum class TrajectoryKind { StableLow, StableMid, StableHigh, Upward, Downward };
constexpr std::size_t kTrajectoryKinds = 5;
constexpr std::array<TrajectoryKind, kTrajectoryKinds> kAllTrajectories{
    TrajectoryKind::StableLow, TrajectoryKind::StableMid, TrajectoryKind::StableHigh,
    TrajectoryKind::Upward, TrajectoryKind::Downward};

std::string_view to_string(TrajectoryKind kind);
TrajectoryKind trajectory_from_string(std::string_view name);

struct Trajectory {
  TrajectoryKind kind = TrajectoryKind::StableMid;
  double noise_sigma = 0.05;
};

/// Level (0..M-1) before interventions and noise. Upward and Downward change
/// by one level at step ceil(N/2).
int trajectory_level(TrajectoryKind kind, std::size_t step, std::size_t num_steps);

struct StudentType {
  std::vector<int> prereq_buckets;
  TrajectoryKind trajectory = TrajectoryKind::StableMid;

  /// Stable key used by the population model, e.g. "StableLow|0,2".
  std::string key() const;
  bool operator==(const StudentType&) const = default;
};

struct Student {
  std::vector<double> mastery;  // raw C, indexed like the concept graph
  Trajectory trajectory;
  StudentType type;
  bool study_skills_used = false;
  int nudge_steps_remaining = 0;
  double time_budget_per_step = 600.0;
  std::uint64_t noise_seed = 0;
};

/// Level after study-skills and nudge offsets, saturating at the top level.
int motivation_level(const Student& student, std::size_t step, std::size_t num_steps);

/// level/(M-1) plus Gaussian noise, clamped to [0,1]. The noise for step n is
/// drawn from a stream derived from (noise_seed, n), so it is reproducible.
double motivation_at(const Student& student, std::size_t step, std::size_t num_steps);

struct PopulationComponent {
  double weight = 1.0;
  std::array<double, kBuckets> prereq_prior{0.25, 0.25, 0.25, 0.25};
  std::array<double, kTrajectoryKinds> trajectory_prior{0.2, 0.2, 0.2, 0.2, 0.2};
};

/// A mixture of sub-populations. Each component carries a bucket prior that
/// applies independently to every prerequisite and a trajectory prior.
struct PopulationSpec {
  std::string name;
  std::vector<PopulationComponent> components;
  double noise_sigma = 0.05;
  double course_baseline = 0.05;
  double time_budget = 600.0;
};

/// Throws InvalidSpec on non-normalized priors or bad weights.
void validate(const PopulationSpec& spec);

/// Typical, AStudents, DStudents, AD5050, AD2575. Throws InvalidSpec.
PopulationSpec population_preset(std::string_view name);
std::vector<std::string> population_preset_names();

/// Draws a student. Prerequisite masteries are uniform within the sampled
/// bucket; every other concept starts at spec.course_baseline.
Student sample_student(const PopulationSpec& spec, const ConceptGraph& graph,
                       std::span<const std::size_t> prerequisites, Rng& rng);

}  // namespace simedu
