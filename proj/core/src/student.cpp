#include "simedu/student.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "simedu/error.hpp"

namespace simedu {

namespace {

constexpr double kPriorTolerance = 1e-9;

template <std::size_t N>
std::size_t draw_categorical(const std::array<double, N>& probs, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding slack: fall back to the last category with mass.
  for (std::size_t i = N; i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return N - 1;
}

template <std::size_t N>
void check_categorical(const std::array<double, N>& probs, const std::string& what) {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw Error(ErrorCode::InvalidSpec, what + " has a negative entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kPriorTolerance) {
    throw Error(ErrorCode::InvalidSpec, what + " sums to " + std::to_string(sum));
  }
}

PopulationComponent a_students() {
  PopulationComponent c;
  c.prereq_prior = {0.0, 0.0, 0.0, 1.0};
  c.trajectory_prior = {0.0, 0.0, 1.0, 0.0, 0.0};
  return c;
}

PopulationComponent d_students() {
  PopulationComponent c;
  c.prereq_prior = {1.0, 0.0, 0.0, 0.0};
  c.trajectory_prior = {1.0, 0.0, 0.0, 0.0, 0.0};
  return c;
}

}  // namespace

std::string_view to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::StableLow: return "StableLow";
    case TrajectoryKind::StableMid: return "StableMid";
    case TrajectoryKind::StableHigh: return "StableHigh";
    case TrajectoryKind::Upward: return "Upward";
    case TrajectoryKind::Downward: return "Downward";
  }
  return "?";
}

TrajectoryKind trajectory_from_string(std::string_view name) {
  for (auto kind : kAllTrajectories) {
    if (to_string(kind) == name) return kind;
  }
  throw Error(ErrorCode::InvalidSpec, "unknown trajectory '" + std::string(name) + "'");
}

int trajectory_level(TrajectoryKind kind, std::size_t step, std::size_t num_steps) {
  const std::size_t switch_step = (num_steps + 1) / 2;
  const bool late = step >= switch_step;
  switch (kind) {
    case TrajectoryKind::StableLow: return 1;
    case TrajectoryKind::StableMid: return 2;
    case TrajectoryKind::StableHigh: return 4;
    case TrajectoryKind::Upward: return late ? 3 : 2;
    case TrajectoryKind::Downward: return late ? 2 : 3;
  }
  return 0;
}

std::string StudentType::key() const {
  std::string out(to_string(trajectory));
  if (!prereq_buckets.empty()) {
    out += '|';
    for (std::size_t i = 0; i < prereq_buckets.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(prereq_buckets[i]);
    }
  }
  return out;
}

int motivation_level(const Student& student, std::size_t step, std::size_t num_steps) {
  int level = trajectory_level(student.trajectory.kind, step, num_steps);
  if (student.study_skills_used) ++level;
  if (student.nudge_steps_remaining > 0) ++level;
  return std::clamp(level, 0, kMotivationLevels - 1);
}

double motivation_at(const Student& student, std::size_t step, std::size_t num_steps) {
  double value = static_cast<double>(motivation_level(student, step, num_steps)) /
                 static_cast<double>(kMotivationLevels - 1);
  if (student.trajectory.noise_sigma > 0.0) {
    Rng rng(derive_seed(student.noise_seed, static_cast<std::uint64_t>(step)));
    value += std::normal_distribution<double>(0.0, student.trajectory.noise_sigma)(rng);
  }
  return std::clamp(value, 0.0, 1.0);
}

void validate(const PopulationSpec& spec) {
  if (spec.components.empty()) throw Error(ErrorCode::InvalidSpec, "population has no components");
  double total = 0.0;
  for (std::size_t i = 0; i < spec.components.size(); ++i) {
    const auto& c = spec.components[i];
    if (!(c.weight >= 0.0)) throw Error(ErrorCode::InvalidSpec, "negative component weight");
    total += c.weight;
    check_categorical(c.prereq_prior, "component " + std::to_string(i) + " prereq prior");
    check_categorical(c.trajectory_prior, "component " + std::to_string(i) + " trajectory prior");
  }
  if (std::abs(total - 1.0) > kPriorTolerance) {
    throw Error(ErrorCode::InvalidSpec, "component weights sum to " + std::to_string(total));
  }
  if (!(spec.noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidSpec, "negative noise sigma");
  if (!(spec.course_baseline >= 0.0 && spec.course_baseline <= 1.0)) {
    throw Error(ErrorCode::InvalidSpec, "course baseline outside [0,1]");
  }
  if (!(spec.time_budget > 0.0)) throw Error(ErrorCode::InvalidSpec, "time budget must be positive");
}

PopulationSpec population_preset(std::string_view name) {
  PopulationSpec spec;
  spec.name = std::string(name);
  if (name == "Typical") {
    PopulationComponent c;
    c.prereq_prior = {0.10, 0.10, 0.60, 0.20};
    c.trajectory_prior = {0.10, 0.15, 0.35, 0.20, 0.20};
    spec.components = {c};
  } else if (name == "AStudents") {
    spec.components = {a_students()};
  } else if (name == "DStudents") {
    spec.components = {d_students()};
  } else if (name == "AD5050") {
    auto a = a_students();
    auto d = d_students();
    a.weight = 0.5;
    d.weight = 0.5;
    spec.components = {a, d};
  } else if (name == "AD2575") {
    auto a = a_students();
    auto d = d_students();
    a.weight = 0.25;
    d.weight = 0.75;
    spec.components = {a, d};
  } else {
    throw Error(ErrorCode::InvalidSpec, "unknown population preset '" + std::string(name) + "'");
  }
  return spec;
}

std::vector<std::string> population_preset_names() {
  return {"Typical", "AStudents", "DStudents", "AD5050", "AD2575"};
}

Student sample_student(const PopulationSpec& spec, const ConceptGraph& graph,
                       std::span<const std::size_t> prerequisites, Rng& rng) {
  validate(spec);
  std::size_t component = 0;
  {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    component = spec.components.size() - 1;
    for (std::size_t i = 0; i < spec.components.size(); ++i) {
      acc += spec.components[i].weight;
      if (u < acc) {
        component = i;
        break;
      }
    }
  }
  const auto& comp = spec.components[component];

  Student s;
  s.mastery.assign(graph.size(), spec.course_baseline);
  s.time_budget_per_step = spec.time_budget;
  for (std::size_t prereq : prerequisites) {
    const auto bucket = draw_categorical(comp.prereq_prior, rng);
    const double lo = kBucketEdges[bucket];
    const double hi = kBucketEdges[bucket + 1];
    double value = std::uniform_real_distribution<double>(lo, hi)(rng);
    // Keep samples inside the half-open bucket so quantize() recovers it.
    if (bucket + 1 < kBuckets) value = std::min(value, std::nextafter(hi, lo));
    s.mastery.at(prereq) = value;
    s.type.prereq_buckets.push_back(static_cast<int>(bucket));
  }
  const auto traj = kAllTrajectories[draw_categorical(comp.trajectory_prior, rng)];
  s.trajectory = Trajectory{traj, spec.noise_sigma};
  s.type.trajectory = traj;
  s.noise_seed = rng();
  return s;
}

}  // namespace simedu
