#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "simedu/course.hpp"
#include "simedu/intervention.hpp"
#include "simedu/random.hpp"
#include "simedu/student.hpp"

namespace simedu {

enum class ActionClass { Lecture, Tutor, NoAction };
constexpr std::size_t kActionClasses = 3;
std::string_view to_string(ActionClass cls);
ActionClass action_class_from_string(std::string_view name);
ActionClass action_class_of(InterventionType type);

/// Observation alphabet: quantized fraction-correct symbols 0..3 plus a
/// "no observation" symbol that turns a filter step into a pure prediction.
constexpr std::size_t kNoObservation = kBuckets;

using BucketVector = std::array<double, kBuckets>;
using BucketMatrix = std::array<BucketVector, kBuckets>;

/// Midpoints of the mastery buckets, used to turn a belief into a point estimate.
constexpr BucketVector kBucketMidpoints{0.275, 0.65, 0.8, 0.925};

/// Throws OutOfRange outside [0,1].
std::size_t quantize(double mastery);

struct EmissionModel {
  BucketMatrix p{};  // p[k][o]: probability of symbol o in bucket k

  /// 0.7 on the diagonal, 0.15 to each neighbour (0.3 at the edges).
  static EmissionModel defaults();
  void validate() const;
  double operator()(std::size_t bucket, std::size_t symbol) const {
    return symbol == kNoObservation ? 1.0 : p[bucket][symbol];
  }
};

/// Dirichlet parameters keyed by student-type key. Initial-state parameters
/// are kept per concept; transition parameters per action class.
struct DirichletTable {
  double eta = 1.0;
  std::vector<ConceptId> concepts;
  std::map<std::string, std::vector<BucketVector>> init;
  std::map<std::string, std::array<BucketMatrix, kActionClasses>> transition;

  void validate() const;
  bool operator==(const DirichletTable&) const = default;
};

/// Expert prior covering every student type the course can produce.
DirichletTable make_prior_table(const Course& course, double course_baseline = 0.05);

/// One P_T row-stochastic matrix, each row drawn from Dirichlet(phi row).
/// Throws UnknownKey.
BucketMatrix sample_transition(const DirichletTable& table, const std::string& key, ActionClass cls, Rng& rng);

/// All transition matrices for one epoch.
struct TransitionSample {
  std::map<std::string, std::array<BucketMatrix, kActionClasses>> matrices;
};
TransitionSample sample_transitions(const DirichletTable& table, Rng& rng);
/// Dirichlet means, for deterministic evaluation without sampling noise.
TransitionSample mean_transitions(const DirichletTable& table);

/// Forward filter step for any K:
///   post(k) = sum_i prior(i) T(i,k) E(k) / normalizer.
/// `transition` is row-major K*K and `emission` holds E(k) for the observed
/// symbol. When `two_slice` is non-empty (K*K) it receives
/// prior(i) T(i,k) E(k) / normalizer. Throws DegenerateNormalizer.
std::vector<double> filter_update(std::span<const double> prior, std::span<const double> transition,
                                  std::span<const double> emission, std::span<double> two_slice = {});

BucketVector filter_update(const BucketVector& prior, const BucketMatrix& transition, const EmissionModel& emission,
                           std::size_t symbol, BucketMatrix* two_slice = nullptr);

struct ObservedSymbol {
  std::size_t symbol = kNoObservation;
  bool exact = false;  // oracle reading: set the belief directly
};

/// Realistic feedback: quantize(fraction correct). Oracle: quantize(value),
/// flagged exact. Throws EmptyFeedback.
ObservedSymbol observe_feedback(const FeedbackRecord& record);

struct BeliefState {
  std::vector<BucketVector> buckets;  // one categorical per concept

  double confidence(std::size_t concept_index) const;
  double expected_mastery(std::size_t concept_index) const;
  void validate() const;
};

struct SoftCounts {
  std::map<std::string, std::array<BucketMatrix, kActionClasses>> transition;
  std::map<std::string, std::vector<BucketVector>> init;

  void merge(const SoftCounts& other);
  void add_transition(const std::string& key, ActionClass cls, const BucketMatrix& counts);
  bool empty() const { return transition.empty() && init.empty(); }
};

/// phi += eta * counts. Pure; counts must be non-negative (InvalidSpec).
DirichletTable update_priors(const DirichletTable& table, const SoftCounts& counts);

/// Per-episode knowledge tracer bound to one student type.
class BeliefTracker {
 public:
  BeliefTracker(const DirichletTable& table, const TransitionSample& sample, const EmissionModel& emission,
                const StudentType& type, bool collect_counts);

  /// Lecture records predict, tutor records predict and observe, probes and
  /// exams observe through the no-action transition, oracle records set the
  /// concept's belief to a point mass.
  void observe(const FeedbackRecord& record);
  const BeliefState& belief() const noexcept { return belief_; }
  const SoftCounts& counts() const noexcept { return counts_; }

 private:
  const std::array<BucketMatrix, kActionClasses>* matrices_ = nullptr;
  const EmissionModel* emission_ = nullptr;
  std::string key_;
  BeliefState belief_;
  std::vector<bool> seen_;
  bool collect_ = false;
  SoftCounts counts_;
};

std::string serialize_table(const DirichletTable& table);
DirichletTable parse_table(std::string_view text);
void save_table(const DirichletTable& table, const std::string& path);
DirichletTable load_table(const std::string& path);

}  // namespace simedu
