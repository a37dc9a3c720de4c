#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "simedu/concept_graph.hpp"
#include "simedu/episode_log.hpp"
#include "simedu/intervention.hpp"
#include "simedu/random.hpp"
#include "simedu/student.hpp"

namespace simedu {

enum class CourseKind { BasicOneConcept, PrereqOneConcept, FourConcept };
enum class StructureKind { FinalsOnly, MidtermFinal, Quizzes, QuizzesPlusDiagnostics };
enum class ExamKind { Quiz, Midterm, Final, Diagnostic };

std::string_view to_string(CourseKind kind);
std::string_view to_string(StructureKind kind);
std::string_view to_string(ExamKind kind);
CourseKind course_kind_from_string(std::string_view name);
StructureKind structure_from_string(std::string_view name);

struct ExamPlan {
  std::string label;
  ExamKind kind = ExamKind::Final;
  std::vector<std::size_t> concepts;
  int questions_per_concept = 0;
  double grade_weight = 0.0;
};

struct StepPlan {
  std::vector<std::size_t> lectures;
  std::optional<ExamPlan> exam;
};

/// Tunable constants for build_course(). Zero/empty fields take the
/// per-course defaults.
struct CourseConstants {
  double k_tau = 0.02;
  double k_pass = 0.6;
  double g_pass = 0.75;
  double grade_mass = 0.4;
  std::vector<double> grade_split;  // one entry per graded exam, sums to 1
  double edge_weight = 0.0;         // 0 = course default
  double lecture_minutes = 0.0;     // 0 = course default
  int final_questions = 50;
  int midterm_questions = 50;
  int quiz_questions = 20;
  int diagnostic_questions = 10;
};

struct GradeEntry {
  double weight = 0.0;
  double grade = 0.0;
};

class Course {
 public:
  std::string name;
  CourseKind kind = CourseKind::BasicOneConcept;
  StructureKind structure = StructureKind::FinalsOnly;
  ConceptGraph graph;
  std::vector<std::size_t> order;          // topological
  std::vector<std::size_t> prerequisites;  // concepts students arrive with
  std::vector<StepPlan> steps;
  double k_tau = 0.02;
  double k_pass = 0.6;
  double g_pass = 0.75;
  double lecture_minutes = 90.0;

  std::size_t num_steps() const noexcept { return steps.size(); }
  bool has_graded_exam(std::size_t step) const;
  /// Prerequisites are always eligible; course concepts once first lectured.
  bool eligible(std::size_t concept_index, std::size_t step) const;
  std::vector<std::size_t> eligible_concepts(std::size_t step) const;
  double total_grade_weight() const;
};

/// Throws InvalidStructure or WeightNormalization.
Course build_course(CourseKind kind, StructureKind structure, const CourseConstants& constants = {});

/// Checks the graph plus sum K_g + K_pass = 1. Throws on violation.
void validate(const Course& course);

struct ExamResult {
  double grade = 0.0;
  std::vector<FeedbackRecord> feedback;
};

/// g_n is the fraction correct over all questions of the step's exam.
/// Throws NoExamAtStep.
ExamResult grade_exam(const Course& course, const Student& student, std::size_t step, Rng& rng);

/// Normalized grade sum(K g) / sum(K); 0 when nothing graded yet.
double normalized_grade(const std::vector<GradeEntry>& grades);

/// R_n. `grades_so_far` includes this step's grade when there is one; the
/// pass bonus is added on the last step only.
double step_reward(const Course& course, std::size_t step, std::optional<double> grade, double tau_remaining,
                   double time_budget, const std::vector<GradeEntry>& grades_so_far);

struct EpisodeOutcome {
  double test_reward = 0.0;
  bool passed = false;
  double final_grade = 0.0;
};

/// Throws IncompleteEpisode.
EpisodeOutcome episode_outcome(const Course& course, const EpisodeLog& log);

}  // namespace simedu
