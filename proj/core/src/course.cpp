#include "simedu/course.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "simedu/error.hpp"

namespace simedu {

namespace {

constexpr double kNormalizationTolerance = 1e-9;
// Normalized grades are ratios of floating sums; 0.4*0.75/0.4 is not 0.75.
constexpr double kPassSlack = 1e-12;

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view name, const std::array<std::string_view, N>& names, const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == name) return static_cast<Enum>(i);
  }
  throw Error(ErrorCode::InvalidConfig, std::string("unknown ") + what + " '" + std::string(name) + "'");
}

constexpr std::array<std::string_view, 3> kCourseNames{"BasicOneConcept", "PrereqOneConcept", "FourConcept"};
constexpr std::array<std::string_view, 4> kStructureNames{"FinalsOnly", "MidtermFinal", "Quizzes",
                                                          "QuizzesPlusDiagnostics"};
constexpr std::array<std::string_view, 4> kExamNames{"Quiz", "Midterm", "Final", "Diagnostic"};

ExamPlan exam(std::string label, ExamKind kind, std::vector<std::size_t> concepts, int questions) {
  return ExamPlan{std::move(label), kind, std::move(concepts), questions, 0.0};
}

void one_concept_schedule(Course& course, std::size_t concept_index, const CourseConstants& k) {
  course.steps.assign(10, StepPlan{});
  for (std::size_t n = 0; n < 9; ++n) course.steps[n].lectures = {concept_index};
  course.steps[9].exam = exam("F", ExamKind::Final, {concept_index}, k.final_questions);
}

void four_concept_schedule(Course& course, const CourseConstants& k) {
  const auto& g = course.graph;
  const std::size_t pr1 = g.index("PR1"), pr2 = g.index("PR2"), ca = g.index("CA"), cb = g.index("CB"),
                    cc = g.index("CC"), cd = g.index("CD");
  auto& s = course.steps;
  s.assign(16, StepPlan{});
  s[0].lectures = s[1].lectures = {pr1, pr2};
  for (std::size_t n : {2, 3, 4, 5}) s[n].lectures = {ca};
  for (std::size_t n : {6, 7, 8}) s[n].lectures = {cb};
  for (std::size_t n : {9, 10, 11}) s[n].lectures = {cc};
  for (std::size_t n : {12, 13, 14}) s[n].lectures = {cd};

  const bool quizzes =
      course.structure == StructureKind::Quizzes || course.structure == StructureKind::QuizzesPlusDiagnostics;
  switch (course.structure) {
    case StructureKind::FinalsOnly:
      s[15].exam = exam("F", ExamKind::Final, {pr1, pr2, ca, cb, cc, cd}, k.final_questions);
      break;
    case StructureKind::MidtermFinal:
    case StructureKind::Quizzes:
    case StructureKind::QuizzesPlusDiagnostics:
      s[5].exam = exam("M", ExamKind::Midterm, {pr1, pr2, ca}, k.midterm_questions);
      s[15].exam = exam("F", ExamKind::Final, {cb, cc, cd}, k.final_questions);
      break;
  }
  if (quizzes) {
    s[1].exam = exam("Q1", ExamKind::Quiz, {pr1, pr2}, k.quiz_questions);
    s[11].exam = exam("Q2", ExamKind::Quiz, {cb, cc}, k.quiz_questions);
  }
  if (course.structure == StructureKind::QuizzesPlusDiagnostics) {
    s[0].exam = exam("D0", ExamKind::Diagnostic, {pr1, pr2}, k.diagnostic_questions);
    s[3].exam = exam("D1", ExamKind::Diagnostic, {ca}, k.diagnostic_questions);
    s[7].exam = exam("D2", ExamKind::Diagnostic, {cb}, k.diagnostic_questions);
    s[10].exam = exam("D3", ExamKind::Diagnostic, {cc}, k.diagnostic_questions);
    s[13].exam = exam("D4", ExamKind::Diagnostic, {cd}, k.diagnostic_questions);
  }
}

std::vector<double> default_split(const Course& course) {
  if (course.kind != CourseKind::FourConcept) return {1.0};
  switch (course.structure) {
    case StructureKind::FinalsOnly: return {1.0};
    case StructureKind::MidtermFinal: return {0.4, 0.6};
    case StructureKind::Quizzes:
    case StructureKind::QuizzesPlusDiagnostics: return {0.1, 0.3, 0.1, 0.5};
  }
  return {1.0};
}

}  // namespace

std::string_view to_string(CourseKind kind) { return kCourseNames[static_cast<std::size_t>(kind)]; }
std::string_view to_string(StructureKind kind) { return kStructureNames[static_cast<std::size_t>(kind)]; }
std::string_view to_string(ExamKind kind) { return kExamNames[static_cast<std::size_t>(kind)]; }
CourseKind course_kind_from_string(std::string_view name) {
  return parse_enum<CourseKind>(name, kCourseNames, "course kind");
}
StructureKind structure_from_string(std::string_view name) {
  return parse_enum<StructureKind>(name, kStructureNames, "structure");
}

bool Course::has_graded_exam(std::size_t step) const {
  return step < steps.size() && steps[step].exam && steps[step].exam->grade_weight > 0.0;
}

bool Course::eligible(std::size_t concept_index, std::size_t step) const {
  if (std::find(prerequisites.begin(), prerequisites.end(), concept_index) != prerequisites.end()) return true;
  for (std::size_t n = 0; n <= step && n < steps.size(); ++n) {
    const auto& l = steps[n].lectures;
    if (std::find(l.begin(), l.end(), concept_index) != l.end()) return true;
  }
  return false;
}

std::vector<std::size_t> Course::eligible_concepts(std::size_t step) const {
  std::vector<std::size_t> out;
  for (std::size_t c : order) {
    if (eligible(c, step)) out.push_back(c);
  }
  return out;
}

double Course::total_grade_weight() const {
  double sum = 0.0;
  for (const auto& s : steps) {
    if (s.exam) sum += s.exam->grade_weight;
  }
  return sum;
}

Course build_course(CourseKind kind, StructureKind structure, const CourseConstants& k) {
  if (kind != CourseKind::FourConcept && structure != StructureKind::FinalsOnly) {
    throw Error(ErrorCode::InvalidStructure,
                std::string(to_string(structure)) + " applies to the four-concept course only");
  }
  Course course;
  course.kind = kind;
  course.structure = structure;
  course.name = std::string(to_string(kind));
  if (kind == CourseKind::FourConcept) course.name += "/" + std::string(to_string(structure));
  course.k_tau = k.k_tau;
  course.k_pass = k.k_pass;
  course.g_pass = k.g_pass;

  switch (kind) {
    case CourseKind::BasicOneConcept:
      course.graph = ConceptGraph({"CA"}, {});
      course.lecture_minutes = 90.0;
      break;
    case CourseKind::PrereqOneConcept: {
      const double w = k.edge_weight > 0.0 ? k.edge_weight : 0.5;
      course.graph = ConceptGraph({"PR1", "CA"}, {{"PR1", "CA", w}});
      course.prerequisites = {0};
      course.lecture_minutes = 90.0;
      break;
    }
    case CourseKind::FourConcept: {
      const double w = k.edge_weight > 0.0 ? k.edge_weight : 0.3;
      course.graph = ConceptGraph({"PR1", "PR2", "CA", "CB", "CC", "CD"}, {{"PR1", "CA", w},
                                                                         {"PR2", "CA", w},
                                                                         {"CA", "CB", w},
                                                                         {"CA", "CC", w},
                                                                         {"CB", "CD", w},
                                                                         {"CC", "CD", w}});
      course.prerequisites = {0, 1};
      course.lecture_minutes = 90.0;
      break;
    }
  }
  if (k.lecture_minutes > 0.0) course.lecture_minutes = k.lecture_minutes;
  validate(course.graph);
  course.order = topological_indices(course.graph);

  if (kind == CourseKind::FourConcept) {
    four_concept_schedule(course, k);
  } else {
    one_concept_schedule(course, course.graph.index("CA"), k);
  }

  const auto split = k.grade_split.empty() ? default_split(course) : k.grade_split;
  std::vector<ExamPlan*> graded;
  for (auto& s : course.steps) {
    if (s.exam && s.exam->kind != ExamKind::Diagnostic) graded.push_back(&*s.exam);
  }
  if (split.size() != graded.size()) {
    throw Error(ErrorCode::WeightNormalization, "grade split has " + std::to_string(split.size()) +
                                                    " entries for " + std::to_string(graded.size()) + " graded exams");
  }
  for (std::size_t i = 0; i < graded.size(); ++i) graded[i]->grade_weight = k.grade_mass * split[i];
  validate(course);
  return course;
}

void validate(const Course& course) {
  validate(course.graph);
  if (course.steps.empty()) throw Error(ErrorCode::InvalidStructure, "course has no steps");
  const double total = course.total_grade_weight() + course.k_pass;
  if (std::abs(total - 1.0) > kNormalizationTolerance) {
    throw Error(ErrorCode::WeightNormalization, "sum K_g + K_pass = " + std::to_string(total));
  }
  if (!(course.g_pass >= 0.0 && course.g_pass <= 1.0)) throw Error(ErrorCode::InvalidStructure, "G_pass outside [0,1]");
  if (!(course.k_tau >= 0.0)) throw Error(ErrorCode::InvalidStructure, "K_tau must be >= 0");
  for (const auto& s : course.steps) {
    for (std::size_t c : s.lectures) {
      if (c >= course.graph.size()) throw Error(ErrorCode::UnknownConcept, "lecture concept index");
    }
    if (s.exam) {
      for (std::size_t c : s.exam->concepts) {
        if (c >= course.graph.size()) throw Error(ErrorCode::UnknownConcept, "exam concept index");
      }
      if (s.exam->concepts.empty() || s.exam->questions_per_concept <= 0) {
        throw Error(ErrorCode::InvalidStructure, "exam " + s.exam->label + " tests nothing");
      }
    }
  }
}

ExamResult grade_exam(const Course& course, const Student& student, std::size_t step, Rng& rng) {
  if (step >= course.steps.size() || !course.steps[step].exam) {
    throw Error(ErrorCode::NoExamAtStep, "step " + std::to_string(step));
  }
  const auto& plan = *course.steps[step].exam;
  const auto effective = combined_mastery(course.graph, course.order, student.mastery);
  ExamResult result;
  std::size_t correct = 0;
  std::size_t total = 0;
  for (std::size_t c : plan.concepts) {
    auto rec = sample_feedback(c, effective[c], plan.questions_per_concept, rng, InterventionType::Exam);
    for (auto b : rec.samples) correct += b;
    total += rec.samples.size();
    result.feedback.push_back(std::move(rec));
  }
  result.grade = static_cast<double>(correct) / static_cast<double>(total);
  return result;
}

double normalized_grade(const std::vector<GradeEntry>& grades) {
  double weighted = 0.0;
  double weights = 0.0;
  for (const auto& g : grades) {
    weighted += g.weight * g.grade;
    weights += g.weight;
  }
  return weights > 0.0 ? weighted / weights : 0.0;
}

double step_reward(const Course& course, std::size_t step, std::optional<double> grade, double tau_remaining,
                   double time_budget, const std::vector<GradeEntry>& grades_so_far) {
  double reward = course.k_tau * (tau_remaining / time_budget);
  if (grade && step < course.steps.size() && course.steps[step].exam) {
    reward += course.steps[step].exam->grade_weight * *grade;
  }
  if (step + 1 == course.num_steps() && normalized_grade(grades_so_far) >= course.g_pass - kPassSlack) {
    reward += course.k_pass;
  }
  return reward;
}

EpisodeOutcome episode_outcome(const Course& course, const EpisodeLog& log) {
  if (log.steps.empty() || !log.complete) throw Error(ErrorCode::IncompleteEpisode, "episode has not terminated");
  EpisodeOutcome out;
  std::vector<GradeEntry> grades;
  for (const auto& s : log.steps) {
    out.test_reward += s.reward;
    if (s.grade && s.grade_weight > 0.0) grades.push_back({s.grade_weight, *s.grade});
  }
  out.final_grade = normalized_grade(grades);
  out.passed = out.final_grade >= course.g_pass - kPassSlack;
  return out;
}

}  // namespace simedu
