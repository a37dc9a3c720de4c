#include "simedu/environment.hpp"

#include <array>

#include <json.hpp>

#include "simedu/error.hpp"

namespace simedu {

namespace {

constexpr std::array<std::string_view, 3> kObservabilityNames{"FullyObserved", "ConceptHidden", "Unobserved"};

}  // namespace

std::string_view to_string(Observability obs) { return kObservabilityNames[static_cast<std::size_t>(obs)]; }

Observability observability_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kObservabilityNames.size(); ++i) {
    if (kObservabilityNames[i] == name) return static_cast<Observability>(i);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown observability '" + std::string(name) + "'");
}

std::string describe(const Action& action) {
  std::string out(to_string(action.type));
  if (action.concept_index) out += "(" + std::to_string(*action.concept_index) + ")";
  return out;
}

Environment::Environment(const Course& course, const PopulationSpec& population, Observability observability,
                         EnvironmentOptions options)
    : course_(&course), population_(population), observability_(observability), options_(std::move(options)) {
  validate(population_);
  options_.catalog.validate();
}

std::pair<Observation, StudentType> Environment::reset(std::uint64_t seed) {
  Rng student_rng(derive_seed(seed, "student"));
  student_ = sample_student(population_, course_->graph, course_->prerequisites, student_rng);
  action_rng_ = Rng(derive_seed(seed, "actions"));
  exam_seed_ = derive_seed(seed, "exams");
  step_ = 0;
  nudges_used_ = 0;
  grades_.clear();
  log_ = EpisodeLog{seed, student_.type.key(), {}, false};
  done_ = false;

  std::vector<FeedbackRecord> feedback;
  open_step(feedback);
  return {observe(std::move(feedback)), student_.type};
}

void Environment::open_step(std::vector<FeedbackRecord>& feedback) {
  const auto& plan = course_->steps[step_];
  probes_this_step_ = 0;
  current_ = StepRecord{};
  current_.step = step_;
  current_.time_budget = student_.time_budget_per_step;
  tau_ = student_.time_budget_per_step;
  if (plan.exam) {
    const double exam_cost = options_.catalog[InterventionType::Exam].cost_minutes;
    tau_ -= exam_cost;
    current_.minutes_spent += exam_cost;
    current_.actions.push_back({InterventionType::Exam, std::nullopt, exam_cost});
  }
  if (!plan.lectures.empty()) {
    const double m = motivation_at(student_, step_, course_->num_steps());
    apply_learning(student_.mastery, plan.lectures, options_.catalog[InterventionType::Lecture], m,
                   course_->lecture_minutes);
    for (std::size_t c : plan.lectures) {
      FeedbackRecord rec;
      rec.concept_index = c;
      rec.source = InterventionType::Lecture;
      feedback.push_back(std::move(rec));
      current_.actions.push_back({InterventionType::Lecture, c, 0.0});
    }
  }
}

double Environment::close_step(std::vector<FeedbackRecord>& feedback) {
  const auto& plan = course_->steps[step_];
  std::optional<double> grade;
  if (plan.exam) {
    Rng exam_rng(derive_seed(exam_seed_, static_cast<std::uint64_t>(step_)));
    auto result = grade_exam(*course_, student_, step_, exam_rng);
    grade = result.grade;
    if (plan.exam->grade_weight > 0.0) grades_.push_back({plan.exam->grade_weight, result.grade});
    for (auto& rec : result.feedback) feedback.push_back(std::move(rec));
  }
  const double reward =
      step_reward(*course_, step_, grade, tau_, student_.time_budget_per_step, grades_);

  current_.tau_remaining = tau_;
  current_.grade = grade;
  current_.grade_weight = plan.exam ? plan.exam->grade_weight : 0.0;
  current_.reward = reward;
  current_.motivation = motivation_at(student_, step_, course_->num_steps());
  current_.effective_mastery = combined_mastery(course_->graph, course_->order, student_.mastery);
  log_.steps.push_back(std::move(current_));

  if (student_.nudge_steps_remaining > 0) --student_.nudge_steps_remaining;
  ++step_;
  if (step_ == course_->num_steps()) {
    done_ = true;
    log_.complete = true;
  } else {
    open_step(feedback);
  }
  return reward;
}

void Environment::require_active() const {
  if (done_) throw Error(ErrorCode::IllegalAction, "episode is not active");
}

bool Environment::legal(const Action& action) const {
  if (done_) return false;
  switch (action.type) {
    case InterventionType::EndTurn:
      return !action.concept_index;
    case InterventionType::Tutor:
    case InterventionType::Probe:
    case InterventionType::OracleProbe:
      return action.concept_index && *action.concept_index < course_->graph.size() &&
             course_->eligible(*action.concept_index, step_);
    case InterventionType::StudySkills:
      return !action.concept_index && !student_.study_skills_used;
    case InterventionType::Nudge:
      return !action.concept_index;
    default:
      return false;  // lectures and exams are scheduled, never chosen
  }
}

double Environment::cost(const Action& action) const { return options_.catalog[action.type].cost_minutes; }

bool Environment::affordable(const Action& action) const { return cost(action) <= tau_; }

StepResult Environment::step(const Action& action) {
  require_active();
  if (!legal(action)) throw Error(ErrorCode::IllegalAction, describe(action) + " at step " + std::to_string(step_));

  std::vector<FeedbackRecord> feedback;
  StepResult result;
  if (action.type == InterventionType::EndTurn || !affordable(action)) {
    result.signal = action.type == InterventionType::EndTurn ? StepSignal::StepClosed : StepSignal::BudgetExhausted;
    result.reward = close_step(feedback);
    result.done = done_;
    if (done_ && result.signal == StepSignal::StepClosed) result.signal = StepSignal::Done;
    result.observation = observe(std::move(feedback));
    return result;
  }

  const double c = cost(action);
  tau_ -= c;
  current_.minutes_spent += c;
  current_.actions.push_back({action.type, action.concept_index, c});
  const auto& spec = options_.catalog[action.type];

  switch (action.type) {
    case InterventionType::Tutor: {
      const std::size_t target = *action.concept_index;
      const std::array<std::size_t, 1> concepts{target};
      const double m = motivation_at(student_, step_, course_->num_steps());
      apply_learning(student_.mastery, concepts, spec, m, c);
      if (spec.feedback_samples > 0) {
        const auto effective = combined_mastery(course_->graph, course_->order, student_.mastery);
        feedback.push_back(
            sample_feedback(target, effective[target], spec.feedback_samples, action_rng_, InterventionType::Tutor));
      } else {
        FeedbackRecord rec;
        rec.concept_index = target;
        rec.source = InterventionType::Tutor;
        feedback.push_back(std::move(rec));
      }
      break;
    }
    case InterventionType::Probe:
    case InterventionType::OracleProbe:
      feedback.push_back(probe(student_, course_->graph, course_->order, course_->graph.id(*action.concept_index),
                               action.type, options_.catalog, action_rng_));
      ++probes_this_step_;
      break;
    case InterventionType::StudySkills:
      apply_motivation(student_, action.type, options_.catalog);
      break;
    case InterventionType::Nudge:
      apply_motivation(student_, action.type, options_.catalog);
      ++nudges_used_;
      break;
    default:
      break;
  }
  result.observation = observe(std::move(feedback));
  return result;
}

Observation Environment::observe(std::vector<FeedbackRecord> feedback) const {
  Observation obs;
  obs.num_steps = course_->num_steps();
  obs.num_concepts = course_->graph.size();
  obs.feedback = std::move(feedback);
  obs.study_skills_used = student_.study_skills_used;
  obs.nudge_active = student_.nudge_steps_remaining > 0;
  obs.nudges_used = nudges_used_;
  if (done_) {
    obs.step = course_->num_steps();
    return obs;
  }
  obs.step = step_;
  obs.tau_remaining = tau_;
  obs.time_budget = student_.time_budget_per_step;
  obs.exam_this_step = course_->steps[step_].exam.has_value();
  obs.graded_exam_this_step = course_->has_graded_exam(step_);
  obs.probes_this_step = probes_this_step_;
  obs.eligible = course_->eligible_concepts(step_);
  if (observability_ != Observability::Unobserved) {
    obs.motivation = motivation_at(student_, step_, course_->num_steps());
  }
  if (observability_ == Observability::FullyObserved) {
    obs.mastery = combined_mastery(course_->graph, course_->order, student_.mastery);
  }
  return obs;
}

EpisodeResult run_episode(const Policy& policy, const Course& course, const PopulationSpec& population,
                          Observability observability, std::uint64_t seed, const RunOptions& options) {
  Environment env(course, population, observability, options.env);
  auto [obs, type] = env.reset(seed);
  Rng policy_rng(derive_seed(seed, "policy"));

  std::optional<BeliefTracker> tracker;
  if (observability != Observability::FullyObserved || policy.wants_belief()) {
    if (!options.belief || !options.belief->table || !options.belief->sample) {
      throw Error(ErrorCode::MissingBelief, "policy '" + policy.name() + "' needs a population model");
    }
    tracker.emplace(*options.belief->table, *options.belief->sample, options.belief->emission, type,
                    options.collect_counts);
  }

  while (!env.done()) {
    if (tracker) {
      for (const auto& rec : obs.feedback) tracker->observe(rec);
    }
    const Action action = policy.decide(obs, tracker ? &tracker->belief() : nullptr, policy_rng);
    obs = env.step(action).observation;
  }
  if (tracker) {
    for (const auto& rec : obs.feedback) tracker->observe(rec);
  }

  EpisodeResult result;
  result.log = env.log();
  result.outcome = episode_outcome(course, result.log);
  if (tracker) result.counts = tracker->counts();
  return result;
}

std::string episode_jsonl(const EpisodeLog& log, const Course& course) {
  std::string out;
  for (const auto& s : log.steps) {
    nlohmann::ordered_json j;
    j["seed"] = log.seed;
    j["student_type"] = log.student_type;
    j["step"] = s.step;
    auto actions = nlohmann::ordered_json::array();
    for (const auto& a : s.actions) {
      nlohmann::ordered_json aj;
      aj["type"] = to_string(a.type);
      aj["concept"] = a.concept_index ? nlohmann::ordered_json(course.graph.id(*a.concept_index)) : nullptr;
      aj["cost"] = a.cost;
      actions.push_back(std::move(aj));
    }
    j["actions"] = std::move(actions);
    j["minutes_spent"] = s.minutes_spent;
    j["tau_remaining"] = s.tau_remaining;
    j["time_budget"] = s.time_budget;
    j["grade"] = s.grade ? nlohmann::ordered_json(*s.grade) : nullptr;
    j["grade_weight"] = s.grade_weight;
    j["reward"] = s.reward;
    j["motivation"] = s.motivation;
    nlohmann::ordered_json mastery;
    for (std::size_t c = 0; c < s.effective_mastery.size(); ++c) mastery[course.graph.id(c)] = s.effective_mastery[c];
    j["effective_mastery"] = std::move(mastery);
    j["complete"] = log.complete;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace simedu
