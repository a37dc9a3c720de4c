#include <gtest/gtest.h>

#include <cmath>

#include "simedu/environment.hpp"
#include "simedu/policies.hpp"
#include "test_util.hpp"

using namespace simedu;

namespace {

const Course& basic() {
  static const Course c = build_course(CourseKind::BasicOneConcept, StructureKind::FinalsOnly);
  return c;
}

const Course& four_quiz() {
  static const Course c = build_course(CourseKind::FourConcept, StructureKind::QuizzesPlusDiagnostics);
  return c;
}

}  // namespace

TEST(Environment, ResetIsDeterministic) {
  Environment a(basic(), population_preset("Typical"), Observability::FullyObserved);
  Environment b(basic(), population_preset("Typical"), Observability::FullyObserved);
  const auto [oa, ta] = a.reset(9);
  const auto [ob, tb] = b.reset(9);
  EXPECT_EQ(ta, tb);
  EXPECT_EQ(a.student().mastery, b.student().mastery);
  EXPECT_EQ(oa.mastery, ob.mastery);
  EXPECT_EQ(oa.motivation, ob.motivation);
}

TEST(Environment, ObservabilityMasksFields) {
  const auto spec = population_preset("Typical");
  Environment full(basic(), spec, Observability::FullyObserved);
  Environment hidden(basic(), spec, Observability::ConceptHidden);
  Environment none(basic(), spec, Observability::Unobserved);
  const auto f = full.reset(1).first;
  ASSERT_TRUE(f.mastery);
  EXPECT_EQ(*f.mastery, combined_mastery(basic().graph, basic().order, full.student().mastery));
  EXPECT_TRUE(f.motivation);
  const auto h = hidden.reset(1).first;
  EXPECT_FALSE(h.mastery);
  EXPECT_TRUE(h.motivation);
  const auto u = none.reset(1).first;
  EXPECT_FALSE(u.mastery);
  EXPECT_FALSE(u.motivation);
}

TEST(Environment, TutorBudgetArithmetic) {
  Environment env(basic(), population_preset("Typical"), Observability::FullyObserved);
  auto obs = env.reset(3).first;
  EXPECT_DOUBLE_EQ(obs.tau_remaining, 600.0);
  const auto r = env.step(Action::on(InterventionType::Tutor, 0));
  EXPECT_DOUBLE_EQ(r.observation.tau_remaining, 540.0);
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_EQ(r.signal, StepSignal::Continue);
}

TEST(Environment, UnaffordableActionClosesStep) {
  EnvironmentOptions opts;
  opts.catalog[InterventionType::Tutor].cost_minutes = 570.0;
  Environment env(basic(), population_preset("Typical"), Observability::FullyObserved, opts);
  env.reset(3);
  ASSERT_EQ(env.step(Action::on(InterventionType::Tutor, 0)).observation.tau_remaining, 30.0);
  const auto r = env.step(Action::on(InterventionType::Tutor, 0));
  EXPECT_EQ(r.signal, StepSignal::BudgetExhausted);
  EXPECT_EQ(r.observation.step, 1u);
  EXPECT_NEAR(r.reward, 0.02 * 30.0 / 600.0, 1e-15);
}

TEST(Environment, IllegalActionsRejected) {
  Environment env(four_quiz(), population_preset("Typical"), Observability::FullyObserved);
  env.reset(1);
  const auto cd = four_quiz().graph.index("CD");
  EXPECT_CODE(env.step(Action::on(InterventionType::Tutor, cd)), ErrorCode::IllegalAction);
  EXPECT_CODE(env.step(Action::plain(InterventionType::Lecture)), ErrorCode::IllegalAction);
  env.step(Action::plain(InterventionType::StudySkills));
  EXPECT_CODE(env.step(Action::plain(InterventionType::StudySkills)), ErrorCode::IllegalAction);
}

TEST(Environment, NoInterventionRewardTrace) {
  Environment env(basic(), population_preset("Typical"), Observability::FullyObserved);
  env.reset(5);
  std::vector<double> rewards;
  while (!env.done()) rewards.push_back(env.step(Action::end_turn()).reward);
  ASSERT_EQ(rewards.size(), 10u);
  for (std::size_t n = 0; n < 9; ++n) EXPECT_NEAR(rewards[n], 0.02, 1e-15);
  const auto& last = env.log().steps.back();
  ASSERT_TRUE(last.grade);
  const bool passed = *last.grade >= 0.75;
  EXPECT_NEAR(rewards[9], 0.02 * 540.0 / 600.0 + 0.4 * *last.grade + (passed ? 0.6 : 0.0), 1e-12);
}

TEST(Environment, InvariantsUnderRandomPlay) {
  const auto policy = make_heuristic("Random");
  for (const Course* course : {&basic(), &four_quiz()}) {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
      const auto result = run_episode(*policy, *course, population_preset("AD5050"), Observability::FullyObserved, seed);
      double sum = 0.0;
      int study_skills = 0;
      for (const auto& s : result.log.steps) {
        double spent = 0.0;
        for (const auto& a : s.actions) {
          spent += a.cost;
          study_skills += a.type == InterventionType::StudySkills;
          EXPECT_NE(a.type, InterventionType::EndTurn);
        }
        EXPECT_EQ(spent + s.tau_remaining, s.time_budget);
        EXPECT_GE(s.tau_remaining, 0.0);
        sum += s.reward;
      }
      EXPECT_LE(study_skills, 1);
      EXPECT_NEAR(sum, result.outcome.test_reward, 1e-12);
      EXPECT_EQ(result.log.steps.size(), course->num_steps());
    }
  }
}

TEST(Environment, EpisodesAreReproducible) {
  const auto policy = make_heuristic("Random");
  const auto a = run_episode(*policy, four_quiz(), population_preset("Typical"), Observability::FullyObserved, 17);
  const auto b = run_episode(*policy, four_quiz(), population_preset("Typical"), Observability::FullyObserved, 17);
  EXPECT_EQ(episode_jsonl(a.log, four_quiz()), episode_jsonl(b.log, four_quiz()));
}

TEST(Environment, CourseDesignSpotChecks) {
  const auto none = make_heuristic("NoIntervention");
  const auto tutor = make_heuristic("TutorOnly");
  EXPECT_TRUE(run_episode(*none, basic(), population_preset("AStudents"), Observability::FullyObserved, 1)
                  .outcome.passed);
  int passes = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    passes += run_episode(*tutor, basic(), population_preset("DStudents"), Observability::FullyObserved, seed)
                  .outcome.passed;
  }
  EXPECT_GE(passes, 9);
}

TEST(Environment, HiddenRunsNeedAPopulationModel) {
  const auto policy = make_heuristic("TutorLimit");
  EXPECT_CODE(run_episode(*policy, basic(), population_preset("Typical"), Observability::Unobserved, 1),
              ErrorCode::MissingBelief);
}

TEST(Environment, ObservabilityNames) {
  for (auto o : {Observability::FullyObserved, Observability::ConceptHidden, Observability::Unobserved}) {
    EXPECT_EQ(observability_from_string(to_string(o)), o);
  }
  EXPECT_CODE(observability_from_string("Partly"), ErrorCode::InvalidConfig);
}
