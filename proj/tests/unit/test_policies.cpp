#include <gtest/gtest.h>

#include <set>

#include "simedu/environment.hpp"
#include "simedu/policies.hpp"
#include "test_util.hpp"

using namespace simedu;

namespace {

Observation one_concept_obs() {
  Observation obs;
  obs.step = 2;
  obs.num_steps = 10;
  obs.num_concepts = 1;
  obs.tau_remaining = 600;
  obs.time_budget = 600;
  obs.eligible = {0};
  return obs;
}

BeliefState belief_of(std::vector<BucketVector> b) { return BeliefState{std::move(b)}; }

}  // namespace

TEST(Heuristic, NoInterventionAlwaysEndsTurn) {
  const auto p = make_heuristic("NoIntervention");
  auto obs = one_concept_obs();
  obs.mastery = std::vector<double>{0.1};
  Rng rng(1);
  EXPECT_EQ(p->decide(obs, nullptr, rng), Action::end_turn());
}

TEST(Heuristic, TutorLimitTutorsBelowLimit) {
  const auto p = make_heuristic("TutorLimit");
  auto obs = one_concept_obs();
  obs.mastery = std::vector<double>{0.80};
  obs.motivation = 0.5;
  Rng rng(1);
  EXPECT_EQ(p->decide(obs, nullptr, rng), Action::on(InterventionType::Tutor, 0));
  obs.mastery = std::vector<double>{0.86};
  EXPECT_EQ(p->decide(obs, nullptr, rng), Action::end_turn());
  obs.mastery = std::vector<double>{0.5};
  obs.tau_remaining = 30;
  EXPECT_EQ(p->decide(obs, nullptr, rng), Action::end_turn());
}

TEST(Heuristic, ConfidentHighEstimateEndsTurn) {
  const auto p = make_heuristic("ProbeSSTutorLimit");
  auto obs = one_concept_obs();
  obs.study_skills_used = true;
  const auto belief = belief_of({BucketVector{0.0, 0.0, 0.1, 0.9}});
  Rng rng(1);
  EXPECT_EQ(p->decide(obs, &belief, rng), Action::end_turn());
}

TEST(Heuristic, CascadeOrder) {
  const auto p = make_heuristic("ProbeSSTutorLimit");
  auto obs = one_concept_obs();
  const auto unsure = belief_of({BucketVector{0.25, 0.25, 0.25, 0.25}});
  Rng rng(1);
  EXPECT_EQ(p->decide(obs, &unsure, rng), Action::on(InterventionType::Probe, 0));
  obs.probes_this_step = 2;
  EXPECT_EQ(p->decide(obs, &unsure, rng), Action::plain(InterventionType::StudySkills));
  obs.study_skills_used = true;
  EXPECT_EQ(p->decide(obs, &unsure, rng), Action::on(InterventionType::Tutor, 0));

  const auto oracle = make_heuristic("OracleSSTutorLimit");
  obs.probes_this_step = 0;
  EXPECT_EQ(oracle->decide(obs, &unsure, rng), Action::on(InterventionType::OracleProbe, 0));
}

TEST(Heuristic, TutorLimitPicksFirstTopologicalConceptBelowLimit) {
  const auto p = make_heuristic("TutorLimit");
  Observation obs = one_concept_obs();
  obs.num_concepts = 3;
  obs.eligible = {0, 1, 2};
  obs.mastery = std::vector<double>{0.9, 0.6, 0.2};
  Rng rng(1);
  EXPECT_EQ(p->decide(obs, nullptr, rng), Action::on(InterventionType::Tutor, 1));
  const auto tutor_only = make_heuristic("TutorOnly");
  obs.mastery = std::vector<double>{0.9, 0.6, 0.2};
  EXPECT_EQ(tutor_only->decide(obs, nullptr, rng), Action::on(InterventionType::Tutor, 2));
}

TEST(Heuristic, HiddenMasteryWithoutBeliefFails) {
  const auto p = make_heuristic("TutorLimit");
  auto obs = one_concept_obs();
  Rng rng(1);
  EXPECT_CODE(p->decide(obs, nullptr, rng), ErrorCode::MissingBelief);
}

TEST(Heuristic, PropertiesOverRandomInputs) {
  Rng gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& name : heuristic_names()) {
    if (name == "Random") continue;
    const auto p = make_heuristic(name);
    const auto preset = HeuristicConfig::preset(heuristic_from_string(name));
    for (int i = 0; i < 300; ++i) {
      Observation obs = one_concept_obs();
      obs.num_concepts = 3;
      obs.eligible = {0, 1, 2};
      obs.tau_remaining = 600 * u(gen);
      obs.study_skills_used = u(gen) < 0.5;
      obs.graded_exam_this_step = u(gen) < 0.3;
      std::vector<BucketVector> b(3);
      for (auto& v : b) {
        double s = 0.0;
        for (double& x : v) s += x = u(gen);
        for (double& x : v) x /= s;
      }
      const auto belief = belief_of(b);
      Rng r1(1), r2(1);
      const auto a = p->decide(obs, &belief, r1);
      EXPECT_EQ(a, p->decide(obs, &belief, r2)) << name;
      if (!preset.probe && !preset.oracle_probe) {
        EXPECT_NE(a.type, InterventionType::Probe) << name;
        EXPECT_NE(a.type, InterventionType::OracleProbe) << name;
      }
      if (preset.use_limit && a.type == InterventionType::Tutor) {
        EXPECT_LT(estimated_mastery(obs, &belief, *a.concept_index), preset.tutor_limit) << name;
      }
    }
  }
}

TEST(Heuristic, FullyObservedTutorLimitStopsAtLimitOrBudget) {
  const auto course = build_course(CourseKind::FourConcept, StructureKind::Quizzes);
  const auto p = make_heuristic("TutorLimit");
  const double tutor_cost = InterventionCatalog::defaults()[InterventionType::Tutor].cost_minutes;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto r = run_episode(*p, course, population_preset("DStudents"), Observability::FullyObserved, seed);
    ASSERT_TRUE(r.log.complete);
    for (const auto& s : r.log.steps) {
      bool all_above = true;
      for (std::size_t c : course.eligible_concepts(s.step)) all_above = all_above && s.effective_mastery[c] >= 0.85;
      EXPECT_TRUE(all_above || s.tau_remaining < tutor_cost) << "seed " << seed << " step " << s.step;
    }
  }
}

TEST(Heuristic, RandomRespectsDisabledKinds) {
  auto cfg = HeuristicConfig::preset(HeuristicKind::Random);
  EXPECT_FALSE(cfg.probe);
  EXPECT_FALSE(cfg.oracle_probe);
  auto obs = one_concept_obs();
  Rng rng(3);
  std::set<InterventionType> seen;
  for (int i = 0; i < 2000; ++i) seen.insert(random_action(cfg, obs, InterventionCatalog::defaults(), rng).type);
  EXPECT_FALSE(seen.count(InterventionType::Probe));
  EXPECT_FALSE(seen.count(InterventionType::OracleProbe));
  EXPECT_TRUE(seen.count(InterventionType::Tutor));
  EXPECT_TRUE(seen.count(InterventionType::EndTurn));
}

TEST(Heuristic, NamesAndValidation) {
  EXPECT_EQ(heuristic_from_string("SSProbeTutorLimit"), HeuristicKind::ProbeSSTutorLimit);
  EXPECT_CODE(heuristic_from_string("Psychic"), ErrorCode::InvalidConfig);
  auto cfg = HeuristicConfig::preset(HeuristicKind::TutorLimit);
  cfg.tutor_limit = 0.7;
  EXPECT_CODE(cfg.validate(0.75), ErrorCode::InvalidConfig);
}
