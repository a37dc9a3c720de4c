#include <gtest/gtest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "simedu/population_model.hpp"
#include "test_util.hpp"

using namespace simedu;

namespace {

DirichletTable single_key_table(const BucketMatrix& phi) {
  DirichletTable t;
  t.concepts = {"CA"};
  t.init["k"] = {BucketVector{1, 1, 1, 1}};
  t.transition["k"] = {phi, phi, phi};
  return t;
}

BucketMatrix filled(double v) {
  BucketMatrix m;
  for (auto& r : m) r.fill(v);
  return m;
}

std::vector<double> random_stochastic(std::size_t rows, std::size_t cols, Rng& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<double> m(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += m[r * cols + c] = u(rng);
    for (std::size_t c = 0; c < cols; ++c) m[r * cols + c] /= s;
  }
  return m;
}

}  // namespace

TEST(Quantize, BucketEdges) {
  EXPECT_EQ(quantize(0.0), 0u);
  EXPECT_EQ(quantize(0.5499), 0u);
  EXPECT_EQ(quantize(0.55), 1u);
  EXPECT_EQ(quantize(0.75), 2u);
  EXPECT_EQ(quantize(0.85), 3u);
  EXPECT_EQ(quantize(1.0), 3u);
  EXPECT_CODE(quantize(1.01), ErrorCode::OutOfRange);
}

TEST(DirichletSampling, LargeConcentrationIsNearlyUniform) {
  const auto t = single_key_table(filled(1e6));
  Rng rng(1);
  const auto m = sample_transition(t, "k", ActionClass::Tutor, rng);
  for (const auto& row : m) {
    for (double v : row) EXPECT_NEAR(v, 0.25, 1e-2);
  }
}

TEST(DirichletSampling, MeanOfFlatDirichletWithinThreeSigma) {
  const auto t = single_key_table(filled(1.0));
  Rng rng(2);
  constexpr int draws = 10000;
  BucketMatrix sum{};
  for (int i = 0; i < draws; ++i) {
    const auto m = sample_transition(t, "k", ActionClass::Lecture, rng);
    for (std::size_t r = 0; r < kBuckets; ++r) {
      double row = 0.0;
      for (std::size_t c = 0; c < kBuckets; ++c) {
        sum[r][c] += m[r][c];
        row += m[r][c];
      }
      ASSERT_NEAR(row, 1.0, 1e-9);
    }
  }
  // Var of one component of Dir(1,1,1,1) is 1*3 / (16*5).
  const double sigma = std::sqrt(3.0 / 80.0 / draws);
  for (const auto& r : sum) {
    for (double v : r) EXPECT_NEAR(v / draws, 0.25, 3 * sigma);
  }
  EXPECT_CODE(sample_transition(t, "missing", ActionClass::Lecture, rng), ErrorCode::UnknownKey);
}

TEST(Filter, NoiselessIdentityChainIsOneHot) {
  const std::vector<double> prior{0.25, 0.25, 0.25, 0.25};
  std::vector<double> id(16, 0.0);
  for (int k = 0; k < 4; ++k) id[k * 5] = 1.0;
  for (std::size_t o = 0; o < 4; ++o) {
    std::vector<double> e(4, 0.0);
    e[o] = 1.0;
    const auto post = filter_update(prior, id, e);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(post[k], k == o ? 1.0 : 0.0);
  }
}

TEST(Filter, UniformStaysUniform) {
  const std::vector<double> prior{0.1, 0.2, 0.3, 0.4};
  const std::vector<double> t(16, 0.25);
  const std::vector<double> e(4, 0.3);
  for (double v : filter_update(prior, t, e)) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Filter, TwoStateMatchesJointEnumeration) {
  const std::vector<double> prior{0.5, 0.5};
  const std::vector<double> t{0.9, 0.1, 0.2, 0.8};
  const std::vector<double> e{0.7, 0.3};
  // Predicted (0.55, 0.45), times emission, normalized.
  const double a = 0.55 * 0.7, b = 0.45 * 0.3;
  const auto post = filter_update(prior, t, e);
  EXPECT_NEAR(post[0], a / (a + b), 1e-15);
  EXPECT_NEAR(post[1], b / (a + b), 1e-15);
  const auto brute = oracle::brute_force_posterior(prior, {t}, {e});
  EXPECT_NEAR(post[0], brute[0], 1e-15);
}

TEST(Filter, IteratedMatchesPathEnumeration) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t len = 1 + trial % 5;
    auto prior = random_stochastic(1, 4, rng);
    std::vector<std::vector<double>> ts, es;
    auto belief = prior;
    for (std::size_t s = 0; s < len; ++s) {
      ts.push_back(random_stochastic(4, 4, rng));
      const auto pe = random_stochastic(4, 4, rng);
      const std::size_t symbol = static_cast<std::size_t>(u(rng) * 4) % 4;
      std::vector<double> e(4);
      for (std::size_t k = 0; k < 4; ++k) e[k] = pe[k * 4 + symbol];
      es.push_back(e);
      belief = filter_update(belief, ts.back(), e);
      double sum = 0.0;
      for (double v : belief) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
    const auto brute = oracle::brute_force_posterior(prior, ts, es);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(belief[k], brute[k], 1e-12);
  }
}

TEST(Filter, TwoSliceMarginalsSumToPosterior) {
  Rng rng(5);
  const auto prior = random_stochastic(1, 4, rng);
  const auto t = random_stochastic(4, 4, rng);
  const std::vector<double> e{0.1, 0.4, 0.2, 0.3};
  std::vector<double> xi(16);
  const auto post = filter_update(prior, t, e, xi);
  double total = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    double col = 0.0;
    for (std::size_t i = 0; i < 4; ++i) col += xi[i * 4 + k];
    EXPECT_NEAR(col, post[k], 1e-15);
    total += col;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Filter, ZeroEvidenceIsDegenerate) {
  const std::vector<double> prior{1, 0, 0, 0};
  std::vector<double> id(16, 0.0);
  for (int k = 0; k < 4; ++k) id[k * 5] = 1.0;
  const std::vector<double> e{0, 1, 1, 1};
  EXPECT_CODE(filter_update(prior, id, e), ErrorCode::DegenerateNormalizer);
}

TEST(Feedback, ObservationSymbols) {
  FeedbackRecord all;
  all.samples.assign(10, 1);
  EXPECT_EQ(observe_feedback(all).symbol, 3u);
  FeedbackRecord oracle_rec;
  oracle_rec.oracle_value = 0.62;
  const auto s = observe_feedback(oracle_rec);
  EXPECT_EQ(s.symbol, 1u);
  EXPECT_TRUE(s.exact);
  EXPECT_CODE(observe_feedback(FeedbackRecord{}), ErrorCode::EmptyFeedback);
}

TEST(Priors, ZeroEtaLeavesTableUnchanged) {
  auto t = single_key_table(filled(2.0));
  t.eta = 0.0;
  SoftCounts c;
  c.add_transition("k", ActionClass::Tutor, filled(3.0));
  EXPECT_EQ(update_priors(t, c), t);
}

TEST(Priors, HardCountAddsOne) {
  const auto t = single_key_table(filled(2.0));
  BucketMatrix hard{};
  hard[2][3] = 1.0;
  SoftCounts c;
  c.add_transition("k", ActionClass::Tutor, hard);
  const auto u = update_priors(t, c);
  const auto& m = u.transition.at("k")[static_cast<std::size_t>(ActionClass::Tutor)];
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(m[i][j], i == 2 && j == 3 ? 3.0 : 2.0);
  }
  SoftCounts negative;
  negative.add_transition("k", ActionClass::Tutor, filled(-1.0));
  EXPECT_CODE(update_priors(t, negative), ErrorCode::InvalidSpec);
  SoftCounts unknown;
  unknown.add_transition("nobody", ActionClass::Tutor, hard);
  EXPECT_CODE(update_priors(t, unknown), ErrorCode::UnknownKey);
}

TEST(Priors, PosteriorMeanMatchesRationalConjugacy) {
  // phi and counts are small dyadic rationals, so the float path is exact.
  Rng rng(6);
  std::uniform_int_distribution<int> num(1, 64);
  for (int trial = 0; trial < 200; ++trial) {
    BucketMatrix phi{}, counts{};
    std::array<std::array<oracle::Rational, 4>, 4> rp, rc;
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        rp[i][j] = oracle::Rational(num(rng), 8);
        rc[i][j] = oracle::Rational(num(rng) - 1, 16);
        phi[i][j] = rp[i][j].value();
        counts[i][j] = rc[i][j].value();
      }
    }
    const auto t = single_key_table(phi);
    SoftCounts c;
    c.add_transition("k", ActionClass::Lecture, counts);
    const auto updated = update_priors(t, c);
    const auto mean = mean_transitions(updated).matrices.at("k")[0];
    for (std::size_t i = 0; i < 4; ++i) {
      oracle::Rational total(0);
      for (std::size_t j = 0; j < 4; ++j) total = total + rp[i][j] + rc[i][j];
      for (std::size_t j = 0; j < 4; ++j) {
        const auto exact = (rp[i][j] + rc[i][j]) / total;
        EXPECT_EQ(updated.transition.at("k")[0][i][j], (rp[i][j] + rc[i][j]).value());
        EXPECT_NEAR(mean[i][j], exact.value(), 1e-15);
      }
    }
  }
}

TEST(Priors, UpdatesCommute) {
  const auto t = single_key_table(filled(1.5));
  SoftCounts a, b;
  a.add_transition("k", ActionClass::Tutor, filled(0.25));
  b.add_transition("k", ActionClass::NoAction, filled(0.5));
  b.add_transition("k", ActionClass::Tutor, filled(0.125));
  EXPECT_EQ(update_priors(update_priors(t, a), b), update_priors(update_priors(t, b), a));
  SoftCounts ab = a;
  ab.merge(b);
  EXPECT_EQ(update_priors(t, ab), update_priors(update_priors(t, a), b));
}

TEST(Tracker, OracleProbesGiveFullConfidence) {
  const auto course = build_course(CourseKind::FourConcept, StructureKind::FinalsOnly);
  const auto table = make_prior_table(course);
  EXPECT_NO_THROW(table.validate());
  const auto sample = mean_transitions(table);
  const auto emission = EmissionModel::defaults();
  StudentType type{{2, 1}, TrajectoryKind::Upward};
  BeliefTracker tracker(table, sample, emission, type, false);
  Rng rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    FeedbackRecord rec;
    rec.concept_index = static_cast<std::size_t>(i % 6);
    rec.source = InterventionType::OracleProbe;
    rec.oracle_value = u(rng);
    tracker.observe(rec);
    EXPECT_EQ(tracker.belief().confidence(rec.concept_index), 1.0);
    EXPECT_EQ(tracker.belief().buckets[rec.concept_index][quantize(*rec.oracle_value)], 1.0);
  }
  StudentType stranger{{9, 9}, TrajectoryKind::Upward};
  EXPECT_CODE(BeliefTracker(table, sample, emission, stranger, false), ErrorCode::UnknownKey);
}

TEST(Tracker, CollectedCountsAreNonNegativeAndMassPreserving) {
  const auto course = build_course(CourseKind::BasicOneConcept, StructureKind::FinalsOnly);
  const auto table = make_prior_table(course);
  const auto sample = mean_transitions(table);
  const auto emission = EmissionModel::defaults();
  BeliefTracker tracker(table, sample, emission, StudentType{{}, TrajectoryKind::StableMid}, true);
  Rng rng(8);
  int updates = 0;
  for (int i = 0; i < 20; ++i) {
    auto rec = sample_feedback(0, 0.3 + 0.03 * i, 5, rng, InterventionType::Tutor);
    tracker.observe(rec);
    ++updates;
  }
  double mass = 0.0;
  for (const auto& [key, mats] : tracker.counts().transition) {
    for (const auto& m : mats) {
      for (const auto& r : m) {
        for (double v : r) {
          EXPECT_GE(v, 0.0);
          mass += v;
        }
      }
    }
  }
  EXPECT_NEAR(mass, updates, 1e-9);
}

TEST(TableIo, RoundTrip) {
  const auto course = build_course(CourseKind::PrereqOneConcept, StructureKind::FinalsOnly);
  auto table = make_prior_table(course);
  table.eta = 0.5;
  EXPECT_EQ(parse_table(serialize_table(table)), table);
  EXPECT_ANY_THROW(parse_table("{\"format\":\"other\"}"));
}
