#include <benchmark/benchmark.h>

#include "simedu/dqn.hpp"
#include "simedu/environment.hpp"
#include "simedu/policies.hpp"
#include "simedu/population_model.hpp"

using namespace simedu;

static void BM_FilterUpdate(benchmark::State& state) {
  const auto emission = EmissionModel::defaults();
  BucketMatrix t{};
  for (std::size_t i = 0; i < kBuckets; ++i) {
    for (std::size_t j = 0; j < kBuckets; ++j) t[i][j] = i == j ? 0.7 : 0.1;
  }
  BucketVector belief{0.25, 0.25, 0.25, 0.25};
  std::size_t symbol = 0;
  for (auto _ : state) {
    belief = filter_update(belief, t, emission, symbol);
    symbol = (symbol + 1) % kBuckets;
    benchmark::DoNotOptimize(belief);
  }
}
BENCHMARK(BM_FilterUpdate);

static void BM_Forward(benchmark::State& state) {
  Rng rng(1);
  QNetwork net({state_size(4), 64, 64, ActionSpace(ActionSpaceKind::NoProbe, 4).size()});
  net.initialize(rng);
  const Eigen::VectorXd x = Eigen::VectorXd::Random(static_cast<Eigen::Index>(net.input_size()));
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_Forward);

static void BM_TrainStep(benchmark::State& state) {
  Rng rng(2);
  const std::size_t in = state_size(4);
  const std::size_t out = ActionSpace(ActionSpaceKind::NoProbe, 4).size();
  QNetwork net({in, 64, 64, out});
  net.initialize(rng);
  const QNetwork target = net;
  RmsProp opt(1e-4);
  std::vector<Transition> data(64);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i].state = Eigen::VectorXd::Random(static_cast<Eigen::Index>(in));
    data[i].next_state = Eigen::VectorXd::Random(static_cast<Eigen::Index>(in));
    data[i].action = i % out;
    data[i].reward = 0.01 * static_cast<double>(i);
    data[i].next_mask.assign(out, 1);
  }
  std::vector<const Transition*> batch;
  for (const auto& t : data) batch.push_back(&t);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(net, target, batch, 0.99, opt));
}
BENCHMARK(BM_TrainStep);

static void BM_EpisodeFourConcept(benchmark::State& state) {
  const auto course = build_course(CourseKind::FourConcept, StructureKind::Quizzes);
  const auto pop = population_preset("AD5050");
  const auto policy = make_heuristic("SSTutorLimit");
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_episode(*policy, course, pop, Observability::FullyObserved, ++seed));
  }
}
BENCHMARK(BM_EpisodeFourConcept);

static void BM_EpisodeUnobservedTracked(benchmark::State& state) {
  const auto course = build_course(CourseKind::BasicOneConcept, StructureKind::FinalsOnly);
  const auto pop = population_preset("Typical");
  const auto policy = make_heuristic("ProbeSSTutorLimit");
  const auto table = make_prior_table(course);
  const auto sample = mean_transitions(table);
  const BeliefModel model{&table, &sample, EmissionModel::defaults()};
  RunOptions options;
  options.belief = &model;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_episode(*policy, course, pop, Observability::Unobserved, ++seed, options));
  }
}
BENCHMARK(BM_EpisodeUnobservedTracked);
BENCHMARK_MAIN();
