#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "simedu/environment.hpp"
#include "simedu/population_model.hpp"

namespace simedu {

enum class ActionSpaceKind { NoProbe, Probe, All };
std::string_view to_string(ActionSpaceKind kind);
ActionSpaceKind action_space_from_string(std::string_view name);

/// Discrete action ids: EndTurn, Tutor(c) for every concept, StudySkills,
/// Nudge, then Probe(c) (Probe and All) and OracleProbe(c) (All only).
class ActionSpace {
 public:
  ActionSpace(ActionSpaceKind kind, std::size_t num_concepts);

  ActionSpaceKind kind() const noexcept { return kind_; }
  std::size_t num_concepts() const noexcept { return n_; }
  std::size_t size() const noexcept;
  Action action(std::size_t id) const;
  std::optional<std::size_t> id_of(const Action& action) const;
  /// Legal and affordable actions under `obs`. EndTurn is always set; Nudge
  /// is withheld while a nudge is active.
  std::vector<std::uint8_t> mask(const Observation& obs, const InterventionCatalog& catalog) const;

 private:
  ActionSpaceKind kind_;
  std::size_t n_;
};

/// Length of encode_state() for a course with `num_concepts` concepts.
constexpr std::size_t state_size(std::size_t num_concepts) { return 4 * num_concepts + 6; }

/// Per-concept bucket vectors (one-hot of quantize(C') when observed, the
/// belief otherwise), then motivation (-1 when hidden), tau/T, fraction of
/// the course remaining, study-skills flag, nudge flag, exam-this-step flag.
/// Throws MissingBelief.
Eigen::VectorXd encode_state(const Observation& obs, const BeliefState* belief);

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

/// Fully connected network, ReLU on hidden layers, linear output.
class QNetwork {
 public:
  QNetwork() = default;
  explicit QNetwork(std::vector<std::size_t> sizes);

  /// He-uniform weights, zero biases.
  void initialize(Rng& rng);

  const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t num_parameters() const;

  /// Throws ShapeMismatch, or InvalidSpec on non-finite input.
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  /// Columns are samples.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const;

  std::vector<double> flatten() const;
  void assign(std::span<const double> params);
  bool finite() const;
  Gradients zero_gradients() const;

  std::vector<Eigen::MatrixXd> weights;  // weights[l] is sizes[l+1] x sizes[l]
  std::vector<Eigen::VectorXd> biases;

 private:
  std::vector<std::size_t> sizes_;
};

/// Mean over the batch of (Q(x_i, a_i) - y_i)^2 and its gradient.
double loss_and_gradient(const QNetwork& net, const Eigen::MatrixXd& x, std::span<const std::size_t> actions,
                         const Eigen::VectorXd& targets, Gradients& grad);

/// Momentum-free RMS-normalized step.
class RmsProp {
 public:
  explicit RmsProp(double learning_rate = 1e-3, double decay = 0.99, double epsilon = 1e-8);
  void step(QNetwork& net, const Gradients& grad);

 private:
  double lr_;
  double decay_;
  double eps_;
  Gradients square_;
  bool ready_ = false;
};

struct Transition {
  Eigen::VectorXd state;
  std::size_t action = 0;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  std::vector<std::uint8_t> next_mask;
  bool done = false;
  /// Overrides the trainer's gamma for this transition when set.
  std::optional<double> discount;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000);
  void push(Transition t);
  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  /// Uniform without replacement. Throws EmptyBatch.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;
  const Transition& operator[](std::size_t i) const { return items_[i]; }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
};

/// One gradient step on r + gamma (1 - done) max_{a' legal} Q_target(s', a'),
/// with a transition's own discount taking the place of gamma when present.
/// Returns the batch loss before the step. Throws EmptyBatch.
/// With double_q the online network chooses a' and the target network scores it.
double train_step(QNetwork& net, const QNetwork& target, const std::vector<const Transition*>& batch, double gamma,
                  RmsProp& optimizer, bool double_q = false);

/// Epsilon-greedy over the masked actions; greedy ties go to the lowest id.
/// Throws EmptyMask.
std::size_t select_action(const Eigen::VectorXd& q, double epsilon, std::span<const std::uint8_t> mask, Rng& rng);

struct DqnConfig {
  ActionSpaceKind action_space = ActionSpaceKind::NoProbe;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t epochs = 80;
  std::size_t episodes_per_epoch = 200;
  std::size_t eval_episodes = 200;
  double learning_rate = 1e-3;
  double gamma = 0.99;
  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 10000;
  std::size_t target_sync = 500;
  std::size_t train_every = 4;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_fraction = 0.6;
  bool update_population_model = true;
  /// Discount once per closed time-step rather than once per action.
  bool discount_per_step = false;
  bool double_q = true;

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  double reward_mean = 0.0;
  double reward_std = 0.0;
  double reward_median = 0.0;
  double pass_rate = 0.0;
  double score = 0.0;
  double epsilon = 0.0;
};

/// 0.4 mean + 0.2 median + 0.4 pass rate. Order-independent.
double selection_score(std::span<const double> rewards, std::span<const std::uint8_t> passed);

/// Linear anneal over the first epsilon_fraction of the epochs.
double epsilon_for_epoch(const DqnConfig& config, std::size_t epoch);

struct TrainingSetup {
  const Course* course = nullptr;
  const PopulationSpec* population = nullptr;
  Observability observability = Observability::FullyObserved;
  EnvironmentOptions env;
  /// Starting population model; the course's expert prior when empty.
  std::optional<DirichletTable> population_model;
  std::uint64_t seed = 42;
  unsigned jobs = 1;
};

struct TrainResult {
  QNetwork best;
  std::optional<std::size_t> best_epoch;
  std::vector<EpochMetrics> metrics;
  DirichletTable population_model;
};

TrainResult train_dqn(const TrainingSetup& setup, const DqnConfig& config);

class DqnPolicy final : public Policy {
 public:
  DqnPolicy(QNetwork net, ActionSpace space, InterventionCatalog catalog = InterventionCatalog::defaults());
  std::string name() const override { return "DQN"; }
  Action decide(const Observation& obs, const BeliefState* belief, Rng& rng) const override;
  const QNetwork& network() const noexcept { return net_; }
  const ActionSpace& action_space() const noexcept { return space_; }

 private:
  QNetwork net_;
  ActionSpace space_;
  InterventionCatalog catalog_;
};

struct Checkpoint {
  QNetwork net;
  ActionSpaceKind action_space = ActionSpaceKind::NoProbe;
  std::size_t num_concepts = 0;
  std::string config_json;  // training config echo
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view text);

std::string dqn_config_json(const DqnConfig& config);
/// epoch,loss,reward_mean,reward_std,reward_median,pass_rate,score
std::string curves_csv(const std::vector<EpochMetrics>& metrics);

}  // namespace simedu
