#include "simedu/dqn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "simedu/error.hpp"
#include "simedu/parallel.hpp"

namespace simedu {

namespace {

using nlohmann::json;

constexpr int kCheckpointVersion = 1;
constexpr std::array<std::string_view, 3> kSpaceNames{"NoProbe", "Probe", "All"};
constexpr std::uint64_t kEvalRoot = fnv1a("simedu/dqn-eval");

bool affordable(const Observation& obs, const InterventionCatalog& catalog, InterventionType t) {
  return catalog[t].cost_minutes <= obs.tau_remaining;
}

}  // namespace

std::string_view to_string(ActionSpaceKind kind) { return kSpaceNames[static_cast<std::size_t>(kind)]; }

ActionSpaceKind action_space_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kSpaceNames.size(); ++i) {
    if (kSpaceNames[i] == name) return static_cast<ActionSpaceKind>(i);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown action space '" + std::string(name) + "'");
}

ActionSpace::ActionSpace(ActionSpaceKind kind, std::size_t num_concepts) : kind_(kind), n_(num_concepts) {
  if (n_ == 0) throw Error(ErrorCode::InvalidSpec, "action space needs at least one concept");
}

std::size_t ActionSpace::size() const noexcept {
  std::size_t s = 3 + n_;
  if (kind_ != ActionSpaceKind::NoProbe) s += n_;
  if (kind_ == ActionSpaceKind::All) s += n_;
  return s;
}

Action ActionSpace::action(std::size_t id) const {
  if (id >= size()) throw Error(ErrorCode::OutOfRange, "action id " + std::to_string(id));
  if (id == 0) return Action::end_turn();
  if (id <= n_) return Action::on(InterventionType::Tutor, id - 1);
  if (id == n_ + 1) return Action::plain(InterventionType::StudySkills);
  if (id == n_ + 2) return Action::plain(InterventionType::Nudge);
  const std::size_t rest = id - (n_ + 3);
  if (rest < n_) return Action::on(InterventionType::Probe, rest);
  return Action::on(InterventionType::OracleProbe, rest - n_);
}

std::optional<std::size_t> ActionSpace::id_of(const Action& a) const {
  const std::size_t c = a.concept_index.value_or(0);
  if (a.concept_index && c >= n_) return std::nullopt;
  switch (a.type) {
    case InterventionType::EndTurn: return 0;
    case InterventionType::Tutor: return a.concept_index ? std::optional<std::size_t>(1 + c) : std::nullopt;
    case InterventionType::StudySkills: return n_ + 1;
    case InterventionType::Nudge: return n_ + 2;
    case InterventionType::Probe:
      if (kind_ == ActionSpaceKind::NoProbe || !a.concept_index) return std::nullopt;
      return n_ + 3 + c;
    case InterventionType::OracleProbe:
      if (kind_ != ActionSpaceKind::All || !a.concept_index) return std::nullopt;
      return 2 * n_ + 3 + c;
    default: return std::nullopt;
  }
}

std::vector<std::uint8_t> ActionSpace::mask(const Observation& obs, const InterventionCatalog& catalog) const {
  std::vector<std::uint8_t> m(size(), 0);
  m[0] = 1;
  const bool tutor = affordable(obs, catalog, InterventionType::Tutor);
  const bool probe = kind_ != ActionSpaceKind::NoProbe && affordable(obs, catalog, InterventionType::Probe);
  const bool oracle = kind_ == ActionSpaceKind::All && affordable(obs, catalog, InterventionType::OracleProbe);
  for (std::size_t c : obs.eligible) {
    if (c >= n_) continue;
    if (tutor) m[1 + c] = 1;
    if (probe) m[n_ + 3 + c] = 1;
    if (oracle) m[2 * n_ + 3 + c] = 1;
  }
  if (!obs.study_skills_used && affordable(obs, catalog, InterventionType::StudySkills)) m[n_ + 1] = 1;
  if (!obs.nudge_active && affordable(obs, catalog, InterventionType::Nudge)) m[n_ + 2] = 1;
  return m;
}

Eigen::VectorXd encode_state(const Observation& obs, const BeliefState* belief) {
  const std::size_t n = obs.num_concepts;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(state_size(n)));
  if (!obs.mastery && !belief) throw Error(ErrorCode::MissingBelief, "masteries are hidden and no belief is attached");
  for (std::size_t c = 0; c < n; ++c) {
    const auto base = static_cast<Eigen::Index>(4 * c);
    if (obs.mastery) {
      x(base + static_cast<Eigen::Index>(quantize(std::clamp((*obs.mastery)[c], 0.0, 1.0)))) = 1.0;
    } else {
      const auto& b = belief->buckets.at(c);
      for (std::size_t k = 0; k < kBuckets; ++k) x(base + static_cast<Eigen::Index>(k)) = b[k];
    }
  }
  auto i = static_cast<Eigen::Index>(4 * n);
  x(i++) = obs.motivation ? *obs.motivation : -1.0;
  x(i++) = obs.time_budget > 0.0 ? obs.tau_remaining / obs.time_budget : 0.0;
  x(i++) = obs.num_steps > 0 ? static_cast<double>(obs.num_steps - std::min(obs.step, obs.num_steps)) /
                                   static_cast<double>(obs.num_steps)
                             : 0.0;
  x(i++) = obs.study_skills_used ? 1.0 : 0.0;
  x(i++) = obs.nudge_active ? 1.0 : 0.0;
  x(i++) = obs.exam_this_step ? 1.0 : 0.0;
  return x;
}

QNetwork::QNetwork(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw Error(ErrorCode::ShapeMismatch, "network needs input and output layers");
  for (auto s : sizes_) {
    if (s == 0) throw Error(ErrorCode::ShapeMismatch, "empty layer");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    weights.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sizes_[l + 1]),
                                            static_cast<Eigen::Index>(sizes_[l])));
    biases.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sizes_[l + 1])));
  }
}

void QNetwork::initialize(Rng& rng) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(sizes_[l]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights[l].cols(); ++c) weights[l](r, c) = dist(rng);
    }
    biases[l].setZero();
  }
}

std::size_t QNetwork::num_parameters() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  return n;
}

Eigen::VectorXd QNetwork::forward(const Eigen::VectorXd& x) const {
  if (sizes_.empty() || static_cast<std::size_t>(x.size()) != input_size()) {
    throw Error(ErrorCode::ShapeMismatch, "input has " + std::to_string(x.size()) + " features");
  }
  if (!x.allFinite()) throw Error(ErrorCode::InvalidSpec, "non-finite network input");
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Eigen::VectorXd z = weights[l] * a + biases[l];
    a = l + 1 < weights.size() ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
  }
  return a;
}

Eigen::MatrixXd QNetwork::forward_batch(const Eigen::MatrixXd& x) const {
  if (sizes_.empty() || static_cast<std::size_t>(x.rows()) != input_size()) {
    throw Error(ErrorCode::ShapeMismatch, "batch rows do not match the input layer");
  }
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Eigen::MatrixXd z = (weights[l] * a).colwise() + biases[l];
    a = l + 1 < weights.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return a;
}

std::vector<double> QNetwork::flatten() const {
  std::vector<double> out;
  out.reserve(num_parameters());
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights[l].cols(); ++c) out.push_back(weights[l](r, c));
    }
    for (Eigen::Index r = 0; r < biases[l].size(); ++r) out.push_back(biases[l](r));
  }
  return out;
}

void QNetwork::assign(std::span<const double> params) {
  if (params.size() != num_parameters()) throw Error(ErrorCode::ShapeMismatch, "parameter count");
  std::size_t i = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights[l].cols(); ++c) weights[l](r, c) = params[i++];
    }
    for (Eigen::Index r = 0; r < biases[l].size(); ++r) biases[l](r) = params[i++];
  }
}

bool QNetwork::finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

Gradients QNetwork::zero_gradients() const {
  Gradients g;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    g.weights.push_back(Eigen::MatrixXd::Zero(weights[l].rows(), weights[l].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(biases[l].size()));
  }
  return g;
}

double loss_and_gradient(const QNetwork& net, const Eigen::MatrixXd& x, std::span<const std::size_t> actions,
                         const Eigen::VectorXd& targets, Gradients& grad) {
  const Eigen::Index batch = x.cols();
  if (batch == 0) throw Error(ErrorCode::EmptyBatch, "loss on an empty batch");
  if (static_cast<Eigen::Index>(actions.size()) != batch || targets.size() != batch ||
      static_cast<std::size_t>(x.rows()) != net.input_size()) {
    throw Error(ErrorCode::ShapeMismatch, "batch dimensions");
  }
  const std::size_t layers = net.weights.size();
  std::vector<Eigen::MatrixXd> act{x};
  std::vector<Eigen::MatrixXd> pre;
  for (std::size_t l = 0; l < layers; ++l) {
    pre.push_back((net.weights[l] * act.back()).colwise() + net.biases[l]);
    act.push_back(l + 1 < layers ? Eigen::MatrixXd(pre.back().cwiseMax(0.0)) : pre.back());
  }

  const double scale = 2.0 / static_cast<double>(batch);
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(act.back().rows(), batch);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const auto a = static_cast<Eigen::Index>(actions[static_cast<std::size_t>(i)]);
    if (a >= delta.rows()) throw Error(ErrorCode::ShapeMismatch, "action id beyond the output layer");
    const double diff = act.back()(a, i) - targets(i);
    loss += diff * diff;
    delta(a, i) = scale * diff;
  }
  loss /= static_cast<double>(batch);

  grad = net.zero_gradients();
  for (std::size_t l = layers; l-- > 0;) {
    grad.weights[l] = delta * act[l].transpose();
    grad.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = net.weights[l].transpose() * delta;
      delta = back.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return loss;
}

RmsProp::RmsProp(double learning_rate, double decay, double epsilon)
    : lr_(learning_rate), decay_(decay), eps_(epsilon) {}

void RmsProp::step(QNetwork& net, const Gradients& grad) {
  if (!ready_) {
    square_ = net.zero_gradients();
    ready_ = true;
  }
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    square_.weights[l] = decay_ * square_.weights[l] + (1.0 - decay_) * grad.weights[l].cwiseAbs2();
    square_.biases[l] = decay_ * square_.biases[l] + (1.0 - decay_) * grad.biases[l].cwiseAbs2();
    net.weights[l].array() -= lr_ * grad.weights[l].array() / (square_.weights[l].array().sqrt() + eps_);
    net.biases[l].array() -= lr_ * grad.biases[l].array() / (square_.biases[l].array().sqrt() + eps_);
  }
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw Error(ErrorCode::InvalidConfig, "replay capacity must be positive");
  items_.reserve(capacity_);
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
  if (batch == 0 || items_.empty()) throw Error(ErrorCode::EmptyBatch, "nothing to sample");
  batch = std::min(batch, items_.size());
  // Floyd's algorithm: uniform subset without replacement.
  std::vector<std::size_t> out;
  out.reserve(batch);
  const std::size_t n = items_.size();
  for (std::size_t j = n - batch; j < n; ++j) {
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
    if (std::find(out.begin(), out.end(), t) == out.end()) {
      out.push_back(t);
    } else {
      out.push_back(j);
    }
  }
  return out;
}

double train_step(QNetwork& net, const QNetwork& target, const std::vector<const Transition*>& batch, double gamma,
                  RmsProp& optimizer, bool double_q) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "train_step on an empty batch");
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto in = static_cast<Eigen::Index>(net.input_size());
  Eigen::MatrixXd x(in, b);
  Eigen::MatrixXd x_next(in, b);
  std::vector<std::size_t> actions(batch.size());
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& t = *batch[static_cast<std::size_t>(i)];
    x.col(i) = t.state;
    x_next.col(i) = t.done ? Eigen::VectorXd(Eigen::VectorXd::Zero(in)) : t.next_state;
    actions[static_cast<std::size_t>(i)] = t.action;
  }
  const Eigen::MatrixXd q_next = target.forward_batch(x_next);
  Eigen::MatrixXd q_online;
  if (double_q) q_online = net.forward_batch(x_next);
  Eigen::VectorXd y(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& t = *batch[static_cast<std::size_t>(i)];
    double bootstrap = 0.0;
    if (!t.done) {
      // Online network picks the action when double_q is set; target scores it.
      const Eigen::MatrixXd& chooser = double_q ? q_online : q_next;
      double best = -std::numeric_limits<double>::infinity();
      Eigen::Index arg = -1;
      for (Eigen::Index a = 0; a < q_next.rows(); ++a) {
        if (static_cast<std::size_t>(a) < t.next_mask.size() && t.next_mask[static_cast<std::size_t>(a)] &&
            chooser(a, i) > best) {
          best = chooser(a, i);
          arg = a;
        }
      }
      bootstrap = arg >= 0 ? q_next(arg, i) : 0.0;
    }
    y(i) = t.reward + t.discount.value_or(gamma) * bootstrap;
  }
  Gradients grad;
  const double loss = loss_and_gradient(net, x, actions, y, grad);
  optimizer.step(net, grad);
  return loss;
}

std::size_t select_action(const Eigen::VectorXd& q, double epsilon, std::span<const std::uint8_t> mask, Rng& rng) {
  std::vector<std::size_t> allowed;
  for (std::size_t i = 0; i < mask.size() && i < static_cast<std::size_t>(q.size()); ++i) {
    if (mask[i]) allowed.push_back(i);
  }
  if (allowed.empty()) throw Error(ErrorCode::EmptyMask, "no affordable action");
  if (epsilon > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon) {
    return allowed[std::uniform_int_distribution<std::size_t>(0, allowed.size() - 1)(rng)];
  }
  std::size_t best = allowed.front();
  for (std::size_t i : allowed) {
    if (q(static_cast<Eigen::Index>(i)) > q(static_cast<Eigen::Index>(best))) best = i;
  }
  return best;
}

void DqnConfig::validate() const {
  if (hidden.empty()) throw Error(ErrorCode::InvalidConfig, "dqn.hidden must list at least one layer");
  for (auto h : hidden) {
    if (h == 0) throw Error(ErrorCode::InvalidConfig, "dqn.hidden layers must be non-empty");
  }
  if (eval_episodes == 0) throw Error(ErrorCode::InvalidConfig, "dqn.eval_episodes must be positive");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "dqn.learning_rate must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(ErrorCode::InvalidConfig, "dqn.gamma outside [0,1]");
  if (batch_size == 0 || buffer_capacity < batch_size) {
    throw Error(ErrorCode::InvalidConfig, "dqn.batch_size must be positive and fit in the buffer");
  }
  if (target_sync == 0 || train_every == 0) throw Error(ErrorCode::InvalidConfig, "dqn step intervals must be positive");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "dqn epsilon outside [0,1]");
  }
  if (!(epsilon_fraction > 0.0 && epsilon_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "dqn.epsilon_fraction outside (0,1]");
  }
}

double selection_score(std::span<const double> rewards, std::span<const std::uint8_t> passed) {
  if (rewards.empty() || rewards.size() != passed.size()) throw Error(ErrorCode::EmptyRows, "no evaluation episodes");
  std::vector<double> sorted(rewards.begin(), rewards.end());
  std::sort(sorted.begin(), sorted.end());
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  const std::size_t n = sorted.size();
  const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  const double pass = static_cast<double>(std::count(passed.begin(), passed.end(), 1)) / static_cast<double>(n);
  return 0.4 * mean + 0.2 * median + 0.4 * pass;
}

double epsilon_for_epoch(const DqnConfig& config, std::size_t epoch) {
  const double horizon = config.epsilon_fraction * static_cast<double>(config.epochs);
  if (horizon <= 1.0) return epoch == 0 ? config.epsilon_start : config.epsilon_end;
  const double t = static_cast<double>(epoch) / (horizon - 1.0);
  if (t >= 1.0) return config.epsilon_end;
  return config.epsilon_start + t * (config.epsilon_end - config.epsilon_start);
}

namespace {

struct EvalSummary {
  std::vector<double> rewards;
  std::vector<std::uint8_t> passed;
};

EvalSummary evaluate_network(const TrainingSetup& setup, const QNetwork& net, const ActionSpace& space,
                             const DirichletTable& table, std::size_t episodes) {
  const DqnPolicy policy(net, space, setup.env.catalog);
  const TransitionSample sample = mean_transitions(table);
  const BeliefModel model{&table, &sample};
  RunOptions options;
  options.env = setup.env;
  options.belief = &model;
  EvalSummary out;
  out.rewards.assign(episodes, 0.0);
  out.passed.assign(episodes, 0);
  parallel_for(episodes, setup.jobs, [&](std::size_t i) {
    const auto r = run_episode(policy, *setup.course, *setup.population, setup.observability,
                               derive_seed(kEvalRoot, static_cast<std::uint64_t>(i)), options);
    out.rewards[i] = r.outcome.test_reward;
    out.passed[i] = r.outcome.passed ? 1 : 0;
  });
  return out;
}

}  // namespace

TrainResult train_dqn(const TrainingSetup& setup, const DqnConfig& config) {
  if (!setup.course || !setup.population) throw Error(ErrorCode::InvalidConfig, "training needs a course and population");
  config.validate();
  const Course& course = *setup.course;
  const ActionSpace space(config.action_space, course.graph.size());
  std::vector<std::size_t> sizes{state_size(course.graph.size())};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(space.size());

  Rng init_rng(derive_seed(setup.seed, "dqn/init"));
  QNetwork net(sizes);
  net.initialize(init_rng);
  QNetwork target = net;
  RmsProp optimizer(config.learning_rate);
  ReplayBuffer buffer(config.buffer_capacity);
  Rng sample_rng(derive_seed(setup.seed, "dqn/replay"));

  TrainResult result;
  result.best = net;
  result.population_model = setup.population_model ? *setup.population_model : make_prior_table(course, setup.population->course_baseline);
  const bool hidden = setup.observability != Observability::FullyObserved;
  const std::uint64_t train_root = derive_seed(setup.seed, "dqn/train");
  double best_score = -std::numeric_limits<double>::infinity();
  std::size_t env_steps = 0;
  std::size_t grad_steps = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double epsilon = epsilon_for_epoch(config, epoch);
    Rng epoch_rng(derive_seed(train_root, static_cast<std::uint64_t>(epoch)));
    const TransitionSample sample = sample_transitions(result.population_model, epoch_rng);
    const EmissionModel emission = EmissionModel::defaults();
    SoftCounts epoch_counts;
    double loss_sum = 0.0;
    std::size_t loss_count = 0;

    for (std::size_t ep = 0; ep < config.episodes_per_epoch; ++ep) {
      const std::uint64_t seed = derive_seed(train_root, "episode/" + std::to_string(epoch) + "/" + std::to_string(ep));
      Environment env(course, *setup.population, setup.observability, setup.env);
      auto [obs, type] = env.reset(seed);
      Rng act_rng(derive_seed(seed, "dqn/explore"));
      std::optional<BeliefTracker> tracker;
      if (hidden) {
        tracker.emplace(result.population_model, sample, emission, type, config.update_population_model);
        for (const auto& rec : obs.feedback) tracker->observe(rec);
      }
      Eigen::VectorXd state = encode_state(obs, tracker ? &tracker->belief() : nullptr);
      while (!env.done()) {
        const auto mask = space.mask(obs, setup.env.catalog);
        const std::size_t a = select_action(net.forward(state), epsilon, mask, act_rng);
        auto step = env.step(space.action(a));
        obs = std::move(step.observation);
        if (tracker) {
          for (const auto& rec : obs.feedback) tracker->observe(rec);
        }
        Transition t;
        t.state = state;
        t.action = a;
        t.reward = step.reward;
        t.done = step.done;
        if (config.discount_per_step) t.discount = step.signal == StepSignal::Continue ? 1.0 : config.gamma;
        if (!step.done) {
          t.next_state = encode_state(obs, tracker ? &tracker->belief() : nullptr);
          t.next_mask = space.mask(obs, setup.env.catalog);
          state = t.next_state;
        }
        buffer.push(std::move(t));
        ++env_steps;
        if (env_steps % config.train_every == 0 && buffer.size() >= config.batch_size) {
          const auto idx = buffer.sample_indices(config.batch_size, sample_rng);
          std::vector<const Transition*> batch;
          batch.reserve(idx.size());
          for (auto i : idx) batch.push_back(&buffer[i]);
          loss_sum += train_step(net, target, batch, config.gamma, optimizer, config.double_q);
          ++loss_count;
          if (++grad_steps % config.target_sync == 0) target = net;
        }
      }
      if (tracker) epoch_counts.merge(tracker->counts());
    }
    if (!net.finite()) throw Error(ErrorCode::InvalidSpec, "network diverged at epoch " + std::to_string(epoch));
    if (config.update_population_model && !epoch_counts.empty()) {
      result.population_model = update_priors(result.population_model, epoch_counts);
    }

    const auto eval = evaluate_network(setup, net, space, result.population_model, config.eval_episodes);
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    const double n = static_cast<double>(eval.rewards.size());
    m.reward_mean = std::accumulate(eval.rewards.begin(), eval.rewards.end(), 0.0) / n;
    double var = 0.0;
    for (double r : eval.rewards) var += (r - m.reward_mean) * (r - m.reward_mean);
    m.reward_std = std::sqrt(var / n);
    auto sorted = eval.rewards;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t k = sorted.size();
    m.reward_median = k % 2 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
    m.pass_rate = static_cast<double>(std::count(eval.passed.begin(), eval.passed.end(), 1)) / n;
    m.score = selection_score(eval.rewards, eval.passed);
    m.epsilon = epsilon;
    result.metrics.push_back(m);
    if (m.score > best_score) {
      best_score = m.score;
      result.best = net;
      result.best_epoch = epoch;
    }
  }
  return result;
}

DqnPolicy::DqnPolicy(QNetwork net, ActionSpace space, InterventionCatalog catalog)
    : net_(std::move(net)), space_(space), catalog_(std::move(catalog)) {
  if (net_.output_size() != space_.size() || net_.input_size() != state_size(space_.num_concepts())) {
    throw Error(ErrorCode::ShapeMismatch, "network does not match the action space");
  }
}

Action DqnPolicy::decide(const Observation& obs, const BeliefState* belief, Rng& rng) const {
  const auto mask = space_.mask(obs, catalog_);
  return space_.action(select_action(net_.forward(encode_state(obs, belief)), 0.0, mask, rng));
}

std::string serialize_checkpoint(const Checkpoint& cp) {
  json doc;
  doc["format"] = "simedu-dqn";
  doc["version"] = kCheckpointVersion;
  doc["action_space"] = to_string(cp.action_space);
  doc["num_concepts"] = cp.num_concepts;
  doc["sizes"] = cp.net.sizes();
  json layers = json::array();
  for (std::size_t l = 0; l < cp.net.weights.size(); ++l) {
    const auto& w = cp.net.weights[l];
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
    }
    const auto& b = cp.net.biases[l];
    layers.push_back({{"weights", flat}, {"biases", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  doc["layers"] = layers;
  doc["config"] = cp.config_json.empty() ? json::object() : json::parse(cp.config_json);
  return doc.dump();
}

Checkpoint parse_checkpoint(std::string_view text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format") != "simedu-dqn") throw Error(ErrorCode::InvalidConfig, "not a DQN checkpoint");
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw Error(ErrorCode::InvalidConfig, "unsupported checkpoint version");
    }
    Checkpoint cp;
    cp.action_space = action_space_from_string(doc.at("action_space").get<std::string>());
    cp.num_concepts = doc.at("num_concepts").get<std::size_t>();
    cp.net = QNetwork(doc.at("sizes").get<std::vector<std::size_t>>());
    const auto& layers = doc.at("layers");
    if (layers.size() != cp.net.weights.size()) throw Error(ErrorCode::ShapeMismatch, "checkpoint layer count");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto w = layers[l].at("weights").get<std::vector<double>>();
      const auto b = layers[l].at("biases").get<std::vector<double>>();
      auto& W = cp.net.weights[l];
      if (w.size() != static_cast<std::size_t>(W.size()) || b.size() != static_cast<std::size_t>(cp.net.biases[l].size())) {
        throw Error(ErrorCode::ShapeMismatch, "checkpoint layer " + std::to_string(l));
      }
      std::size_t i = 0;
      for (Eigen::Index r = 0; r < W.rows(); ++r) {
        for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = w[i++];
      }
      for (std::size_t j = 0; j < b.size(); ++j) cp.net.biases[l](static_cast<Eigen::Index>(j)) = b[j];
    }
    cp.config_json = doc.at("config").dump();
    if (!cp.net.finite()) throw Error(ErrorCode::InvalidConfig, "checkpoint has non-finite parameters");
    return cp;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << serialize_checkpoint(checkpoint) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

std::string dqn_config_json(const DqnConfig& c) {
  nlohmann::ordered_json j;
  j["action_space"] = to_string(c.action_space);
  j["hidden"] = c.hidden;
  j["epochs"] = c.epochs;
  j["episodes_per_epoch"] = c.episodes_per_epoch;
  j["eval_episodes"] = c.eval_episodes;
  j["learning_rate"] = c.learning_rate;
  j["gamma"] = c.gamma;
  j["batch_size"] = c.batch_size;
  j["buffer_capacity"] = c.buffer_capacity;
  j["target_sync"] = c.target_sync;
  j["train_every"] = c.train_every;
  j["epsilon_start"] = c.epsilon_start;
  j["epsilon_end"] = c.epsilon_end;
  j["epsilon_fraction"] = c.epsilon_fraction;
  j["update_population_model"] = c.update_population_model;
  j["discount_per_step"] = c.discount_per_step;
  j["double_q"] = c.double_q;
  return j.dump();
}

std::string curves_csv(const std::vector<EpochMetrics>& metrics) {
  std::string out = "epoch,loss,reward_mean,reward_std,reward_median,pass_rate,score\n";
  char buf[256];
  for (const auto& m : metrics) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", m.epoch, m.loss, m.reward_mean,
                  m.reward_std, m.reward_median, m.pass_rate, m.score);
    out += buf;
  }
  return out;
}

}  // namespace simedu
