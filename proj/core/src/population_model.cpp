#include "simedu/population_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "simedu/error.hpp"

namespace simedu {

namespace {

using nlohmann::json;

constexpr int kTableVersion = 1;
constexpr std::array<std::string_view, kActionClasses> kClassNames{"Lecture", "Tutor", "NoAction"};

BucketVector normalized(const BucketVector& v) {
  const double sum = std::accumulate(v.begin(), v.end(), 0.0);
  BucketVector out{};
  for (std::size_t i = 0; i < kBuckets; ++i) out[i] = v[i] / sum;
  return out;
}

BucketVector point_prior(std::size_t bucket, double peak) {
  BucketVector v;
  v.fill(0.5);
  v[bucket] += peak;
  return v;
}

BucketMatrix no_action_prior() {
  BucketMatrix m{};
  for (std::size_t i = 0; i < kBuckets; ++i) {
    for (std::size_t j = 0; j < kBuckets; ++j) m[i][j] = i == j ? 20.0 : 0.2;
  }
  return m;
}

BucketMatrix learning_prior(double stay, double up, double jump) {
  BucketMatrix m{};
  for (std::size_t i = 0; i < kBuckets; ++i) {
    for (std::size_t j = 0; j < kBuckets; ++j) {
      double v = 0.2;
      if (j == i) v = stay;
      if (j == i + 1) v = up;
      if (j == i + 2) v = jump;
      m[i][j] = v;
    }
  }
  m[kBuckets - 1][kBuckets - 1] = stay + up;
  return m;
}

void enumerate_buckets(std::size_t depth, std::vector<int>& current, std::vector<std::vector<int>>& out) {
  if (depth == 0) {
    out.push_back(current);
    return;
  }
  for (int b = 0; b < static_cast<int>(kBuckets); ++b) {
    current.push_back(b);
    enumerate_buckets(depth - 1, current, out);
    current.pop_back();
  }
}

BucketVector sample_dirichlet(const BucketVector& alpha, Rng& rng) {
  BucketVector draw{};
  double sum = 0.0;
  for (std::size_t i = 0; i < kBuckets; ++i) {
    draw[i] = std::gamma_distribution<double>(alpha[i], 1.0)(rng);
    sum += draw[i];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) return normalized(alpha);
  for (auto& d : draw) d /= sum;
  return draw;
}

json matrix_json(const BucketMatrix& m) {
  json rows = json::array();
  for (const auto& r : m) rows.push_back(json(std::vector<double>(r.begin(), r.end())));
  return rows;
}

BucketVector vector_from_json(const json& j) {
  if (!j.is_array() || j.size() != kBuckets) throw Error(ErrorCode::InvalidConfig, "expected 4 Dirichlet parameters");
  BucketVector v{};
  for (std::size_t i = 0; i < kBuckets; ++i) v[i] = j.at(i).get<double>();
  return v;
}

BucketMatrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.size() != kBuckets) throw Error(ErrorCode::InvalidConfig, "expected a 4x4 matrix");
  BucketMatrix m{};
  for (std::size_t i = 0; i < kBuckets; ++i) m[i] = vector_from_json(j.at(i));
  return m;
}

}  // namespace

std::string_view to_string(ActionClass cls) { return kClassNames[static_cast<std::size_t>(cls)]; }

ActionClass action_class_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kActionClasses; ++i) {
    if (kClassNames[i] == name) return static_cast<ActionClass>(i);
  }
  throw Error(ErrorCode::UnknownKey, "action class '" + std::string(name) + "'");
}

ActionClass action_class_of(InterventionType type) {
  switch (type) {
    case InterventionType::Lecture: return ActionClass::Lecture;
    case InterventionType::Tutor: return ActionClass::Tutor;
    default: return ActionClass::NoAction;
  }
}

std::size_t quantize(double mastery) {
  if (!(mastery >= 0.0 && mastery <= 1.0)) {
    throw Error(ErrorCode::OutOfRange, "mastery " + std::to_string(mastery) + " outside [0,1]");
  }
  for (std::size_t b = 0; b + 1 < kBuckets; ++b) {
    if (mastery < kBucketEdges[b + 1]) return b;
  }
  return kBuckets - 1;
}

EmissionModel EmissionModel::defaults() {
  EmissionModel e;
  for (std::size_t k = 0; k < kBuckets; ++k) {
    for (std::size_t o = 0; o < kBuckets; ++o) {
      const std::size_t dist = k > o ? k - o : o - k;
      if (dist == 0) e.p[k][o] = 0.7;
      else if (dist == 1) e.p[k][o] = (k == 0 || k == kBuckets - 1) ? 0.3 : 0.15;
      else e.p[k][o] = 0.0;
    }
  }
  return e;
}

void EmissionModel::validate() const {
  for (const auto& row : p) {
    double sum = 0.0;
    for (double v : row) {
      if (!(v >= 0.0)) throw Error(ErrorCode::InvalidSpec, "negative emission probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidSpec, "emission row does not sum to 1");
  }
}

void DirichletTable::validate() const {
  if (!(eta >= 0.0)) throw Error(ErrorCode::InvalidSpec, "eta must be >= 0");
  for (const auto& [key, rows] : init) {
    if (rows.size() != concepts.size()) throw Error(ErrorCode::InvalidSpec, "init for '" + key + "' has wrong arity");
    for (const auto& r : rows) {
      for (double v : r) {
        if (!(v > 0.0)) throw Error(ErrorCode::InvalidSpec, "non-positive Dirichlet parameter in init '" + key + "'");
      }
    }
    if (!transition.count(key)) throw Error(ErrorCode::UnknownKey, "no transition parameters for '" + key + "'");
  }
  for (const auto& [key, mats] : transition) {
    for (const auto& m : mats) {
      for (const auto& r : m) {
        for (double v : r) {
          if (!(v > 0.0)) throw Error(ErrorCode::InvalidSpec, "non-positive Dirichlet parameter for '" + key + "'");
        }
      }
    }
  }
}

DirichletTable make_prior_table(const Course& course, double course_baseline) {
  DirichletTable table;
  table.concepts = course.graph.concepts();
  std::vector<std::vector<int>> combos;
  std::vector<int> scratch;
  enumerate_buckets(course.prerequisites.size(), scratch, combos);

  std::array<BucketMatrix, kActionClasses> transitions{};
  transitions[static_cast<std::size_t>(ActionClass::Lecture)] = learning_prior(3.0, 1.0, 0.2);
  transitions[static_cast<std::size_t>(ActionClass::Tutor)] = learning_prior(1.5, 1.5, 0.5);
  transitions[static_cast<std::size_t>(ActionClass::NoAction)] = no_action_prior();

  for (auto traj : kAllTrajectories) {
    for (const auto& combo : combos) {
      StudentType type{combo, traj};
      std::vector<double> raw(course.graph.size(), course_baseline);
      for (std::size_t j = 0; j < course.prerequisites.size(); ++j) {
        raw[course.prerequisites[j]] = kBucketMidpoints[static_cast<std::size_t>(combo[j])];
      }
      const auto expected = combined_mastery(course.graph, course.order, raw);
      std::vector<BucketVector> init(course.graph.size());
      for (std::size_t c = 0; c < course.graph.size(); ++c) {
        auto it = std::find(course.prerequisites.begin(), course.prerequisites.end(), c);
        if (it != course.prerequisites.end()) {
          init[c] = point_prior(static_cast<std::size_t>(combo[static_cast<std::size_t>(it - course.prerequisites.begin())]), 8.0);
        } else {
          init[c] = point_prior(quantize(expected[c]), 4.0);
        }
      }
      table.init.emplace(type.key(), std::move(init));
      table.transition.emplace(type.key(), transitions);
    }
  }
  return table;
}

BucketMatrix sample_transition(const DirichletTable& table, const std::string& key, ActionClass cls, Rng& rng) {
  auto it = table.transition.find(key);
  if (it == table.transition.end()) throw Error(ErrorCode::UnknownKey, "no population entry for '" + key + "'");
  const auto& phi = it->second[static_cast<std::size_t>(cls)];
  BucketMatrix out{};
  for (std::size_t i = 0; i < kBuckets; ++i) out[i] = sample_dirichlet(phi[i], rng);
  return out;
}

TransitionSample sample_transitions(const DirichletTable& table, Rng& rng) {
  TransitionSample s;
  for (const auto& [key, mats] : table.transition) {
    std::array<BucketMatrix, kActionClasses> drawn{};
    for (std::size_t a = 0; a < kActionClasses; ++a) {
      drawn[a] = sample_transition(table, key, static_cast<ActionClass>(a), rng);
    }
    s.matrices.emplace(key, drawn);
  }
  return s;
}

TransitionSample mean_transitions(const DirichletTable& table) {
  TransitionSample s;
  for (const auto& [key, mats] : table.transition) {
    std::array<BucketMatrix, kActionClasses> mean{};
    for (std::size_t a = 0; a < kActionClasses; ++a) {
      for (std::size_t i = 0; i < kBuckets; ++i) mean[a][i] = normalized(mats[a][i]);
    }
    s.matrices.emplace(key, mean);
  }
  return s;
}

std::vector<double> filter_update(std::span<const double> prior, std::span<const double> transition,
                                  std::span<const double> emission, std::span<double> two_slice) {
  const std::size_t k = prior.size();
  if (transition.size() != k * k || emission.size() != k || (!two_slice.empty() && two_slice.size() != k * k)) {
    throw Error(ErrorCode::ShapeMismatch, "filter_update dimensions");
  }
  std::vector<double> post(k, 0.0);
  double normalizer = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double joint = prior[i] * transition[i * k + j] * emission[j];
      post[j] += joint;
      if (!two_slice.empty()) two_slice[i * k + j] = joint;
      normalizer += joint;
    }
  }
  if (!(normalizer > 0.0) || !std::isfinite(normalizer)) {
    throw Error(ErrorCode::DegenerateNormalizer, "observation has zero probability under the belief");
  }
  for (auto& p : post) p /= normalizer;
  for (auto& x : two_slice) x /= normalizer;
  return post;
}

BucketVector filter_update(const BucketVector& prior, const BucketMatrix& transition, const EmissionModel& emission,
                           std::size_t symbol, BucketMatrix* two_slice) {
  std::array<double, kBuckets * kBuckets> flat{};
  for (std::size_t i = 0; i < kBuckets; ++i) {
    for (std::size_t j = 0; j < kBuckets; ++j) flat[i * kBuckets + j] = transition[i][j];
  }
  BucketVector e{};
  for (std::size_t j = 0; j < kBuckets; ++j) e[j] = emission(j, symbol);
  std::array<double, kBuckets * kBuckets> slice{};
  const auto post = filter_update(prior, flat, e, two_slice ? std::span<double>(slice) : std::span<double>());
  if (two_slice) {
    for (std::size_t i = 0; i < kBuckets; ++i) {
      for (std::size_t j = 0; j < kBuckets; ++j) (*two_slice)[i][j] = slice[i * kBuckets + j];
    }
  }
  BucketVector out{};
  std::copy(post.begin(), post.end(), out.begin());
  return out;
}

ObservedSymbol observe_feedback(const FeedbackRecord& record) {
  if (record.oracle_value) return {quantize(std::clamp(*record.oracle_value, 0.0, 1.0)), true};
  if (record.samples.empty()) throw Error(ErrorCode::EmptyFeedback, "feedback record has no samples");
  return {quantize(record.fraction_correct()), false};
}

double BeliefState::confidence(std::size_t c) const {
  const auto& b = buckets.at(c);
  return *std::max_element(b.begin(), b.end());
}

double BeliefState::expected_mastery(std::size_t c) const {
  const auto& b = buckets.at(c);
  double sum = 0.0;
  for (std::size_t k = 0; k < kBuckets; ++k) sum += b[k] * kBucketMidpoints[k];
  return sum;
}

void BeliefState::validate() const {
  for (const auto& b : buckets) {
    double sum = 0.0;
    for (double v : b) {
      if (!(v >= 0.0)) throw Error(ErrorCode::InvalidSpec, "negative belief entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidSpec, "belief does not sum to 1");
  }
}

void SoftCounts::add_transition(const std::string& key, ActionClass cls, const BucketMatrix& counts) {
  auto& target = transition[key][static_cast<std::size_t>(cls)];
  for (std::size_t i = 0; i < kBuckets; ++i) {
    for (std::size_t j = 0; j < kBuckets; ++j) target[i][j] += counts[i][j];
  }
}

void SoftCounts::merge(const SoftCounts& other) {
  for (const auto& [key, mats] : other.transition) {
    for (std::size_t a = 0; a < kActionClasses; ++a) add_transition(key, static_cast<ActionClass>(a), mats[a]);
  }
  for (const auto& [key, rows] : other.init) {
    auto& target = init[key];
    if (target.size() < rows.size()) target.resize(rows.size(), BucketVector{});
    for (std::size_t c = 0; c < rows.size(); ++c) {
      for (std::size_t k = 0; k < kBuckets; ++k) target[c][k] += rows[c][k];
    }
  }
}

DirichletTable update_priors(const DirichletTable& table, const SoftCounts& counts) {
  DirichletTable out = table;
  for (const auto& [key, mats] : counts.transition) {
    auto it = out.transition.find(key);
    if (it == out.transition.end()) throw Error(ErrorCode::UnknownKey, "counts for unknown type '" + key + "'");
    for (std::size_t a = 0; a < kActionClasses; ++a) {
      for (std::size_t i = 0; i < kBuckets; ++i) {
        for (std::size_t j = 0; j < kBuckets; ++j) {
          const double c = mats[a][i][j];
          if (!(c >= 0.0)) throw Error(ErrorCode::InvalidSpec, "negative soft count");
          it->second[a][i][j] += table.eta * c;
        }
      }
    }
  }
  for (const auto& [key, rows] : counts.init) {
    auto it = out.init.find(key);
    if (it == out.init.end()) throw Error(ErrorCode::UnknownKey, "init counts for unknown type '" + key + "'");
    for (std::size_t c = 0; c < rows.size() && c < it->second.size(); ++c) {
      for (std::size_t k = 0; k < kBuckets; ++k) {
        if (!(rows[c][k] >= 0.0)) throw Error(ErrorCode::InvalidSpec, "negative soft count");
        it->second[c][k] += table.eta * rows[c][k];
      }
    }
  }
  return out;
}

BeliefTracker::BeliefTracker(const DirichletTable& table, const TransitionSample& sample,
                             const EmissionModel& emission, const StudentType& type, bool collect_counts)
    : emission_(&emission), key_(type.key()), collect_(collect_counts) {
  auto m = sample.matrices.find(key_);
  auto init = table.init.find(key_);
  if (m == sample.matrices.end() || init == table.init.end()) {
    throw Error(ErrorCode::UnknownKey, "no population entry for '" + key_ + "'");
  }
  matrices_ = &m->second;
  for (const auto& phi : init->second) belief_.buckets.push_back(normalized(phi));
  seen_.assign(belief_.buckets.size(), false);
}

void BeliefTracker::observe(const FeedbackRecord& record) {
  const std::size_t c = record.concept_index;
  auto& b = belief_.buckets.at(c);
  if (record.oracle_value) {
    b.fill(0.0);
    b[observe_feedback(record).symbol] = 1.0;
    seen_[c] = true;
    return;
  }
  const auto cls = action_class_of(record.source);
  const std::size_t symbol = record.samples.empty() ? kNoObservation : observe_feedback(record).symbol;
  const auto& transition = (*matrices_)[static_cast<std::size_t>(cls)];

  BucketMatrix slice{};
  BucketVector prior = b;
  try {
    b = filter_update(prior, transition, *emission_, symbol, &slice);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateNormalizer) throw;
    // The belief ruled the observation out; restart this concept from a flat prior.
    prior.fill(1.0 / static_cast<double>(kBuckets));
    b = filter_update(prior, transition, *emission_, symbol, &slice);
  }
  if (!collect_) return;
  counts_.add_transition(key_, cls, slice);
  if (!seen_[c]) {
    auto& rows = counts_.init[key_];
    rows.resize(belief_.buckets.size(), BucketVector{});
    for (std::size_t i = 0; i < kBuckets; ++i) {
      for (std::size_t j = 0; j < kBuckets; ++j) rows[c][i] += slice[i][j];
    }
  }
  seen_[c] = true;
}

std::string serialize_table(const DirichletTable& table) {
  json doc;
  doc["format"] = "simedu-popmodel";
  doc["version"] = kTableVersion;
  doc["eta"] = table.eta;
  doc["concepts"] = table.concepts;
  doc["action_classes"] = std::vector<std::string>(kClassNames.begin(), kClassNames.end());
  json init = json::object();
  for (const auto& [key, rows] : table.init) {
    json arr = json::array();
    for (const auto& r : rows) arr.push_back(json(std::vector<double>(r.begin(), r.end())));
    init[key] = arr;
  }
  doc["init"] = init;
  json trans = json::object();
  for (const auto& [key, mats] : table.transition) {
    json entry = json::object();
    for (std::size_t a = 0; a < kActionClasses; ++a) entry[std::string(kClassNames[a])] = matrix_json(mats[a]);
    trans[key] = entry;
  }
  doc["transition"] = trans;
  return doc.dump(1);
}

DirichletTable parse_table(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("population model is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format") != "simedu-popmodel") throw Error(ErrorCode::InvalidConfig, "not a population model file");
    if (doc.at("version").get<int>() != kTableVersion) {
      throw Error(ErrorCode::InvalidConfig, "unsupported population model version");
    }
    DirichletTable table;
    table.eta = doc.at("eta").get<double>();
    table.concepts = doc.at("concepts").get<std::vector<ConceptId>>();
    for (const auto& [key, rows] : doc.at("init").items()) {
      std::vector<BucketVector> v;
      for (const auto& r : rows) v.push_back(vector_from_json(r));
      table.init.emplace(key, std::move(v));
    }
    for (const auto& [key, entry] : doc.at("transition").items()) {
      std::array<BucketMatrix, kActionClasses> mats{};
      for (std::size_t a = 0; a < kActionClasses; ++a) mats[a] = matrix_from_json(entry.at(std::string(kClassNames[a])));
      table.transition.emplace(key, mats);
    }
    table.validate();
    return table;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("malformed population model: ") + e.what());
  }
}

void save_table(const DirichletTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << serialize_table(table) << '\n';
}

DirichletTable load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_table(buffer.str());
}

}  // namespace simedu
