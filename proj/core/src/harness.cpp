#include "simedu/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "simedu/parallel.hpp"

namespace simedu {

namespace {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr std::array<std::string_view, 5> kExperimentNames{"Baselines", "TimeRewardSweep", "HiddenInfo", "DistShift",
                                                           "Structure"};
constexpr std::array<double, 8> kSweepValues{0.0001, 0.0005, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05};
constexpr std::string_view kCsvHeader =
    "experiment,course,structure,population,observability,policy,population_model,k_tau,test_reward_mean,"
    "test_reward_std,pass_rate,episodes,seed,config_hash";

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) bad(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) bad("unknown key '" + where + key + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    bad("'" + where + key + "' has the wrong type");
  }
}

template <class T, class Parse>
void read_list(const json& obj, const char* key, std::vector<T>& out, Parse parse) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_array()) bad(std::string("'") + key + "' must be a list");
  out.clear();
  for (const auto& item : v) {
    if (!item.is_string()) bad(std::string("'") + key + "' entries must be strings");
    out.push_back(parse(item.get<std::string>()));
  }
}

std::string tag_of(std::string text) {
  for (auto& ch : text) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-') ch = '_';
  }
  return text;
}

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void resolve_defaults(ExperimentConfig& c, const json& doc) {
  auto unset = [&](const char* key) { return !doc.contains(key); };
  using CK = CourseKind;
  using O = Observability;
  switch (c.kind) {
    case ExperimentKind::Baselines:
      if (unset("courses")) c.courses = {CK::BasicOneConcept, CK::PrereqOneConcept, CK::FourConcept};
      if (unset("populations")) c.populations = {"Typical", "AStudents", "DStudents"};
      if (unset("observability")) c.observability = {O::FullyObserved};
      if (unset("policies")) c.policies = {"NoIntervention", "TutorOnly"};
      break;
    case ExperimentKind::TimeRewardSweep:
      if (unset("courses")) c.courses = {CK::BasicOneConcept};
      if (unset("populations")) c.populations = {"Typical"};
      if (unset("observability")) c.observability = {O::FullyObserved};
      if (unset("policies")) c.policies = {"NoIntervention", "TutorLimit", "DQN"};
      if (unset("k_tau")) c.k_tau.assign(kSweepValues.begin(), kSweepValues.end());
      break;
    case ExperimentKind::HiddenInfo:
      if (unset("courses")) c.courses = {CK::BasicOneConcept};
      if (unset("populations")) c.populations = {"Typical", "AStudents", "DStudents", "AD5050"};
      if (unset("observability")) c.observability = {O::FullyObserved, O::ConceptHidden, O::Unobserved};
      if (unset("policies")) {
        c.policies = {"SSTutor", "ProbeSSTutorLimit", "OracleSSTutorLimit", "DQN", "DQN-Probe", "DQN-All"};
      }
      if (unset("dqn_populations")) c.dqn_populations = {"Typical", "AD5050"};
      break;
    case ExperimentKind::DistShift:
      if (unset("courses")) c.courses = {CK::BasicOneConcept};
      if (unset("observability")) c.observability = {O::Unobserved};
      if (unset("policies")) c.policies = {"ProbeSSTutorLimit", "DQN-Probe"};
      break;
    case ExperimentKind::Structure:
      if (unset("courses")) c.courses = {CK::FourConcept};
      if (unset("structures")) {
        c.structures = {StructureKind::FinalsOnly, StructureKind::MidtermFinal, StructureKind::Quizzes,
                        StructureKind::QuizzesPlusDiagnostics};
      }
      if (unset("populations")) c.populations = {"AD5050"};
      if (unset("observability")) c.observability = {O::Unobserved};
      if (unset("policies")) c.policies = {"Random", "SSTutorLimit", "DQN"};
      break;
  }
  if (unset("structures") && c.structures.empty()) c.structures = {StructureKind::FinalsOnly};
  if (unset("k_tau") && c.k_tau.empty()) c.k_tau = {0.02};
  if (c.id.empty()) c.id = std::string(to_string(c.kind));
  if (c.kind == ExperimentKind::DistShift) {
    c.populations = c.dist_shift.test_populations;
  }
}

void parse_catalog(const json& j, InterventionCatalog& catalog) {
  if (!j.is_object()) bad("'catalog' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "nudge_duration") {
      read(j, "nudge_duration", catalog.nudge_duration, "catalog.");
      continue;
    }
    InterventionType t;
    try {
      t = intervention_from_string(key);
    } catch (const Error&) {
      bad("unknown key 'catalog." + key + "'");
    }
    const std::string where = "catalog." + key + ".";
    check_keys(value, {"cost_minutes", "k_base", "c_target", "feedback_samples"}, where);
    auto& spec = catalog[t];
    read(value, "cost_minutes", spec.cost_minutes, where);
    read(value, "k_base", spec.k_base, where);
    read(value, "c_target", spec.c_target, where);
    read(value, "feedback_samples", spec.feedback_samples, where);
  }
}

ojson catalog_json(const InterventionCatalog& catalog) {
  ojson j;
  for (std::size_t i = 0; i < kInterventionTypes; ++i) {
    const auto t = static_cast<InterventionType>(i);
    const auto& s = catalog[t];
    j[std::string(to_string(t))] = {{"cost_minutes", s.cost_minutes},
                                    {"k_base", s.k_base},
                                    {"c_target", s.c_target},
                                    {"feedback_samples", s.feedback_samples}};
  }
  j["nudge_duration"] = catalog.nudge_duration;
  return j;
}

void parse_dqn(const json& j, DqnConfig& d) {
  const std::string w = "dqn.";
  check_keys(j,
             {"action_space", "hidden", "epochs", "episodes_per_epoch", "eval_episodes", "learning_rate", "gamma",
              "batch_size", "buffer_capacity", "target_sync", "train_every", "epsilon_start", "epsilon_end",
              "epsilon_fraction", "update_population_model", "discount_per_step",
               "double_q"},
             w);
  if (j.contains("action_space")) {
    if (!j.at("action_space").is_string()) bad("'dqn.action_space' must be a string");
    d.action_space = action_space_from_string(j.at("action_space").get<std::string>());
  }
  read(j, "hidden", d.hidden, w);
  read(j, "epochs", d.epochs, w);
  read(j, "episodes_per_epoch", d.episodes_per_epoch, w);
  read(j, "eval_episodes", d.eval_episodes, w);
  read(j, "learning_rate", d.learning_rate, w);
  read(j, "gamma", d.gamma, w);
  read(j, "batch_size", d.batch_size, w);
  read(j, "buffer_capacity", d.buffer_capacity, w);
  read(j, "target_sync", d.target_sync, w);
  read(j, "train_every", d.train_every, w);
  read(j, "epsilon_start", d.epsilon_start, w);
  read(j, "epsilon_end", d.epsilon_end, w);
  read(j, "epsilon_fraction", d.epsilon_fraction, w);
  read(j, "update_population_model", d.update_population_model, w);
  read(j, "discount_per_step", d.discount_per_step, w);
  read(j, "double_q", d.double_q, w);
}

}  // namespace

std::string_view to_string(ExperimentKind kind) { return kExperimentNames[static_cast<std::size_t>(kind)]; }

ExperimentKind experiment_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kExperimentNames.size(); ++i) {
    if (kExperimentNames[i] == name) return static_cast<ExperimentKind>(i);
  }
  bad("unknown experiment '" + std::string(name) + "'");
}

bool is_dqn_name(std::string_view name) { return name == "DQN" || name == "DQN-Probe" || name == "DQN-All"; }

ActionSpaceKind dqn_action_space(std::string_view name) {
  if (name == "DQN") return ActionSpaceKind::NoProbe;
  if (name == "DQN-Probe") return ActionSpaceKind::Probe;
  if (name == "DQN-All") return ActionSpaceKind::All;
  bad("'" + std::string(name) + "' is not a DQN policy");
}

void ExperimentConfig::validate() const {
  if (episodes < 100) bad("episodes must be at least 100 for reported aggregates");
  if (courses.empty() || structures.empty() || populations.empty() || observability.empty() || policies.empty()) {
    bad("courses, structures, populations, observability and policies must be non-empty");
  }
  if (k_tau.empty()) bad("k_tau list must be non-empty");
  for (double k : k_tau) {
    if (!(k >= 0.0) || !std::isfinite(k)) bad("k_tau values must be finite and non-negative");
  }
  for (const auto& p : populations) simedu::validate(population_preset(p));
  for (const auto& p : dqn_populations) simedu::validate(population_preset(p));
  for (const auto& p : policies) {
    if (!is_heuristic_name(p) && !is_dqn_name(p)) bad("unknown policy '" + p + "'");
  }
  for (auto ck : courses) {
    for (auto sk : structures) {
      for (double k : k_tau) {
        CourseConstants cc = course_constants;
        cc.k_tau = k;
        simedu::validate(build_course(ck, sk, cc));
      }
    }
  }
  for (const auto& p : policies) {
    if (is_heuristic_name(p)) {
      HeuristicConfig h = heuristic;
      h.kind = heuristic_from_string(p);
      h.validate(course_constants.g_pass);
    }
  }
  if (kind == ExperimentKind::Structure) {
    for (const auto& p : policies) {
      if (p == "DQN-Probe" || p == "DQN-All" || (is_heuristic_name(p) && [&] {
            const auto pre = HeuristicConfig::preset(heuristic_from_string(p));
            return pre.probe || pre.oracle_probe;
          }())) {
        bad("structure experiments run without probing; '" + p + "' probes");
      }
    }
  }
  if (kind == ExperimentKind::DistShift) {
    if (dist_shift.train_populations.empty() || dist_shift.test_populations.empty()) {
      bad("dist_shift population lists must be non-empty");
    }
    for (const auto& p : dist_shift.train_populations) simedu::validate(population_preset(p));
  }
  if (!(population_model.eta >= 0.0)) bad("population_model.eta must be >= 0");
  if (population_model.pretrain_episodes == 0 && population_model.pretrain_epochs > 0) {
    bad("population_model.pretrain_episodes must be positive");
  }
  catalog.validate();
  dqn.validate();
}

ExperimentConfig parse_experiment_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    bad(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(doc,
             {"schema_version", "id", "experiment", "courses", "structures", "populations", "observability",
              "policies", "dqn_populations", "k_tau", "episodes", "seed", "heuristic", "dqn", "population_model",
              "dist_shift", "catalog", "course", "write_episodes"},
             "");
  int version = ExperimentConfig::kSchemaVersion;
  read(doc, "schema_version", version, "");
  if (version != ExperimentConfig::kSchemaVersion) bad("unsupported schema_version " + std::to_string(version));
  if (!doc.contains("experiment") || !doc.at("experiment").is_string()) bad("'experiment' is required");

  ExperimentConfig c;
  c.kind = experiment_from_string(doc.at("experiment").get<std::string>());
  read(doc, "id", c.id, "");
  read_list(doc, "courses", c.courses, [](const std::string& s) { return course_kind_from_string(s); });
  read_list(doc, "structures", c.structures, [](const std::string& s) { return structure_from_string(s); });
  read_list(doc, "populations", c.populations, [](const std::string& s) { return s; });
  read_list(doc, "observability", c.observability, [](const std::string& s) { return observability_from_string(s); });
  read_list(doc, "policies", c.policies, [](const std::string& s) { return s; });
  read_list(doc, "dqn_populations", c.dqn_populations, [](const std::string& s) { return s; });
  read(doc, "k_tau", c.k_tau, "");
  read(doc, "episodes", c.episodes, "");
  read(doc, "seed", c.seed, "");
  read(doc, "write_episodes", c.write_episodes, "");
  if (doc.contains("heuristic")) {
    const auto& h = doc.at("heuristic");
    check_keys(h, {"tutor_limit", "probe_confidence_threshold", "motivation_threshold", "max_probes_per_step",
                   "nudge_budget"},
               "heuristic.");
    read(h, "tutor_limit", c.heuristic.tutor_limit, "heuristic.");
    read(h, "probe_confidence_threshold", c.heuristic.probe_confidence_threshold, "heuristic.");
    read(h, "motivation_threshold", c.heuristic.motivation_threshold, "heuristic.");
    read(h, "max_probes_per_step", c.heuristic.max_probes_per_step, "heuristic.");
    read(h, "nudge_budget", c.heuristic.nudge_budget, "heuristic.");
  }
  if (doc.contains("dqn")) parse_dqn(doc.at("dqn"), c.dqn);
  if (doc.contains("population_model")) {
    const auto& p = doc.at("population_model");
    check_keys(p, {"pretrain_epochs", "pretrain_episodes", "eta"}, "population_model.");
    read(p, "pretrain_epochs", c.population_model.pretrain_epochs, "population_model.");
    read(p, "pretrain_episodes", c.population_model.pretrain_episodes, "population_model.");
    read(p, "eta", c.population_model.eta, "population_model.");
  }
  if (doc.contains("dist_shift")) {
    const auto& d = doc.at("dist_shift");
    check_keys(d, {"train_populations", "test_populations"}, "dist_shift.");
    read(d, "train_populations", c.dist_shift.train_populations, "dist_shift.");
    read(d, "test_populations", c.dist_shift.test_populations, "dist_shift.");
  }
  if (doc.contains("catalog")) parse_catalog(doc.at("catalog"), c.catalog);
  if (doc.contains("course")) {
    const auto& k = doc.at("course");
    const std::string w = "course.";
    check_keys(k, {"k_pass", "g_pass", "grade_mass", "grade_split", "edge_weight", "lecture_minutes",
                   "final_questions", "midterm_questions", "quiz_questions", "diagnostic_questions"},
               w);
    auto& cc = c.course_constants;
    read(k, "k_pass", cc.k_pass, w);
    read(k, "g_pass", cc.g_pass, w);
    read(k, "grade_mass", cc.grade_mass, w);
    read(k, "grade_split", cc.grade_split, w);
    read(k, "edge_weight", cc.edge_weight, w);
    read(k, "lecture_minutes", cc.lecture_minutes, w);
    read(k, "final_questions", cc.final_questions, w);
    read(k, "midterm_questions", cc.midterm_questions, w);
    read(k, "quiz_questions", cc.quiz_questions, w);
    read(k, "diagnostic_questions", cc.diagnostic_questions, w);
  }
  resolve_defaults(c, doc);
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

std::string resolved_config_json(const ExperimentConfig& c) {
  ojson j;
  j["schema_version"] = ExperimentConfig::kSchemaVersion;
  j["id"] = c.id;
  j["experiment"] = to_string(c.kind);
  auto names = [](const auto& items) {
    std::vector<std::string> out;
    for (const auto& i : items) out.emplace_back(to_string(i));
    return out;
  };
  j["courses"] = names(c.courses);
  j["structures"] = names(c.structures);
  j["populations"] = c.populations;
  j["observability"] = names(c.observability);
  j["policies"] = c.policies;
  j["dqn_populations"] = c.dqn_populations;
  j["k_tau"] = c.k_tau;
  j["episodes"] = c.episodes;
  j["seed"] = c.seed;
  j["write_episodes"] = c.write_episodes;
  j["heuristic"] = {{"tutor_limit", c.heuristic.tutor_limit},
                    {"probe_confidence_threshold", c.heuristic.probe_confidence_threshold},
                    {"motivation_threshold", c.heuristic.motivation_threshold},
                    {"max_probes_per_step", c.heuristic.max_probes_per_step},
                    {"nudge_budget", c.heuristic.nudge_budget}};
  j["dqn"] = ojson::parse(dqn_config_json(c.dqn));
  j["population_model"] = {{"pretrain_epochs", c.population_model.pretrain_epochs},
                           {"pretrain_episodes", c.population_model.pretrain_episodes},
                           {"eta", c.population_model.eta}};
  j["dist_shift"] = {{"train_populations", c.dist_shift.train_populations},
                     {"test_populations", c.dist_shift.test_populations}};
  j["catalog"] = catalog_json(c.catalog);
  const auto& cc = c.course_constants;
  j["course"] = {{"k_pass", cc.k_pass},
                 {"g_pass", cc.g_pass},
                 {"grade_mass", cc.grade_mass},
                 {"grade_split", cc.grade_split},
                 {"edge_weight", cc.edge_weight},
                 {"lecture_minutes", cc.lecture_minutes},
                 {"final_questions", cc.final_questions},
                 {"midterm_questions", cc.midterm_questions},
                 {"quiz_questions", cc.quiz_questions},
                 {"diagnostic_questions", cc.diagnostic_questions}};
  return j.dump(2);
}

std::string config_hash(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(resolved_config_json(config))));
  return buf;
}

double CellStats::mean() const {
  if (rewards.empty()) return 0.0;
  double sum = 0.0;
  for (double r : rewards) sum += r;
  return sum / static_cast<double>(rewards.size());
}

double CellStats::stddev() const {
  if (rewards.empty()) return 0.0;
  const double m = mean();
  double acc = 0.0;
  for (double r : rewards) acc += (r - m) * (r - m);
  return std::sqrt(acc / static_cast<double>(rewards.size()));
}

double CellStats::pass_rate() const {
  if (passed.empty()) return 0.0;
  return static_cast<double>(std::count(passed.begin(), passed.end(), 1)) / static_cast<double>(passed.size());
}

std::uint64_t episode_seed(std::uint64_t root, std::string_view cell_key, std::size_t index) {
  return derive_seed(derive_seed(root, cell_key), static_cast<std::uint64_t>(index));
}

CellStats evaluate_policy(const Policy& policy, const Course& course, const PopulationSpec& population,
                          Observability observability, const BeliefModel* belief, const EnvironmentOptions& env,
                          std::uint64_t root, std::string_view cell_key, std::size_t episodes, unsigned jobs,
                          bool keep_logs) {
  CellStats stats;
  stats.rewards.assign(episodes, 0.0);
  stats.passed.assign(episodes, 0);
  std::vector<std::string> logs(keep_logs ? episodes : 0);
  RunOptions options;
  options.env = env;
  options.belief = belief;
  parallel_for(episodes, jobs, [&](std::size_t i) {
    const auto r = run_episode(policy, course, population, observability, episode_seed(root, cell_key, i), options);
    stats.rewards[i] = r.outcome.test_reward;
    stats.passed[i] = r.outcome.passed ? 1 : 0;
    if (keep_logs) logs[i] = episode_jsonl(r.log, course);
  });
  for (auto& l : logs) stats.episodes_jsonl += l;
  return stats;
}

DirichletTable train_population_model(const PopulationTraining& setup, const PopulationModelConfig& config) {
  if (!setup.course || !setup.population || !setup.behaviour) {
    throw Error(ErrorCode::InvalidConfig, "population-model training needs a course, population and policy");
  }
  DirichletTable table = make_prior_table(*setup.course, setup.population->course_baseline);
  table.eta = config.eta;
  for (std::size_t epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    const std::uint64_t epoch_seed = derive_seed(setup.seed, static_cast<std::uint64_t>(epoch));
    Rng rng(derive_seed(epoch_seed, "sample"));
    const TransitionSample sample = sample_transitions(table, rng);
    const BeliefModel model{&table, &sample};
    RunOptions options;
    options.env = setup.env;
    options.belief = &model;
    options.collect_counts = true;
    std::vector<SoftCounts> counts(config.pretrain_episodes);
    parallel_for(config.pretrain_episodes, setup.jobs, [&](std::size_t i) {
      counts[i] = run_episode(*setup.behaviour, *setup.course, *setup.population, setup.observability,
                              derive_seed(epoch_seed, static_cast<std::uint64_t>(i)), options)
                      .counts;
    });
    SoftCounts merged;
    for (const auto& c : counts) merged.merge(c);
    table = update_priors(table, merged);
  }
  return table;
}

RunFailure::RunFailure(const Error& cause, RunArtifacts partial)
    : std::runtime_error(cause.what()), code_(cause.code()), partial_(std::move(partial)) {}

namespace {

struct TrainedDqn {
  std::unique_ptr<DqnPolicy> policy;
  DirichletTable population_model;
  std::string tag;
};

class Runner {
 public:
  Runner(const ExperimentConfig& config, const RunControl& control)
      : config_(config), control_(control), hash_(config_hash(config)) {
    env_.catalog = config.catalog;
  }

  RunArtifacts run() {
    try {
      if (config_.kind == ExperimentKind::DistShift) {
        run_dist_shift();
      } else {
        run_grid();
      }
    } catch (const Error& e) {
      throw RunFailure(e, std::move(out_));
    }
    return std::move(out_);
  }

 private:
  void progress(const std::string& msg) const {
    if (control_.progress) control_.progress(msg);
  }

  Course course_for(CourseKind ck, StructureKind sk, double k_tau) const {
    CourseConstants cc = config_.course_constants;
    cc.k_tau = k_tau;
    return build_course(ck, sk, cc);
  }

  static std::string course_key(const Course& c) {
    return std::string(to_string(c.kind)) + "/" + std::string(to_string(c.structure));
  }

  std::unique_ptr<Policy> heuristic(const std::string& name) const {
    HeuristicConfig h = HeuristicConfig::preset(heuristic_from_string(name));
    h.tutor_limit = config_.heuristic.tutor_limit;
    h.probe_confidence_threshold = config_.heuristic.probe_confidence_threshold;
    h.motivation_threshold = config_.heuristic.motivation_threshold;
    h.max_probes_per_step = config_.heuristic.max_probes_per_step;
    h.nudge_budget = config_.heuristic.nudge_budget;
    return std::make_unique<HeuristicPolicy>(h, config_.catalog);
  }

  const DirichletTable& pretrained(const Course& course, const std::string& population, Observability obs,
                                   const std::string& policy_name, const Policy& behaviour) {
    const std::string key = course_key(course) + "/" + population + "/" + std::string(to_string(obs)) + "/" + policy_name;
    auto it = popmodels_.find(key);
    if (it != popmodels_.end()) return it->second;
    progress("pre-training population model " + key);
    const PopulationSpec spec = population_preset(population);
    PopulationTraining setup;
    setup.course = &course;
    setup.population = &spec;
    setup.observability = obs;
    setup.behaviour = &behaviour;
    setup.env = env_;
    setup.seed = derive_seed(config_.seed, "popmodel/" + key);
    setup.jobs = control_.jobs;
    auto table = train_population_model(setup, config_.population_model);
    out_.population_models.emplace_back("pretrained_" + tag_of(key), table);
    return popmodels_.emplace(key, std::move(table)).first->second;
  }

  TrainedDqn& dqn(const Course& course, const std::string& population, Observability obs, const std::string& name) {
    const std::string key = course_key(course) + "/ktau=" + fmt_g(course.k_tau) + "/" + population + "/" +
                            std::string(to_string(obs)) + "/" + name;
    auto it = dqns_.find(key);
    if (it != dqns_.end()) return it->second;
    progress("training " + key);
    const PopulationSpec spec = population_preset(population);
    DqnConfig cfg = config_.dqn;
    cfg.action_space = dqn_action_space(name);
    TrainingSetup setup;
    setup.course = &course;
    setup.population = &spec;
    setup.observability = obs;
    setup.env = env_;
    setup.seed = derive_seed(config_.seed, "dqn/" + key);
    setup.jobs = control_.jobs;
    DirichletTable prior = make_prior_table(course, spec.course_baseline);
    prior.eta = config_.population_model.eta;
    setup.population_model = prior;
    auto result = train_dqn(setup, cfg);
    TrainedDqn trained;
    trained.tag = tag_of(key);
    trained.policy = std::make_unique<DqnPolicy>(result.best, ActionSpace(cfg.action_space, course.graph.size()),
                                                 config_.catalog);
    trained.population_model = result.population_model;
    out_.curves.push_back({trained.tag, result.metrics});
    out_.checkpoints.emplace_back(trained.tag, Checkpoint{result.best, cfg.action_space, course.graph.size(),
                                                          dqn_config_json(cfg)});
    out_.population_models.emplace_back("dqn_" + trained.tag, result.population_model);
    return dqns_.emplace(key, std::move(trained)).first->second;
  }

  ResultRow make_row(const Course& course, const std::string& population, Observability obs, const std::string& policy,
                     const std::string& popmodel, const CellStats& stats) const {
    ResultRow r;
    r.experiment = config_.id;
    r.course = std::string(to_string(course.kind));
    r.structure = std::string(to_string(course.structure));
    r.population = population;
    r.observability = std::string(to_string(obs));
    r.policy = policy;
    r.population_model = popmodel;
    r.k_tau = course.k_tau;
    r.test_reward_mean = stats.mean();
    r.test_reward_std = stats.stddev();
    r.pass_rate = stats.pass_rate();
    r.episodes = stats.rewards.size();
    r.seed = config_.seed;
    r.config_hash = hash_;
    return r;
  }

  CellStats evaluate(const Policy& policy, const Course& course, const std::string& population, Observability obs,
                     const DirichletTable* table) {
    const PopulationSpec spec = population_preset(population);
    std::optional<TransitionSample> sample;
    BeliefModel model;
    if (table) {
      sample = mean_transitions(*table);
      model = BeliefModel{table, &*sample};
    }
    auto stats = evaluate_policy(policy, course, spec, obs, table ? &model : nullptr, env_, config_.seed,
                                 course_key(course) + "/" + population, config_.episodes, control_.jobs,
                                 config_.write_episodes);
    if (config_.write_episodes) out_.episodes_jsonl += stats.episodes_jsonl;
    return stats;
  }

  void run_grid() {
    for (auto ck : config_.courses) {
      for (auto sk : config_.structures) {
        for (double k_tau : config_.k_tau) {
          const Course course = course_for(ck, sk, k_tau);
          for (auto obs : config_.observability) {
            for (const auto& population : config_.populations) {
              for (const auto& name : config_.policies) run_cell(course, obs, population, name);
            }
          }
        }
      }
    }
  }

  void run_cell(const Course& course, Observability obs, const std::string& population, const std::string& name) {
    const bool is_dqn = is_dqn_name(name);
    if (is_dqn && !config_.dqn_populations.empty() &&
        std::find(config_.dqn_populations.begin(), config_.dqn_populations.end(), population) ==
            config_.dqn_populations.end()) {
      return;
    }
    const bool hidden = obs != Observability::FullyObserved;
    const Policy* policy = nullptr;
    std::unique_ptr<Policy> owned;
    const DirichletTable* table = nullptr;
    std::string popmodel = "-";
    DirichletTable expert;

    if (auto ext = control_.external_policies.find(name); ext != control_.external_policies.end()) {
      policy = ext->second;
      if (hidden && !control_.external_population_model) {
        expert = make_prior_table(course, population_preset(population).course_baseline);
        table = &expert;
        popmodel = "expert";
      }
    } else if (is_dqn) {
      auto& trained = dqn(course, population, obs, name);
      policy = trained.policy.get();
      if (hidden) {
        table = &trained.population_model;
        popmodel = "dqn@" + population;
      }
    } else {
      owned = heuristic(name);
      policy = owned.get();
      if (hidden && !control_.external_population_model) {
        table = &pretrained(course, population, obs, name, *policy);
        popmodel = "pretrained@" + population;
      }
    }
    if (hidden && control_.external_population_model) {
      table = control_.external_population_model;
      popmodel = "external";
    }
    progress("evaluating " + course_key(course) + " " + std::string(to_string(obs)) + " " + population + " " + name);
    const auto stats = evaluate(*policy, course, population, obs, table);
    out_.rows.push_back(make_row(course, population, obs, name, popmodel, stats));
  }

  void run_dist_shift() {
    const auto& train_pops = config_.dist_shift.train_populations;
    const auto& test_pops = config_.dist_shift.test_populations;
    for (auto ck : config_.courses) {
      for (auto sk : config_.structures) {
        for (double k_tau : config_.k_tau) {
          const Course course = course_for(ck, sk, k_tau);
          for (auto obs : config_.observability) {
            for (const auto& name : config_.policies) {
              // Policy trained on pp, population model trained on pm, students from pt.
              std::vector<const Policy*> policies;
              std::vector<std::unique_ptr<Policy>> owned;
              std::vector<const DirichletTable*> models;
              for (const auto& p : train_pops) {
                if (is_dqn_name(name)) {
                  auto& trained = dqn(course, p, obs, name);
                  policies.push_back(trained.policy.get());
                  models.push_back(&trained.population_model);
                } else {
                  owned.push_back(heuristic(name));
                  policies.push_back(owned.back().get());
                  models.push_back(obs == Observability::FullyObserved
                                       ? nullptr
                                       : &pretrained(course, p, obs, name, *owned.back()));
                }
              }
              const std::string model_label = is_dqn_name(name) ? "dqn@" : "pretrained@";
              for (std::size_t pm = 0; pm < train_pops.size(); ++pm) {
                for (std::size_t pp = 0; pp < train_pops.size(); ++pp) {
                  for (const auto& pt : test_pops) {
                    progress("evaluating shift " + name + " policy@" + train_pops[pp] + " model@" + train_pops[pm] +
                             " test " + pt);
                    const auto stats = evaluate(*policies[pp], course, pt, obs, models[pm]);
                    out_.rows.push_back(make_row(course, pt, obs, name + "@" + train_pops[pp],
                                                 models[pm] ? model_label + train_pops[pm] : "-", stats));
                  }
                }
              }
            }
          }
        }
      }
    }
  }

  const ExperimentConfig& config_;
  const RunControl& control_;
  std::string hash_;
  EnvironmentOptions env_;
  RunArtifacts out_;
  std::map<std::string, DirichletTable> popmodels_;
  std::map<std::string, TrainedDqn> dqns_;
};

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& config, const RunControl& control) {
  config.validate();
  return Runner(config, control).run();
}

RunArtifacts structure_suite(const ExperimentConfig& config, const RunControl& control) {
  if (config.kind != ExperimentKind::Structure) bad("structure_suite needs a Structure experiment config");
  for (auto ck : config.courses) {
    if (ck != CourseKind::FourConcept) bad("structure experiments use the four-concept course");
  }
  return run_experiment(config, control);
}

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.experiment + ',' + r.course + ',' + r.structure + ',' + r.population + ',' + r.observability + ',' +
           r.policy + ',' + r.population_model + ',' + fmt_g(r.k_tau) + ',' + fmt_g(r.test_reward_mean) + ',' +
           fmt_g(r.test_reward_std) + ',' + fmt_g(r.pass_rate) + ',' + std::to_string(r.episodes) + ',' +
           std::to_string(r.seed) + ',' + r.config_hash + '\n';
  }
  return out;
}

std::vector<ResultRow> parse_results_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyRows, "results file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) bad("unexpected results header");
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 14) bad("line " + std::to_string(lineno) + ": expected 14 fields");
    try {
      ResultRow r;
      r.experiment = f[0];
      r.course = f[1];
      r.structure = f[2];
      r.population = f[3];
      r.observability = f[4];
      r.policy = f[5];
      r.population_model = f[6];
      r.k_tau = std::stod(f[7]);
      r.test_reward_mean = std::stod(f[8]);
      r.test_reward_std = std::stod(f[9]);
      r.pass_rate = std::stod(f[10]);
      r.episodes = std::stoull(f[11]);
      r.seed = std::stoull(f[12]);
      r.config_hash = f[13];
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      bad("line " + std::to_string(lineno) + ": malformed number");
    }
  }
  if (rows.empty()) throw Error(ErrorCode::EmptyRows, "results file has no rows");
  return rows;
}

std::string format_reward(double reward) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", reward);
  return buf;
}

std::string format_percent(double rate) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * rate);
  return buf;
}

std::string report(const std::vector<ResultRow>& rows) {
  if (rows.empty()) throw Error(ErrorCode::EmptyRows, "nothing to report");
  const std::vector<std::string> header{"experiment", "course", "structure", "population", "observability",
                                        "policy",     "popmodel", "k_tau",   "reward",     "std",
                                        "pass",       "episodes", "seed",    "config"};
  std::vector<std::vector<std::string>> table{header};
  for (const auto& r : rows) {
    table.push_back({r.experiment, r.course, r.structure, r.population, r.observability, r.policy,
                     r.population_model, fmt_g(r.k_tau), format_reward(r.test_reward_mean),
                     format_reward(r.test_reward_std), format_percent(r.pass_rate), std::to_string(r.episodes),
                     std::to_string(r.seed), r.config_hash});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : table) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::string out;
  for (const auto& row : table) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out += row[i];
      if (i + 1 < row.size()) out += std::string(width[i] - row[i].size() + 2, ' ');
    }
    out += '\n';
  }
  return out;
}

void write_outputs(const RunArtifacts& artifacts, const ExperimentConfig& config, const std::string& directory) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + directory + ": " + ec.message());
  auto write = [&](const std::string& name, const std::string& body) {
    const auto path = (fs::path(directory) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    out << body;
  };
  write("results.csv", results_csv(artifacts.rows));
  write("resolved_config.json", resolved_config_json(config) + "\n");
  if (!artifacts.curves.empty()) {
    write("curves.csv", curves_csv(artifacts.curves.front().metrics));
    for (const auto& c : artifacts.curves) write("curves_" + c.tag + ".csv", curves_csv(c.metrics));
  }
  for (const auto& [tag, cp] : artifacts.checkpoints) write("checkpoint_" + tag + ".json", serialize_checkpoint(cp) + "\n");
  for (const auto& [tag, table] : artifacts.population_models) {
    write("popmodel_" + tag + ".json", serialize_table(table) + "\n");
  }
  if (config.write_episodes) write("episodes.jsonl", artifacts.episodes_jsonl);
}

}  // namespace simedu
