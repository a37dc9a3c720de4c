#include "simedu/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "simedu/dqn.hpp"
#include "simedu/harness.hpp"
#include "simedu/parallel.hpp"

namespace simedu::cli {

namespace {

constexpr const char* kSeedHelp =
    "Root seed. Precedence: --seed, then the SIMEDU_SEED environment variable, then the config's \"seed\", "
    "then 42.";

struct Options {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::optional<std::size_t> episodes;
  std::string checkpoint;
  std::string popmodel;
  std::string results;
};

// Thrown for problems with the inputs named on the command line.
struct InputError {
  std::string message;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError{"cannot read " + path};
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

ExperimentConfig load_config(const Options& o) {
  ExperimentConfig config;
  try {
    config = parse_experiment_config(read_file(o.config));
    if (!o.seed) {
      if (const char* env = std::getenv("SIMEDU_SEED"); env && *env) {
        std::size_t used = 0;
        const std::string text(env);
        try {
          config.seed = std::stoull(text, &used);
        } catch (const std::logic_error&) {
          used = 0;
        }
        if (used != text.size()) throw InputError{"SIMEDU_SEED must be an unsigned integer"};
      }
    } else {
      config.seed = *o.seed;
    }
    if (o.episodes) config.episodes = *o.episodes;
    config.validate();
  } catch (const Error& e) {
    throw InputError{e.what()};
  }
  return config;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("config", o.config, "Experiment config (JSON)")->required();
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", o.seed, kSeedHelp);
  cmd->add_option("--jobs", o.jobs, "Worker threads (default: available parallelism)")->check(CLI::PositiveNumber);
  cmd->add_option("--episodes", o.episodes, "Episodes per cell (at least 100)");
}

int execute(const ExperimentConfig& config, const RunControl& control, const Options& o, std::ostream& out,
            std::ostream& err) {
  try {
    const auto artifacts = run_experiment(config, control);
    write_outputs(artifacts, config, o.out);
    out << report(artifacts.rows);
    out << "wrote " << artifacts.rows.size() << " rows to " << (std::filesystem::path(o.out) / "results.csv").string()
        << '\n';
    return kExitOk;
  } catch (const RunFailure& failure) {
    try {
      write_outputs(failure.partial(), config, o.out);
      std::ofstream marker(std::filesystem::path(o.out) / "results.csv", std::ios::app);
      marker << "# FAILED: " << failure.what() << '\n';
    } catch (const Error& e) {
      err << "error: could not flush partial results: " << e.what() << '\n';
    }
    err << "error: " << failure.what() << '\n';
    return kExitRuntime;
  }
}

RunControl control_for(const Options& o, std::ostream& err) {
  RunControl control;
  control.jobs = o.jobs.value_or(default_jobs());
  control.progress = [&err](const std::string& msg) { err << msg << '\n'; };
  return control;
}

std::string space_policy_name(ActionSpaceKind kind) {
  switch (kind) {
    case ActionSpaceKind::NoProbe:
      return "DQN";
    case ActionSpaceKind::Probe:
      return "DQN-Probe";
    case ActionSpaceKind::All:
      return "DQN-All";
  }
  return "DQN";
}

int run_command(const std::string& name, const Options& o, std::ostream& out, std::ostream& err) {
  if (name == "report") {
    const auto rows = parse_results_csv(read_file(o.results));
    out << report(rows);
    return kExitOk;
  }

  ExperimentConfig config = load_config(o);
  if (name == "validate") {
    out << resolved_config_json(config) << '\n';
    return kExitOk;
  }

  RunControl control = control_for(o, err);
  if (name == "simulate") return execute(config, control, o, out, err);

  if (name == "sweep") {
    if (config.k_tau.size() < 2) throw InputError{"sweep needs at least two k_tau values"};
    return execute(config, control, o, out, err);
  }

  if (name == "train") {
    std::vector<std::string> dqn;
    for (const auto& p : config.policies) {
      if (is_dqn_name(p)) dqn.push_back(p);
    }
    if (dqn.empty()) throw InputError{"config lists no DQN policy to train"};
    config.policies = dqn;
    return execute(config, control, o, out, err);
  }

  // evaluate
  Checkpoint checkpoint;
  std::optional<DirichletTable> table;
  try {
    checkpoint = parse_checkpoint(read_file(o.checkpoint));
    if (!o.popmodel.empty()) table = parse_table(read_file(o.popmodel));
  } catch (const Error& e) {
    throw InputError{e.what()};
  }
  for (auto ck : config.courses) {
    for (auto sk : config.structures) {
      if (build_course(ck, sk, config.course_constants).graph.size() != checkpoint.num_concepts) {
        throw InputError{"checkpoint was trained for " + std::to_string(checkpoint.num_concepts) +
                         " concepts; course " + std::string(to_string(ck)) + " differs"};
      }
    }
  }
  const std::string policy_name = space_policy_name(checkpoint.action_space);
  const DqnPolicy policy(checkpoint.net, ActionSpace(checkpoint.action_space, checkpoint.num_concepts),
                         config.catalog);
  control.external_policies[policy_name] = &policy;
  if (table) control.external_population_model = &*table;
  std::vector<std::string> policies;
  for (const auto& p : config.policies) {
    if (!is_dqn_name(p) || p == policy_name) policies.push_back(p);
  }
  if (std::find(policies.begin(), policies.end(), policy_name) == policies.end()) policies.push_back(policy_name);
  config.policies = policies;
  return execute(config, control, o, out, err);
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"simedu: simulated students, tutoring policies and experiment runner"};
  app.require_subcommand(1);
  app.footer(std::string("Exit codes: 0 ok, 1 runtime failure, 2 usage error, 3 config error.\n") + kSeedHelp);

  Options o;
  add_common(app.add_subcommand("validate", "Check a config and print it with defaults filled in"), o);
  add_common(app.add_subcommand("simulate", "Run every cell of an experiment config"), o);
  add_common(app.add_subcommand("train", "Train the config's DQN policies and evaluate them"), o);
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a saved DQN checkpoint under a config");
  add_common(evaluate, o);
  evaluate->add_option("--checkpoint", o.checkpoint, "DQN checkpoint (JSON)")->required();
  evaluate->add_option("--popmodel", o.popmodel, "Population model used for belief tracking (JSON)");
  add_common(app.add_subcommand("sweep", "Run a config across its k_tau list"), o);
  auto* rep = app.add_subcommand("report", "Render a results.csv as a table");
  rep->add_option("results", o.results, "results.csv path")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return run_command(name, o, out, err);
  } catch (const InputError& e) {
    err << "error: " << e.message << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return name == "report" ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace simedu::cli
