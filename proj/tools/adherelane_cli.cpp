// adherelane: train, evaluate, compare and replay lane-change recommenders.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "adherelane/harness.hpp"
#include "adherelane/run_config.hpp"

namespace {

namespace fs = std::filesystem;
using adherelane::PolicyKind;
using adherelane::RunConfig;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> episodes;
  std::optional<double> theta;
  std::string policy = "adherence";
};

void add_common(CLI::App* cmd, Common& c, bool with_policy) {
  cmd->add_option("--config", c.config, "INI run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "base seed for training and evaluation");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--episodes", c.episodes, "training (train) or evaluation episodes");
  cmd->add_option("--theta", c.theta, "true adherence level")->check(CLI::Range(0.0, 1.0));
  if (with_policy) {
    cmd->add_option("--policy", c.policy, "baseline, regular or adherence")
        ->check(CLI::IsMember({"baseline", "regular", "adherence"}));
  }
}

enum class Verb { kTrain, kEval, kCompare, kReplay };

RunConfig resolve(const Common& c, Verb verb) {
  RunConfig cfg = c.config.empty() ? adherelane::default_run_config()
                                   : adherelane::load_run_config(c.config);
  if (c.seed) {
    cfg.train.seed = *c.seed;
    cfg.eval.seed = *c.seed;
  }
  if (c.out) cfg.output_dir = *c.out;
  if (c.episodes) {
    if (verb == Verb::kTrain) {
      cfg.train.episodes = *c.episodes;
    } else {
      cfg.eval.episodes = *c.episodes;
    }
  }
  if (c.theta) cfg.train.theta_true = *c.theta;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adherence-aware lane-change recommendation experiments"};
  app.require_subcommand(1);

  Common common;
  bool resume = false;
  bool no_train = false;
  std::string log_path;

  auto* train = app.add_subcommand("train", "train a recommender, write checkpoint and curves");
  add_common(train, common, true);
  train->add_flag("--resume", resume, "continue from the existing checkpoint");

  auto* eval = app.add_subcommand("eval", "evaluate one policy, write metrics and episode logs");
  add_common(eval, common, true);

  auto* compare = app.add_subcommand("compare", "evaluate baseline, regular and adherence-aware");
  add_common(compare, common, false);
  compare->add_flag("--no-train", no_train, "fail instead of training missing checkpoints");

  auto* replay = app.add_subcommand("replay", "re-simulate an episode log and check it matches");
  add_common(replay, common, false);
  replay->add_option("log", log_path, "episode log (.jsonl)")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const RunConfig cfg = resolve(common, Verb::kTrain);
      const PolicyKind kind = adherelane::policy_from_string(common.policy);
      const auto res = adherelane::run_train(cfg, kind, resume, &std::cout);
      std::cout << "trained " << res.curves.size() << " episodes, theta_hat "
                << res.state.estimator.theta_hat() << "\ncheckpoint "
                << adherelane::checkpoint_path(cfg, kind).string() << "\ncurves "
                << adherelane::curves_path(cfg, kind).string() << '\n';
    } else if (eval->parsed()) {
      const RunConfig cfg = resolve(common, Verb::kEval);
      const PolicyKind kind = adherelane::policy_from_string(common.policy);
      const auto outcomes = adherelane::run_eval(cfg, adherelane::load_policy(cfg, kind));
      const std::vector<adherelane::MetricsRow> rows{adherelane::aggregate(kind, outcomes)};
      fs::create_directories(cfg.output_dir);
      std::ofstream csv(cfg.output_dir / "metrics.csv");
      adherelane::write_metrics_csv(csv, rows, cfg.eval.reward_shift);
      adherelane::write_metrics_table(std::cout, rows, cfg.eval.reward_shift);
      if (!csv) throw std::runtime_error("failed writing metrics.csv");
    } else if (compare->parsed()) {
      const RunConfig cfg = resolve(common, Verb::kCompare);
      adherelane::run_compare(cfg, !no_train, &std::cout);
    } else if (replay->parsed()) {
      const RunConfig cfg = resolve(common, Verb::kReplay);
      std::ifstream in(log_path);
      const auto log = adherelane::read_episode_log(in);
      const auto report = adherelane::replay_episode(cfg, log);
      if (report.mismatches > 0) {
        std::cout << "replay MISMATCH (" << report.mismatches << " of " << report.steps
                  << " steps), first at " << report.first_mismatch << '\n';
        return 1;
      }
      std::cout << "replay OK: " << report.steps << " steps reproduced\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
