#pragma once

// Experiment runner: seeded evaluation rollouts, the comparison metrics,
// line-delimited episode logs and their replay, and the train/compare
// pipelines behind the command-line tool.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adherelane/dqn.hpp"
#include "adherelane/run_config.hpp"
#include "adherelane/stats.hpp"

namespace adherelane {

enum class PolicyKind : std::uint8_t { kBaseline, kRegular, kAdherence };
std::string_view to_string(PolicyKind k);
// Accepts "baseline", "regular", "adherence".
PolicyKind policy_from_string(std::string_view s);
dqn::TargetKind target_kind(PolicyKind k);

struct Policy {
  PolicyKind kind = PolicyKind::kBaseline;
  // Unused by the baseline.
  dqn::MlpParams params;
  AdherenceEstimator estimator;
};

// One decision step, with the ego state observed before acting.
struct StepRecord {
  int step = 0;
  double time = 0.0;
  double s = 0.0;
  double v = 0.0;
  int lane = 1;
  std::optional<Action> recommended;
  Action baseline = Action::kKeep;
  Action executed = Action::kKeep;
  std::optional<bool> complied;
  RewardBreakdown reward;
  double penalty = 0.0;
  double total = 0.0;
  double theta_hat = 0.0;
  bool done = false;
  std::optional<DoneReason> done_reason;
};

struct EpisodeOutcome {
  PolicyKind policy = PolicyKind::kBaseline;
  int episode = 0;
  std::uint64_t traffic_seed = 0;
  std::vector<StepRecord> steps;
  double cumulative_reward = 0.0;
  // Weighted contributions (each <= 0) and the collision penalty total.
  double speed_reward = 0.0;
  double lane_reward = 0.0;
  double safety_reward = 0.0;
  double missing_reward = 0.0;
  double penalty = 0.0;
  double travel_time = 0.0;
  double distance = 0.0;
  double avg_speed_kmh = 0.0;
  DoneReason done_reason = DoneReason::kMaxSteps;
};

// Stream seed for evaluation episode `episode`; shared by all policies so
// that comparisons see identical traffic, compliance and baseline draws.
std::uint64_t eval_stream_seed(std::uint64_t base, int episode, std::uint64_t stream);

// Greedy recommendation for the learned policies, compliance drawn with
// theta_true; the baseline executes its own action.
EpisodeOutcome run_episode(const RunConfig& cfg, const Policy& policy, int episode);

// cfg.eval.episodes episodes on cfg.eval.threads workers, ordered by episode.
std::vector<EpisodeOutcome> evaluate(const RunConfig& cfg, const Policy& policy);

struct MetricsRow {
  std::string policy;
  int episodes = 0;
  double avg_speed_kmh = 0.0;
  double avg_speed_se = 0.0;
  double travel_time = 0.0;
  double travel_time_se = 0.0;
  double reward = 0.0;
  double reward_se = 0.0;
  double speed_reward = 0.0;
  double lane_cost = 0.0;
  double safety_cost = 0.0;
  double missing_cost = 0.0;
  int collisions = 0;
  int arrivals = 0;
};

MetricsRow aggregate(PolicyKind kind, const std::vector<EpisodeOutcome>& outcomes);
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows,
                       double reward_shift);
void write_metrics_table(std::ostream& out, const std::vector<MetricsRow>& rows,
                         double reward_shift);

// One JSON object per decision step.
void write_episode_log(std::ostream& out, const EpisodeOutcome& outcome);
struct EpisodeLog {
  PolicyKind policy = PolicyKind::kBaseline;
  int episode = 0;
  std::uint64_t traffic_seed = 0;
  std::vector<StepRecord> steps;
};
// Throws std::runtime_error naming the line of a malformed record.
EpisodeLog read_episode_log(std::istream& in);

struct ReplayReport {
  int steps = 0;
  int mismatches = 0;
  std::string first_mismatch;
};
// Re-runs the logged traffic seed with the logged executed actions and
// compares the ego state and reward at every step bit for bit.
ReplayReport replay_episode(const RunConfig& cfg, const EpisodeLog& log);

std::filesystem::path policy_dir(const RunConfig& cfg, PolicyKind kind);
std::filesystem::path checkpoint_path(const RunConfig& cfg, PolicyKind kind);
std::filesystem::path curves_path(const RunConfig& cfg, PolicyKind kind);

// Trains one learner and writes checkpoint.txt and curves.csv under
// <out>/<policy>/. With `resume`, continues from the existing checkpoint and
// appends to the curves file.
dqn::TrainResult run_train(const RunConfig& cfg, PolicyKind kind, bool resume,
                           std::ostream* progress = nullptr);

// Baseline needs no checkpoint. Throws std::runtime_error naming the path
// when a learned policy's checkpoint is missing.
Policy load_policy(const RunConfig& cfg, PolicyKind kind);

// Evaluates and writes <out>/episodes/<policy>_<episode>.jsonl for the first
// cfg.eval.log_episodes episodes.
std::vector<EpisodeOutcome> run_eval(const RunConfig& cfg, const Policy& policy);

struct PairedTest {
  std::string better;
  std::string worse;
  stats::WilcoxonResult result;
};

struct CompareResult {
  std::vector<MetricsRow> rows;  // baseline, regular, adherence
  std::vector<std::vector<EpisodeOutcome>> outcomes;
  std::vector<PairedTest> tests;
  // (baseline - adherence) / baseline mean travel time.
  double travel_time_reduction = 0.0;
};

// Loads (or, with `train_missing`, trains) both learners, evaluates the three
// policies on identical seeds and writes metrics.csv and metrics.txt.
CompareResult run_compare(const RunConfig& cfg, bool train_missing,
                          std::ostream* progress = nullptr);

void write_curves_header(std::ostream& out);
void write_curve_row(std::ostream& out, const dqn::CurvePoint& p);

}  // namespace adherelane
