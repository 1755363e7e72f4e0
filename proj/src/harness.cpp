#include "adherelane/harness.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "adherelane/checkpoint.hpp"
#include "json.hpp"

namespace adherelane {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::kBaseline:
      return "baseline";
    case PolicyKind::kRegular:
      return "regular";
    case PolicyKind::kAdherence:
      return "adherence";
  }
  return "baseline";
}

PolicyKind policy_from_string(std::string_view s) {
  if (s == "baseline") return PolicyKind::kBaseline;
  if (s == "regular") return PolicyKind::kRegular;
  if (s == "adherence") return PolicyKind::kAdherence;
  throw std::invalid_argument("unknown policy '" + std::string(s) + "'");
}

dqn::TargetKind target_kind(PolicyKind k) {
  switch (k) {
    case PolicyKind::kRegular:
      return dqn::TargetKind::kRegular;
    case PolicyKind::kAdherence:
      return dqn::TargetKind::kAdherence;
    case PolicyKind::kBaseline:
      break;
  }
  throw std::invalid_argument("the baseline policy is not trained");
}

namespace {

enum Stream : std::uint64_t { kTraffic = 0, kCompliance = 1, kBaseline = 2 };

// Keeps evaluation streams disjoint from the training streams.
constexpr std::uint64_t kEvalStreamOffset = 8;

}  // namespace

std::uint64_t eval_stream_seed(std::uint64_t base, int episode, std::uint64_t stream) {
  return dqn::episode_seed(base, static_cast<std::uint64_t>(episode),
                           stream + kEvalStreamOffset);
}

EpisodeOutcome run_episode(const RunConfig& cfg, const Policy& policy, int episode) {
  const std::uint64_t base = cfg.eval.seed;
  EpisodeOutcome out;
  out.policy = policy.kind;
  out.episode = episode;
  out.traffic_seed = eval_stream_seed(base, episode, kTraffic);

  LaneChangeEnv env(cfg.env);
  ComplianceModel compliance(cfg.train.theta_true,
                             eval_stream_seed(base, episode, kCompliance));
  Rng baseline_rng(eval_stream_seed(base, episode, kBaseline));
  AdherenceEstimator estimator = policy.estimator;
  const RewardWeights& w = cfg.env.weights;

  Observation obs = env.reset(out.traffic_seed);
  while (!env.done()) {
    StepRecord rec;
    rec.step = env.steps();
    rec.time = env.elapsed();
    rec.s = obs.ego.s;
    rec.v = obs.ego.v;
    rec.lane = obs.ego.lane;
    rec.baseline = baseline_action(obs, cfg.baseline, baseline_rng);
    if (policy.kind == PolicyKind::kBaseline) {
      rec.executed = rec.baseline;
    } else {
      rec.recommended =
          action_from_index(dqn::greedy_action(dqn::forward(policy.params, obs.features)));
      const Execution exe = sample_execution(compliance, *rec.recommended, rec.baseline);
      rec.executed = exe.executed;
      rec.complied = exe.complied;
      estimator.update(exe.complied);
    }
    rec.theta_hat = estimator.theta_hat();

    const StepResult res = env.step(rec.executed);
    rec.reward = res.reward;
    rec.penalty = res.terminal_penalty;
    rec.total = res.total_reward();
    rec.done = res.done;
    rec.done_reason = res.done_reason;

    out.cumulative_reward += rec.total;
    out.speed_reward -= w.alpha1 * rec.reward.speed_term;
    out.lane_reward -= w.alpha2 * rec.reward.lane_cost;
    out.safety_reward -= w.alpha3 * rec.reward.safety_cost;
    out.missing_reward -= w.alpha4 * rec.reward.missing_cost;
    out.penalty += rec.penalty;
    if (res.done_reason) out.done_reason = *res.done_reason;
    out.steps.push_back(rec);
    obs = res.next_observation;
  }
  out.travel_time = env.elapsed();
  out.distance = env.ego_position() - env.ego_start();
  out.avg_speed_kmh = out.travel_time > 0.0 ? out.distance / out.travel_time * 3.6 : 0.0;
  return out;
}

std::vector<EpisodeOutcome> evaluate(const RunConfig& cfg, const Policy& policy) {
  const int n = cfg.eval.episodes;
  if (n <= 0) throw std::invalid_argument("evaluate: episode count must be > 0");
  std::vector<EpisodeOutcome> results(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        results[static_cast<std::size_t>(i)] = run_episode(cfg, policy, i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min(cfg.eval.threads, n));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

MetricsRow aggregate(PolicyKind kind, const std::vector<EpisodeOutcome>& outcomes) {
  if (outcomes.empty()) throw std::invalid_argument("aggregate: no episodes");
  MetricsRow row;
  row.policy = std::string(to_string(kind));
  row.episodes = static_cast<int>(outcomes.size());
  std::vector<double> speed, time, reward;
  for (const auto& o : outcomes) {
    speed.push_back(o.avg_speed_kmh);
    time.push_back(o.travel_time);
    reward.push_back(o.cumulative_reward);
    row.speed_reward += o.speed_reward;
    row.lane_cost += o.lane_reward;
    row.safety_cost += o.safety_reward;
    row.missing_cost += o.missing_reward;
    if (o.done_reason == DoneReason::kCollision) ++row.collisions;
    if (o.done_reason == DoneReason::kArrived) ++row.arrivals;
  }
  const double n = static_cast<double>(outcomes.size());
  row.speed_reward /= n;
  row.lane_cost /= n;
  row.safety_cost /= n;
  row.missing_cost /= n;
  row.avg_speed_kmh = stats::mean(speed);
  row.avg_speed_se = stats::standard_error(speed);
  row.travel_time = stats::mean(time);
  row.travel_time_se = stats::standard_error(time);
  row.reward = stats::mean(reward);
  row.reward_se = stats::standard_error(reward);
  return row;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows,
                       double reward_shift) {
  out << "policy,episodes,avg_speed_kmh,avg_speed_se,travel_time_s,travel_time_se,"
         "reward,reward_se,reward_shifted,speed_reward,lane_cost,safety_cost,"
         "missing_cost,collisions,arrivals\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.policy << ',' << r.episodes << ',' << r.avg_speed_kmh << ','
        << r.avg_speed_se << ',' << r.travel_time << ',' << r.travel_time_se << ','
        << r.reward << ',' << r.reward_se << ',' << r.reward + reward_shift << ','
        << r.speed_reward << ',' << r.lane_cost << ',' << r.safety_cost << ','
        << r.missing_cost << ',' << r.collisions << ',' << r.arrivals << '\n';
  }
}

void write_metrics_table(std::ostream& out, const std::vector<MetricsRow>& rows,
                         double reward_shift) {
  char line[512];
  std::snprintf(line, sizeof(line), "%-10s %16s %16s %18s %9s %9s %9s %9s %5s\n",
                "policy", "speed [km/h]", "travel time [s]", "reward", "speed",
                "lane", "safety", "missing", "coll");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line),
                  "%-10s %8.2f +- %4.2f %8.2f +- %4.2f %10.2f +- %5.2f %9.2f "
                  "%9.2f %9.2f %9.2f %5d\n",
                  r.policy.c_str(), r.avg_speed_kmh, r.avg_speed_se, r.travel_time,
                  r.travel_time_se, r.reward, r.reward_se, r.speed_reward,
                  r.lane_cost, r.safety_cost, r.missing_cost, r.collisions);
    out << line;
  }
  if (reward_shift != 0.0) {
    out << "shifted reward (raw + " << reward_shift << "):";
    for (const auto& r : rows) out << ' ' << r.policy << '=' << r.reward + reward_shift;
    out << '\n';
  }
}

namespace {

json action_or_null(const std::optional<Action>& a) {
  return a ? json(std::string(to_string(*a))) : json(nullptr);
}

std::optional<Action> parse_optional_action(const json& j) {
  if (j.is_null()) return std::nullopt;
  return action_from_string(j.get<std::string>());
}

DoneReason done_reason_from_string(const std::string& s) {
  for (DoneReason r : {DoneReason::kArrived, DoneReason::kCollision, DoneReason::kMaxSteps}) {
    if (to_string(r) == s) return r;
  }
  throw std::invalid_argument("unknown done reason '" + s + "'");
}

}  // namespace

void write_episode_log(std::ostream& out, const EpisodeOutcome& outcome) {
  for (const auto& r : outcome.steps) {
    json j;
    j["policy"] = std::string(to_string(outcome.policy));
    j["episode"] = outcome.episode;
    j["seed"] = outcome.traffic_seed;
    j["step"] = r.step;
    j["t"] = r.time;
    j["ego"] = {{"s", r.s}, {"v", r.v}, {"l", r.lane}};
    j["recommended"] = action_or_null(r.recommended);
    j["baseline"] = std::string(to_string(r.baseline));
    j["executed"] = std::string(to_string(r.executed));
    j["complied"] = r.complied ? json(*r.complied) : json(nullptr);
    j["reward"] = {{"speed", r.reward.speed_term},
                   {"lane", r.reward.lane_cost},
                   {"safety", r.reward.safety_cost},
                   {"missing", r.reward.missing_cost},
                   {"step_total", r.reward.total}};
    j["penalty"] = r.penalty;
    j["total"] = r.total;
    j["theta_hat"] = r.theta_hat;
    j["done"] = r.done;
    j["done_reason"] = r.done_reason ? json(std::string(to_string(*r.done_reason)))
                                     : json(nullptr);
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("failed to write episode log");
}

EpisodeLog read_episode_log(std::istream& in) {
  EpisodeLog log;
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (log.steps.empty()) {
        log.policy = policy_from_string(j.at("policy").get<std::string>());
        log.episode = j.at("episode").get<int>();
        log.traffic_seed = j.at("seed").get<std::uint64_t>();
      } else if (j.at("seed").get<std::uint64_t>() != log.traffic_seed) {
        throw std::runtime_error("records from more than one episode");
      }
      StepRecord r;
      r.step = j.at("step").get<int>();
      r.time = j.at("t").get<double>();
      r.s = j.at("ego").at("s").get<double>();
      r.v = j.at("ego").at("v").get<double>();
      r.lane = j.at("ego").at("l").get<int>();
      r.recommended = parse_optional_action(j.at("recommended"));
      r.baseline = action_from_string(j.at("baseline").get<std::string>());
      r.executed = action_from_string(j.at("executed").get<std::string>());
      if (!j.at("complied").is_null()) r.complied = j.at("complied").get<bool>();
      const json& rw = j.at("reward");
      r.reward.speed_term = rw.at("speed").get<double>();
      r.reward.lane_cost = rw.at("lane").get<double>();
      r.reward.safety_cost = rw.at("safety").get<double>();
      r.reward.missing_cost = rw.at("missing").get<double>();
      r.reward.total = rw.at("step_total").get<double>();
      r.penalty = j.at("penalty").get<double>();
      r.total = j.at("total").get<double>();
      r.theta_hat = j.at("theta_hat").get<double>();
      r.done = j.at("done").get<bool>();
      if (!j.at("done_reason").is_null()) {
        r.done_reason = done_reason_from_string(j.at("done_reason").get<std::string>());
      }
      log.steps.push_back(r);
    } catch (const std::exception& e) {
      throw std::runtime_error("episode log line " + std::to_string(no) + ": " + e.what());
    }
  }
  if (log.steps.empty()) throw std::runtime_error("episode log is empty");
  return log;
}

ReplayReport replay_episode(const RunConfig& cfg, const EpisodeLog& log) {
  ReplayReport report;
  LaneChangeEnv env(cfg.env);
  Observation obs = env.reset(log.traffic_seed);
  auto mismatch = [&](int step, const std::string& what) {
    if (report.mismatches++ == 0) {
      report.first_mismatch = "step " + std::to_string(step) + ": " + what;
    }
  };
  for (const auto& r : log.steps) {
    if (env.done()) {
      mismatch(r.step, "episode already finished");
      break;
    }
    if (obs.ego.s != r.s || obs.ego.v != r.v || obs.ego.lane != r.lane ||
        env.elapsed() != r.time) {
      mismatch(r.step, "ego state differs");
    }
    const StepResult res = env.step(r.executed);
    if (res.total_reward() != r.total || res.done != r.done) {
      mismatch(r.step, "reward or termination differs");
    }
    obs = res.next_observation;
    ++report.steps;
  }
  return report;
}

fs::path policy_dir(const RunConfig& cfg, PolicyKind kind) {
  return cfg.output_dir / std::string(to_string(kind));
}

fs::path checkpoint_path(const RunConfig& cfg, PolicyKind kind) {
  return policy_dir(cfg, kind) / "checkpoint.txt";
}

fs::path curves_path(const RunConfig& cfg, PolicyKind kind) {
  return policy_dir(cfg, kind) / "curves.csv";
}

void write_curves_header(std::ostream& out) {
  out << "episode,loss,reward,theta_hat,epsilon,steps\n";
}

void write_curve_row(std::ostream& out, const dqn::CurvePoint& p) {
  out << p.episode << ',' << std::setprecision(10) << p.loss << ',' << p.reward
      << ',' << p.theta_hat << ',' << p.epsilon << ',' << p.steps << '\n';
}

dqn::TrainResult run_train(const RunConfig& cfg, PolicyKind kind, bool resume,
                           std::ostream* progress) {
  dqn::TrainConfig tc = cfg.train;
  tc.target = target_kind(kind);
  const fs::path dir = policy_dir(cfg, kind);
  fs::create_directories(dir);

  std::optional<dqn::TrainState> start;
  if (resume) start = dqn::load_checkpoint(checkpoint_path(cfg, kind));

  std::ofstream curves(curves_path(cfg, kind),
                       resume ? std::ios::app : std::ios::trunc);
  if (!curves) throw std::runtime_error("cannot write " + curves_path(cfg, kind).string());
  if (!resume) write_curves_header(curves);
  {
    std::ofstream snapshot(dir / "config.ini");
    write_run_config(snapshot, cfg);
  }

  const int report_every = std::max(1, tc.episodes / 20);
  int seen = 0;
  auto on_episode = [&](const dqn::CurvePoint& p) {
    write_curve_row(curves, p);
    if (progress != nullptr && ++seen % report_every == 0) {
      *progress << to_string(kind) << ": episode " << p.episode + 1 << " reward "
                << p.reward << " loss " << p.loss << " theta_hat " << p.theta_hat
                << std::endl;
    }
  };
  dqn::TrainResult result =
      dqn::train(cfg.env, cfg.baseline, tc, start ? &*start : nullptr, on_episode);
  curves.flush();
  if (!curves) throw std::runtime_error("failed writing " + curves_path(cfg, kind).string());
  dqn::save_checkpoint(checkpoint_path(cfg, kind), result.state);
  return result;
}

Policy load_policy(const RunConfig& cfg, PolicyKind kind) {
  Policy p;
  p.kind = kind;
  if (kind == PolicyKind::kBaseline) return p;
  const dqn::TrainState state = dqn::load_checkpoint(checkpoint_path(cfg, kind));
  p.params = state.params;
  p.estimator = state.estimator;
  return p;
}

std::vector<EpisodeOutcome> run_eval(const RunConfig& cfg, const Policy& policy) {
  std::vector<EpisodeOutcome> outcomes = evaluate(cfg, policy);
  const int logs = std::min<int>(cfg.eval.log_episodes, static_cast<int>(outcomes.size()));
  if (logs > 0) {
    const fs::path dir = cfg.output_dir / "episodes";
    fs::create_directories(dir);
    for (int i = 0; i < logs; ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%03d.jsonl",
                    std::string(to_string(policy.kind)).c_str(), i);
      std::ofstream out(dir / name);
      if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
      write_episode_log(out, outcomes[static_cast<std::size_t>(i)]);
    }
  }
  return outcomes;
}

CompareResult run_compare(const RunConfig& cfg, bool train_missing,
                          std::ostream* progress) {
  for (PolicyKind k : {PolicyKind::kRegular, PolicyKind::kAdherence}) {
    if (!fs::exists(checkpoint_path(cfg, k))) {
      if (!train_missing) {
        throw std::runtime_error("checkpoint not found: " + checkpoint_path(cfg, k).string());
      }
      run_train(cfg, k, false, progress);
    }
  }

  CompareResult res;
  std::vector<std::vector<double>> rewards;
  for (PolicyKind k : {PolicyKind::kBaseline, PolicyKind::kRegular, PolicyKind::kAdherence}) {
    res.outcomes.push_back(run_eval(cfg, load_policy(cfg, k)));
    res.rows.push_back(aggregate(k, res.outcomes.back()));
    std::vector<double> r;
    for (const auto& o : res.outcomes.back()) r.push_back(o.cumulative_reward);
    rewards.push_back(std::move(r));
  }
  auto test = [&](int better, int worse) {
    res.tests.push_back({res.rows[better].policy, res.rows[worse].policy,
                         stats::wilcoxon_signed_rank_greater(rewards[better], rewards[worse])});
  };
  test(2, 1);
  test(1, 0);
  test(2, 0);
  res.travel_time_reduction =
      (res.rows[0].travel_time - res.rows[2].travel_time) / res.rows[0].travel_time;

  fs::create_directories(cfg.output_dir);
  std::ofstream csv(cfg.output_dir / "metrics.csv");
  write_metrics_csv(csv, res.rows, cfg.eval.reward_shift);
  std::ostringstream table;
  write_metrics_table(table, res.rows, cfg.eval.reward_shift);
  table << "\npaired one-sided Wilcoxon signed-rank on episode reward:\n";
  for (const auto& t : res.tests) {
    table << "  " << t.better << " > " << t.worse << ": W+ = " << t.result.w_plus
          << ", n = " << t.result.n_nonzero << ", p = " << t.result.p_value
          << (t.result.exact ? " (exact)" : " (normal approx.)") << '\n';
  }
  table << "travel time reduction (adherence vs baseline): "
        << 100.0 * res.travel_time_reduction << "%\n";
  std::ofstream txt(cfg.output_dir / "metrics.txt");
  txt << table.str();
  if (progress != nullptr) *progress << table.str();
  if (!csv || !txt) throw std::runtime_error("failed writing metrics");
  return res;
}

}  // namespace adherelane
