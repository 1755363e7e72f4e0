#include "adherelane/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace adherelane {

void EvalConfig::validate() const {
  if (episodes <= 0) throw std::invalid_argument("eval: episodes must be > 0");
  if (threads <= 0) throw std::invalid_argument("eval: threads must be > 0");
  if (log_episodes < 0) throw std::invalid_argument("eval: log_episodes must be >= 0");
}

void RunConfig::validate() const {
  env.validate();
  baseline.validate();
  train.validate();
  eval.validate();
}

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.env.traffic.fixed_vehicles = {
      {1, 35.0, 7.0, 7.0, sim::Route::kStraight},
      {1, 70.0, 6.5, 6.5, sim::Route::kStraight},
      {2, 45.0, 9.0, 9.0, sim::Route::kStraight},
      {2, 120.0, 4.0, 4.0, sim::Route::kRight},
      {3, 150.0, 8.0, 8.0, sim::Route::kStraight},
      {4, 90.0, 10.0, 10.0, sim::Route::kRight},
  };
  return cfg;
}

namespace {

namespace pt = boost::property_tree;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  return v;
}

long long parse_integer(const std::string& s) {
  long long v = 0;
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw std::invalid_argument("expected an integer, got '" + s + "'");
  }
  return v;
}

int parse_int(const std::string& s) { return static_cast<int>(parse_integer(s)); }

std::uint64_t parse_u64(const std::string& s) {
  const long long v = parse_integer(s);
  if (v < 0) throw std::invalid_argument("expected a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

std::string route_name(sim::Route r) {
  switch (r) {
    case sim::Route::kAny:
      return "any";
    case sim::Route::kStraight:
      return "straight";
    case sim::Route::kRight:
      return "right";
  }
  return "any";
}

sim::Route parse_route(const std::string& s) {
  if (s == "any") return sim::Route::kAny;
  if (s == "straight") return sim::Route::kStraight;
  if (s == "right") return sim::Route::kRight;
  throw std::invalid_argument("unknown route '" + s + "'");
}

std::string format_lanes(const std::vector<int>& lanes) {
  std::string out;
  for (int l : lanes) out += (out.empty() ? "" : " ") + std::to_string(l);
  return out;
}

std::vector<int> parse_lanes(const std::string& s) {
  std::istringstream in(s);
  std::vector<int> out;
  std::string tok;
  while (in >> tok) out.push_back(parse_int(tok));
  return out;
}

std::string format_fixed(const std::vector<sim::SpawnSpec>& vs) {
  std::string out;
  for (const auto& v : vs) {
    if (!out.empty()) out += "; ";
    out += std::to_string(v.lane) + " " + format_double(v.s) + " " +
           format_double(v.v_desired) + " " + route_name(v.route);
  }
  return out;
}

// "lane s v_desired route; ..."; vehicles start at their desired speed.
std::vector<sim::SpawnSpec> parse_fixed(const std::string& s) {
  std::vector<sim::SpawnSpec> out;
  std::istringstream all(s);
  std::string entry;
  while (std::getline(all, entry, ';')) {
    std::istringstream in(entry);
    std::vector<std::string> toks;
    std::string tok;
    while (in >> tok) toks.push_back(tok);
    if (toks.empty()) continue;
    if (toks.size() != 4) {
      throw std::invalid_argument("fixed vehicle needs 'lane s v_desired route', got '" +
                                  entry + "'");
    }
    sim::SpawnSpec v;
    v.lane = parse_int(toks[0]);
    v.s = parse_double(toks[1]);
    v.v_desired = parse_double(toks[2]);
    v.v = v.v_desired;
    v.route = parse_route(toks[3]);
    out.push_back(v);
  }
  return out;
}

struct Binding {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define BIND_DOUBLE(sec, key, field)                                        \
  Binding {                                                                 \
    sec, key, [](const RunConfig& c) { return format_double(c.field); },    \
        [](RunConfig& c, const std::string& v) { c.field = parse_double(v); } \
  }
#define BIND_INT(sec, key, field)                                           \
  Binding {                                                                 \
    sec, key, [](const RunConfig& c) { return std::to_string(c.field); },   \
        [](RunConfig& c, const std::string& v) { c.field = parse_int(v); }  \
  }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      BIND_INT("road", "num_lanes", env.road.num_lanes),
      BIND_DOUBLE("road", "lane_width", env.road.lane_width),
      BIND_DOUBLE("road", "road_length", env.road.road_length),
      Binding{"road", "speed_limit_kmh",
              [](const RunConfig& c) { return format_double(c.env.road.speed_limit * 3.6); },
              [](RunConfig& c, const std::string& v) { c.env.road.speed_limit = parse_double(v) / 3.6; }},
      BIND_DOUBLE("road", "mandatory_zone_start", env.road.mandatory_zone_start),
      BIND_DOUBLE("road", "turn_speed", env.road.turn_speed),
      Binding{"road", "safety_veto",
              [](const RunConfig& c) { return std::string(c.env.safety_veto ? "true" : "false"); },
              [](RunConfig& c, const std::string& v) { c.env.safety_veto = parse_bool(v); }},
      BIND_INT("road", "entrance_lane", env.road.entrance_lane),
      Binding{"road", "right_turn_only_lanes",
              [](const RunConfig& c) { return format_lanes(c.env.road.right_turn_only_lanes); },
              [](RunConfig& c, const std::string& v) { c.env.road.right_turn_only_lanes = parse_lanes(v); }},
      BIND_DOUBLE("road", "dt", env.traffic.dt),
      BIND_DOUBLE("road", "lane_change_duration", env.traffic.lane_change_duration),
      BIND_DOUBLE("road", "decision_period", env.decision_period),
      BIND_INT("road", "max_steps", env.max_steps),
      BIND_DOUBLE("road", "ego_start_s", env.traffic.ego_start_s),
      BIND_DOUBLE("road", "ego_start_v", env.traffic.ego_start_v),
      Binding{"road", "fixed_vehicles",
              [](const RunConfig& c) { return format_fixed(c.env.traffic.fixed_vehicles); },
              [](RunConfig& c, const std::string& v) { c.env.traffic.fixed_vehicles = parse_fixed(v); }},
      BIND_DOUBLE("road", "entrance_rate", env.traffic.entrance_rate),
      BIND_DOUBLE("road", "entrance_speed", env.traffic.entrance_speed),
      BIND_DOUBLE("road", "arrival_horizon", env.traffic.arrival_horizon),
      BIND_INT("road", "random_spawns", env.traffic.random_spawns),
      BIND_DOUBLE("road", "random_spawn_min_s", env.traffic.random_spawn_min_s),
      BIND_DOUBLE("road", "random_spawn_max_s", env.traffic.random_spawn_max_s),
      BIND_DOUBLE("road", "desired_speed_min", env.traffic.desired_speed_min),
      BIND_DOUBLE("road", "desired_speed_max", env.traffic.desired_speed_max),
      BIND_DOUBLE("road", "right_route_fraction", env.traffic.right_route_fraction),
      BIND_DOUBLE("road", "mandatory_change_start", env.traffic.mandatory_change_start),
      BIND_DOUBLE("road", "congestion_speed_fraction", env.traffic.congestion_speed_fraction),
      BIND_DOUBLE("road", "congestion_gap", env.traffic.congestion_gap),
      BIND_DOUBLE("road", "lane_speed_advantage", env.traffic.lane_speed_advantage),
      BIND_DOUBLE("road", "lane_change_cooldown", env.traffic.lane_change_cooldown),
      BIND_DOUBLE("road", "max_wait", env.traffic.max_wait),
      Binding{"road", "gap_lead_min",
              [](const RunConfig& c) { return format_double(c.env.ego_gaps.lead_min); },
              [](RunConfig& c, const std::string& v) {
                c.env.ego_gaps.lead_min = c.env.traffic.gaps.lead_min = parse_double(v);
              }},
      Binding{"road", "gap_follow_min",
              [](const RunConfig& c) { return format_double(c.env.ego_gaps.follow_min); },
              [](RunConfig& c, const std::string& v) {
                c.env.ego_gaps.follow_min = c.env.traffic.gaps.follow_min = parse_double(v);
              }},
      BIND_DOUBLE("road", "idm_a_max", env.idm.a_max),
      BIND_DOUBLE("road", "idm_b", env.idm.b),
      BIND_DOUBLE("road", "idm_s0", env.idm.s0),
      BIND_DOUBLE("road", "idm_time_headway", env.idm.time_headway),
      BIND_DOUBLE("road", "idm_b_max", env.idm.b_max),
      BIND_DOUBLE("road", "vehicle_length", env.idm.vehicle_length),

      BIND_DOUBLE("reward", "alpha1", env.weights.alpha1),
      BIND_DOUBLE("reward", "alpha2", env.weights.alpha2),
      BIND_DOUBLE("reward", "alpha3", env.weights.alpha3),
      BIND_DOUBLE("reward", "alpha4", env.weights.alpha4),
      BIND_DOUBLE("reward", "v_des", env.weights.v_des),
      BIND_DOUBLE("reward", "v_th1", env.weights.v_th1),
      BIND_DOUBLE("reward", "delta_v_min", env.weights.delta_v_min),
      BIND_DOUBLE("reward", "t_th", env.weights.t_th),
      BIND_DOUBLE("reward", "eps_v", env.weights.eps_v),
      BIND_DOUBLE("reward", "d_virtual", env.d_virtual),
      BIND_DOUBLE("reward", "collision_penalty", env.collision_penalty),

      BIND_DOUBLE("baseline", "v_baseline_th", baseline.v_baseline_th),

      Binding{"train", "optimizer",
              [](const RunConfig& c) { return std::string(dqn::to_string(c.train.optimizer.kind)); },
              [](RunConfig& c, const std::string& v) { c.train.optimizer.kind = dqn::optimizer_from_string(v); }},
      BIND_DOUBLE("train", "learning_rate", train.optimizer.learning_rate),
      BIND_DOUBLE("train", "momentum", train.optimizer.momentum),
      BIND_DOUBLE("train", "gamma", train.gamma),
      BIND_DOUBLE("train", "eps_min", train.eps_min),
      BIND_DOUBLE("train", "eps_max", train.eps_max),
      BIND_DOUBLE("train", "eps_decay", train.eps_decay),
      BIND_INT("train", "hidden", train.hidden),
      BIND_INT("train", "batch", train.batch),
      BIND_INT("train", "episodes", train.episodes),
      Binding{"train", "buffer_capacity",
              [](const RunConfig& c) { return std::to_string(c.train.buffer_capacity); },
              [](RunConfig& c, const std::string& v) { c.train.buffer_capacity = parse_u64(v); }},
      BIND_DOUBLE("train", "theta_true", train.theta_true),
      BIND_DOUBLE("train", "theta_init", train.theta_init),
      BIND_INT("train", "updates_per_episode", train.updates_per_episode),
      BIND_INT("train", "target_sync_episodes", train.target_sync_episodes),
      Binding{"train", "seed",
              [](const RunConfig& c) { return std::to_string(c.train.seed); },
              [](RunConfig& c, const std::string& v) { c.train.seed = parse_u64(v); }},

      BIND_INT("eval", "episodes", eval.episodes),
      Binding{"eval", "seed",
              [](const RunConfig& c) { return std::to_string(c.eval.seed); },
              [](RunConfig& c, const std::string& v) { c.eval.seed = parse_u64(v); }},
      BIND_INT("eval", "threads", eval.threads),
      BIND_DOUBLE("eval", "reward_shift", eval.reward_shift),
      BIND_INT("eval", "log_episodes", eval.log_episodes),
      Binding{"eval", "output_dir",
              [](const RunConfig& c) { return c.output_dir.string(); },
              [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
  };
  return table;
}

#undef BIND_DOUBLE
#undef BIND_INT

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// "section.key" -> line number, for diagnostics.
std::map<std::string, int> index_lines(const std::string& text) {
  std::map<std::string, int> lines;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == ';' || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      lines.emplace(section, no);
      continue;
    }
    const auto eq = t.find('=');
    if (eq != std::string::npos) lines.emplace(section + "." + trim(t.substr(0, eq)), no);
  }
  return lines;
}

}  // namespace

RunConfig parse_run_config(std::istream& in, const std::string& source) {
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const auto lines = index_lines(text);
  auto where = [&](const std::string& k) {
    auto it = lines.find(k);
    return source + (it != lines.end() ? ":" + std::to_string(it->second) : "") + ": ";
  };

  pt::ptree tree;
  try {
    std::istringstream ini(text);
    pt::ini_parser::read_ini(ini, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }

  RunConfig cfg = default_run_config();
  std::map<std::string, const Binding*> by_name;
  for (const auto& b : bindings()) by_name[b.section + "." + b.key] = &b;

  for (const auto& [section, keys] : tree) {
    if (section != "road" && section != "reward" && section != "baseline" &&
        section != "train" && section != "eval") {
      throw ConfigError(where(section) + "unknown section [" + section + "]");
    }
    for (const auto& [key, node] : keys) {
      const std::string name = section + "." + key;
      auto it = by_name.find(name);
      if (it == by_name.end()) {
        throw ConfigError(where(name) + "[" + section + "] unknown key '" + key + "'");
      }
      try {
        it->second->set(cfg, trim(node.get_value<std::string>()));
      } catch (const std::exception& e) {
        throw ConfigError(where(name) + "[" + section + "] " + key + ": " + e.what());
      }
    }
  }

  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": invalid configuration: " + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_run_config(in, path.string());
}

void write_run_config(std::ostream& out, const RunConfig& cfg) {
  std::string section;
  for (const auto& b : bindings()) {
    if (b.section != section) {
      if (!section.empty()) out << '\n';
      section = b.section;
      out << '[' << section << "]\n";
    }
    out << b.key << " = " << b.get(cfg) << '\n';
  }
}

}  // namespace adherelane
