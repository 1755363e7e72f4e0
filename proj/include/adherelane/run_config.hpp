#pragma once

// Run configuration: an INI file with the sections [road], [reward],
// [baseline], [train] and [eval]. Every key is optional and falls back to the
// built-in reference configuration; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "adherelane/adherence.hpp"
#include "adherelane/dqn.hpp"
#include "adherelane/mdp_env.hpp"

namespace adherelane {

struct EvalConfig {
  int episodes = 100;
  std::uint64_t seed = 7'000'000;
  int threads = 1;
  // Additive constant for the "(shifted)" presentation columns.
  double reward_shift = 0.0;
  // Episode logs written per policy (first N evaluation episodes).
  int log_episodes = 5;

  void validate() const;
};

struct RunConfig {
  EnvConfig env;
  BaselineConfig baseline;
  dqn::TrainConfig train;
  EvalConfig eval;
  std::filesystem::path output_dir = "out";

  void validate() const;
};

// The reference scenario: four-lane 300 m freeway, left entrance, two
// right-turn-only lanes, and the default traffic mix.
RunConfig default_run_config();

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws ConfigError with "<source>:<line>: [section] key: message" style
// diagnostics for syntax errors, unknown keys, bad values and failed
// validation.
RunConfig parse_run_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

// Serializes every key, so the output parses back to the same config.
void write_run_config(std::ostream& out, const RunConfig& cfg);

}  // namespace adherelane
