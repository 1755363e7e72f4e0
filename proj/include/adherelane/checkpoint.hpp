#pragma once

// Text checkpoints of the Q network and learner state.
//
//   adherelane-checkpoint 1
//   target <adherence|regular>
//   episodes_done <int>
//   estimator <theta_init> <n> <successes>
//   tensor <name> <rows> <cols>
//   <rows lines of cols values, row-major, 17 significant digits>
//
// with tensors w1, b1, w2, b2 in that order (biases as column vectors).

#include <filesystem>
#include <iosfwd>

#include "adherelane/dqn.hpp"

namespace adherelane::dqn {

void write_checkpoint(std::ostream& out, const TrainState& state);
// Throws std::runtime_error describing the first malformed line.
TrainState read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace adherelane::dqn
