#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace adherelane::stats {

double mean(std::span<const double> xs);
// Sample standard deviation over sqrt(n); 0 for fewer than two values.
double standard_error(std::span<const double> xs);

struct WilcoxonResult {
  double w_plus = 0.0;
  std::size_t n_nonzero = 0;
  double p_value = 1.0;
  bool exact = false;
};

// Paired signed-rank test of H1: the differences a - b are shifted above
// zero. Zero differences are dropped; tied magnitudes get average ranks.
// Without ties and for up to 60 pairs the null distribution is enumerated
// exactly, otherwise the tie-corrected normal approximation with continuity
// correction is used. Throws std::invalid_argument on length mismatch.
WilcoxonResult wilcoxon_signed_rank_greater(std::span<const double> a,
                                            std::span<const double> b);

// Trailing moving average over full windows: output[i] averages
// xs[i .. i + window - 1].
std::vector<double> moving_average(std::span<const double> xs, std::size_t window);

// Least-squares slope of ys against 0, 1, 2, ...
double ols_slope(std::span<const double> ys);

}  // namespace adherelane::stats
