#include "adherelane/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace adherelane::stats {

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double standard_error(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  const double n = static_cast<double>(xs.size());
  return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

WilcoxonResult wilcoxon_signed_rank_greater(std::span<const double> a,
                                            std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("wilcoxon: length mismatch");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
  }
  WilcoxonResult res;
  res.n_nonzero = d.size();
  if (d.empty()) return res;

  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return std::abs(d[i]) < std::abs(d[j]);
  });
  std::vector<double> rank(d.size());
  double tie_term = 0.0;
  bool ties = false;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) {
      ++j;
    }
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    const double t = static_cast<double>(j - i + 1);
    if (t > 1.0) ties = true;
    tie_term += t * t * t - t;
    i = j + 1;
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0.0) res.w_plus += rank[i];
  }

  const std::size_t n = d.size();
  if (!ties && n <= 60) {
    // counts[s] = number of sign assignments with positive-rank sum s.
    const std::size_t max_sum = n * (n + 1) / 2;
    std::vector<double> counts(max_sum + 1, 0.0);
    counts[0] = 1.0;
    for (std::size_t r = 1; r <= n; ++r) {
      for (std::size_t s = max_sum; s >= r; --s) counts[s] += counts[s - r];
    }
    const auto w = static_cast<std::size_t>(std::llround(res.w_plus));
    double tail = 0.0;
    for (std::size_t s = w; s <= max_sum; ++s) tail += counts[s];
    res.p_value = tail / std::pow(2.0, static_cast<double>(n));
    res.exact = true;
    return res;
  }

  const double nn = static_cast<double>(n);
  const double mu = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  if (var <= 0.0) return res;
  const double z = (res.w_plus - mu - 0.5) / std::sqrt(var);
  res.p_value = 0.5 * std::erfc(z / std::sqrt(2.0));
  return res;
}

std::vector<double> moving_average(std::span<const double> xs, std::size_t window) {
  if (window == 0) throw std::invalid_argument("moving_average: window must be > 0");
  std::vector<double> out;
  if (xs.size() < window) return out;
  double sum = std::accumulate(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(window), 0.0);
  out.push_back(sum / static_cast<double>(window));
  for (std::size_t i = window; i < xs.size(); ++i) {
    sum += xs[i] - xs[i - window];
    out.push_back(sum / static_cast<double>(window));
  }
  return out;
}

double ols_slope(std::span<const double> ys) {
  const std::size_t n = ys.size();
  if (n < 2) return 0.0;
  const double xm = 0.5 * static_cast<double>(n - 1);
  const double ym = mean(ys);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - xm;
    sxy += dx * (ys[i] - ym);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace adherelane::stats
