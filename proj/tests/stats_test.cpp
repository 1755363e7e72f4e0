#include "adherelane/stats.hpp"

#include <gtest/gtest.h>

#include <vector>

namespace adherelane::stats {
namespace {

// Reference p-values were computed once with scipy.stats.wilcoxon
// (alternative="greater") and frozen here.
TEST(Wilcoxon, ExactSmallSample) {
  const std::vector<double> a{1.83, 0.50, 1.62, 2.48, 1.68, 1.88, 1.55, 3.06, 1.30};
  const std::vector<double> b{0.878, 0.647, 0.598, 2.05, 1.06, 1.29, 1.06, 3.14, 1.29};
  const WilcoxonResult r = wilcoxon_signed_rank_greater(a, b);
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.n_nonzero, 9u);
  EXPECT_EQ(r.w_plus, 40.0);
  EXPECT_NEAR(r.p_value, 0.01953125, 1e-12);
}

TEST(Wilcoxon, AllPositive) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b(5, 0.0);
  const WilcoxonResult r = wilcoxon_signed_rank_greater(a, b);
  EXPECT_EQ(r.w_plus, 15.0);
  EXPECT_NEAR(r.p_value, 0.03125, 1e-12);
  EXPECT_NEAR(wilcoxon_signed_rank_greater(b, a).p_value, 1.0, 1e-12);
}

TEST(Wilcoxon, NormalApproximationWithTiesAndZeros) {
  const std::vector<double> a{
      0.4, 0.2, 0.9, 0.4, -0.2, 0.7, 1.6, 1.2, -0.4, -1.0, -0.3, 0.3, -2.0, 0.1,
      -0.9, -0.4, -0.2, -0.0, 0.7, 1.3, 0.2, 1.7, -0.4, 0.7, 1.2, 0.4, -0.4, -0.6,
      -0.2, 0.5, -0.7, 0.1, 0.1, 0.8, 0.5, 0.7, -0.4, 0.2, 1.1, 1.8, -1.0, 1.8,
      1.6, 1.1, 0.6, -0.0, 1.8, 2.3, 2.1, 1.6, 0.7, -0.9, 0.3, 1.0, -1.0, 0.7,
      0.7, 1.0, -0.9, -0.4, -0.1, -0.9, 2.0, -0.2, 0.6, 0.0, 1.9, 1.6, 0.9, -1.9,
      0.4, 1.0, 1.3, -0.3, 2.1, -1.0, -0.4, 1.2, 0.3, 2.3};
  const std::vector<double> b(a.size(), 0.0);
  const WilcoxonResult r = wilcoxon_signed_rank_greater(a, b);
  EXPECT_FALSE(r.exact);
  EXPECT_EQ(r.n_nonzero, 77u);
  EXPECT_EQ(r.w_plus, 2194.0);
  EXPECT_NEAR(r.p_value, 0.0002186399333949174, 1e-9);
}

TEST(Wilcoxon, Errors) {
  const std::vector<double> a{1, 2};
  const std::vector<double> b{1};
  EXPECT_THROW(wilcoxon_signed_rank_greater(a, b), std::invalid_argument);
  const WilcoxonResult same = wilcoxon_signed_rank_greater(a, a);
  EXPECT_EQ(same.n_nonzero, 0u);
  EXPECT_EQ(same.p_value, 1.0);
}

TEST(Summary, MeanSeMovingAverageSlope) {
  const std::vector<double> xs{1, 2, 3, 4};
  EXPECT_EQ(mean(xs), 2.5);
  EXPECT_NEAR(standard_error(xs), 0.6454972243679028, 1e-15);
  EXPECT_EQ(standard_error(std::vector<double>{3.0}), 0.0);
  EXPECT_EQ(moving_average(xs, 2), (std::vector<double>{1.5, 2.5, 3.5}));
  EXPECT_TRUE(moving_average(xs, 5).empty());
  EXPECT_NEAR(ols_slope(std::vector<double>{5, 3, 1}), -2.0, 1e-12);
  EXPECT_NEAR(ols_slope(std::vector<double>{2, 2, 2, 2}), 0.0, 1e-12);
}

}  // namespace
}  // namespace adherelane::stats
