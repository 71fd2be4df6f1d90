#include "divsbl/errors.hpp"
#include "divsbl/metrics.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

namespace divsbl {
namespace {

TEST(Nmse, Examples) {
  const Vector x{{1.0, -2.0, 3.0}};
  EXPECT_DOUBLE_EQ(nmse(x, x), 0.0);
  EXPECT_DOUBLE_EQ(nmse(Vector::Zero(3), x), 1.0);
  EXPECT_DOUBLE_EQ(nmse(Vector{{0.0, 1.0}}, Vector{{1.0, 0.0}}), 2.0);
  EXPECT_THROW(nmse(x, Vector::Zero(3)), DomainError);
  EXPECT_THROW(nmse(x, Vector::Zero(2)), ValidationError);
}

TEST(Corr, Examples) {
  const Vector x{{1.0, -2.0, 3.0}};
  EXPECT_NEAR(corr(x, x).value, 1.0, 1e-15);
  EXPECT_NEAR(corr(-x, x).value, -1.0, 1e-15);
  EXPECT_DOUBLE_EQ(corr(Vector{{0.0, 1.0}}, Vector{{1.0, 0.0}}).value, 0.0);
  const CorrValue z = corr(Vector::Zero(3), x);
  EXPECT_TRUE(z.degenerate);
  EXPECT_EQ(z.value, 0.0);
}

TEST(Corr, ScaleInvariance) {
  std::mt19937_64 gen(301);
  std::uniform_real_distribution<double> scale(-5.0, 5.0);
  for (int rep = 0; rep < 200; ++rep) {
    const Vector a = testing::random_vector(gen, 7), b = testing::random_vector(gen, 7);
    const double c = scale(gen);
    if (std::abs(c) < 1e-3) continue;
    EXPECT_NEAR(corr(c * a, b).value, (c > 0 ? 1.0 : -1.0) * corr(a, b).value, 1e-12);
  }
}

TEST(CredibleInterval, QuantilesAndZeroWidth) {
  const Posterior p{Vector{{0.0, 2.0, 0.0}}, Vector{{1.0, 0.0, 4.0}}.asDiagonal()};
  const auto ci95 = credible_interval(p, 0.95);
  EXPECT_NEAR(ci95[0].first, -1.960, 1e-3);
  EXPECT_NEAR(ci95[0].second, 1.960, 1e-3);
  EXPECT_EQ(ci95[1], std::make_pair(2.0, 2.0));
  const auto ci50 = credible_interval(p, 0.5);
  EXPECT_NEAR(ci50[2].second, 0.6745 * 2.0, 1e-4);
  EXPECT_NEAR(normal_quantile_two_sided(0.95), 1.959964, 1e-6);
  EXPECT_THROW(credible_interval(p, 1.0), DomainError);
}

TEST(PhaseSuccess, StrictThreshold) {
  EXPECT_TRUE(phase_success(1e-3, 1e-2));
  EXPECT_FALSE(phase_success(1e-1));
  EXPECT_FALSE(phase_success(1e-2, 1e-2));
}

TEST(BlockHitRate, CountsBlocksAboveEnergyFloor) {
  Vector xh = Vector::Zero(10);
  xh.segment(0, 2).setOnes();
  xh(5) = 1e-4;
  const std::vector<SupportBlock> support{{0, 2, 1.0, 0.0}, {4, 3, 1.0, 0.0}};
  EXPECT_DOUBLE_EQ(block_hit_rate(xh, support), 0.5);
  EXPECT_DOUBLE_EQ(block_hit_rate(xh, {}), 1.0);
}

TEST(Evaluate, AllFields) {
  GroundTruth t{Vector{{0.0, 1.0, 2.0, 0.0}}, {{1, 2, 1.0, 0.0}}};
  const TrialMetrics m = evaluate(Vector{{0.0, 1.0, 2.0, 0.001}}, t, 1e-2);
  EXPECT_NEAR(m.nmse, 1e-6 / 5.0, 1e-18);
  EXPECT_GT(m.corr, 0.999);
  EXPECT_EQ(m.support_size, 3);
  EXPECT_TRUE(m.success);
  EXPECT_DOUBLE_EQ(m.block_hit_rate, 1.0);
}

}  // namespace
}  // namespace divsbl
