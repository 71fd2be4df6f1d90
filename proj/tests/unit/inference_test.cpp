#include "divsbl/errors.hpp"
#include "divsbl/harness.hpp"
#include "divsbl/inference.hpp"
#include "divsbl/metrics.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace divsbl {
namespace {

using testing::direct_posterior;
using testing::random_matrix;
using testing::random_posterior;
using testing::random_prior;
using testing::random_spd;
using testing::random_vector;

// ---------------------------------------------------------------------------
// Posterior

TEST(Posterior, ScalarCase) {
  const MeasurementModel m(Matrix::Ones(1, 1), Vector::Constant(1, 2.0), 1.0);
  const BlockLayout layout(1, 1);
  const Posterior p = compute_posterior(m, Matrix::Ones(1, 1), layout, BlockMask{true});
  EXPECT_NEAR(p.covariance(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(p.mean(0), 1.0, 1e-15);
}

TEST(Posterior, NearNoiselessIdentityInterpolates) {
  std::mt19937_64 gen(11);
  const BlockLayout layout(3, 2);
  const Vector y = random_vector(gen, 6);
  const MeasurementModel m(Matrix::Identity(6, 6), y, 1e8);
  const Posterior p = compute_posterior(m, random_prior(gen, layout), layout);
  EXPECT_LT((p.mean - y).norm(), 1e-6 * y.norm());
}

// Both solve paths (active dimension above and below M) against the direct inverse.
TEST(Posterior, MatchesDirectInverse) {
  std::mt19937_64 gen(12);
  const BlockLayout layout(4, 2);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix phi = random_matrix(gen, 4, 8);
    const Vector y = random_vector(gen, 4);
    const MeasurementModel m(phi, y, 3.0);
    const DiversifiedPrior prior = random_prior(gen, layout);
    const Matrix s0 = assemble_prior_covariance(prior, layout);
    const Posterior p = compute_posterior(m, prior, layout);
    const Posterior ref = direct_posterior(phi, y, s0, 3.0);
    EXPECT_LT((p.mean - ref.mean).lpNorm<Eigen::Infinity>(), 1e-8);
    EXPECT_LT((p.covariance - ref.covariance).lpNorm<Eigen::Infinity>(), 1e-8);

    // Two blocks switched off: 4 active coefficients, M = 4.
    DiversifiedPrior half = prior;
    half.active[1] = half.active[3] = false;
    half.gammas.segment(2, 2).setZero();
    half.gammas.segment(6, 2).setZero();
    const Posterior ph = compute_posterior(m, half, layout);
    const std::vector<Index> keep{0, 1, 4, 5};
    Matrix phi_a(4, 4), s0_a = Matrix::Zero(4, 4);
    for (Index a = 0; a < 4; ++a) phi_a.col(a) = phi.col(keep[a]);
    s0_a.block(0, 0, 2, 2) = prior_block(half, layout, 0);
    s0_a.block(2, 2, 2, 2) = prior_block(half, layout, 2);
    const Posterior ref_a = direct_posterior(phi_a, y, s0_a, 3.0);
    for (Index a = 0; a < 4; ++a) {
      EXPECT_NEAR(ph.mean(keep[a]), ref_a.mean(a), 1e-8);
      for (Index b = 0; b < 4; ++b) EXPECT_NEAR(ph.covariance(keep[a], keep[b]), ref_a.covariance(a, b), 1e-8);
    }
    EXPECT_TRUE(ph.mean.segment(2, 2).isZero(0.0));
    EXPECT_TRUE(ph.covariance.middleRows(6, 2).isZero(0.0));
  }
}

TEST(Posterior, Sigma0OverloadAgreesWithPriorOverload) {
  std::mt19937_64 gen(13);
  const BlockLayout layout(3, 3);
  const MeasurementModel m(random_matrix(gen, 5, 9), random_vector(gen, 5), 2.0);
  const DiversifiedPrior prior = random_prior(gen, layout);
  const Posterior a = compute_posterior(m, prior, layout);
  const Posterior b = compute_posterior(m, assemble_prior_covariance(prior, layout), layout, prior.active);
  EXPECT_TRUE(a.mean.isApprox(b.mean, 1e-10));
  EXPECT_TRUE(a.covariance.isApprox(b.covariance, 1e-10));
}

TEST(Posterior, ShapeErrors) {
  const MeasurementModel m(Matrix::Ones(2, 4), Vector::Ones(2), 1.0);
  EXPECT_THROW(compute_posterior(m, Matrix::Identity(4, 4), BlockLayout(3, 2), BlockMask(3, true)), ValidationError);
  EXPECT_THROW(compute_posterior(m, Matrix::Identity(3, 3), BlockLayout(2, 2), BlockMask(2, true)), ValidationError);
  EXPECT_THROW(compute_posterior(m, Matrix::Identity(4, 4), BlockLayout(2, 2), BlockMask(1, true)), ValidationError);
}

// ---------------------------------------------------------------------------
// Q and its gradient

TEST(QValue, ScalarEvaluation) {
  const BlockLayout layout(1, 1);
  const auto prior = DiversifiedPrior::initial(layout);
  const Posterior p{Vector::Zero(1), Matrix::Ones(1, 1)};
  EXPECT_DOUBLE_EQ(q_value(prior, p, layout), -0.5);
}

TEST(QValue, StationaryPointValue) {
  std::mt19937_64 gen(21);
  const BlockLayout layout(2, 3);
  const DiversifiedPrior prior = random_prior(gen, layout);
  const Matrix s0 = assemble_prior_covariance(prior, layout);
  // Posterior whose block second moments equal Sigma0.
  const Posterior p{Vector::Zero(6), s0};
  const double expected = -0.5 * std::log(s0.determinant()) - 0.5 * 6.0;
  EXPECT_NEAR(q_value(prior, p, layout), expected, 1e-10);
}

TEST(QValue, ZeroVarianceOnActiveBlockThrows) {
  const BlockLayout layout(1, 2);
  auto prior = DiversifiedPrior::with_gammas(layout, Vector{{1.0, 0.0}});
  EXPECT_THROW(q_value(prior, Posterior{Vector::Zero(2), Matrix::Identity(2, 2)}, layout), DomainError);
}

TEST(QGradient, VanishesAtClassicFixedPointWithIdentityCorrelation) {
  std::mt19937_64 gen(22);
  const BlockLayout layout(2, 3);
  const Posterior p = random_posterior(gen, 6);
  Vector g(6);
  for (Index k = 0; k < 6; ++k) g(k) = p.covariance(k, k) + p.mean(k) * p.mean(k);
  const auto prior = DiversifiedPrior::with_gammas(layout, g);
  for (Index i = 0; i < 2; ++i) {
    for (Index j = 0; j < 3; ++j) {
      EXPECT_DOUBLE_EQ(gamma_terms(prior, p, layout, i, j).T, 0.0);
      EXPECT_NEAR(q_grad_sqrt_gamma(prior, p, layout, i, j), 0.0, 1e-12);
    }
  }
}

TEST(QGradient, SingleElementBlock) {
  const BlockLayout layout(1, 1);
  const auto prior = DiversifiedPrior::with_gammas(layout, Vector::Constant(1, 4.0));
  const Posterior p{Vector::Constant(1, 1.0), Matrix::Constant(1, 1, 2.0)};
  // A = 3, s = 2: -1/2 + 3/8.
  EXPECT_DOUBLE_EQ(q_grad_sqrt_gamma(prior, p, layout, 0, 0), -0.5 + 3.0 / 8.0);
}

TEST(QGradient, MatchesCentralDifference) {
  std::mt19937_64 gen(23);
  const BlockLayout layout(2, 4);
  for (int rep = 0; rep < 10; ++rep) {
    const DiversifiedPrior prior = random_prior(gen, layout);
    const Posterior p = random_posterior(gen, 8);
    for (Index e = 0; e < 8; ++e) {
      const double s = std::sqrt(prior.gammas(e));
      const double h = 1e-6;
      DiversifiedPrior plus = prior, minus = prior;
      plus.gammas(e) = (s + h) * (s + h);
      minus.gammas(e) = (s - h) * (s - h);
      const double fd = (q_value(plus, p, layout) - q_value(minus, p, layout)) / (2.0 * h);
      const double an = q_grad_sqrt_gamma(prior, p, layout, e / 4, e % 4);
      EXPECT_NEAR(an, fd, 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(QGradient, RangeChecks) {
  const BlockLayout layout(1, 2);
  const auto prior = DiversifiedPrior::initial(layout);
  const Posterior p{Vector::Zero(2), Matrix::Identity(2, 2)};
  EXPECT_THROW(gamma_terms(prior, p, layout, 1, 0), LayoutError);
  EXPECT_THROW(gamma_terms(prior, p, layout, 0, 2), LayoutError);
}

// ---------------------------------------------------------------------------
// Variance update

TEST(GammaFromTerms, ClosedForms) {
  EXPECT_DOUBLE_EQ(gamma_from_terms(0.0, 4.0), 4.0);
  EXPECT_DOUBLE_EQ(gamma_from_terms(3.0, 4.0), 16.0);
  // Negative T: root of s^2 + 3 s - 4 is s = 1.
  EXPECT_DOUBLE_EQ(gamma_from_terms(-3.0, 4.0), 1.0);
  EXPECT_GT(gamma_from_terms(-1e3, 0.0), 0.0);
}

TEST(GammaFromTerms, NegativeBranchKeepsPrecision) {
  // Direct formula loses every digit here; the rearranged form does not.
  const double T = -1e8, A = 1.0;
  const double s = A / -T;  // leading order of the positive root
  EXPECT_NEAR(gamma_from_terms(T, A), s * s, 1e-12 * s * s);
}

TEST(UpdateGamma, IdentityCorrelationIsClassicUpdate) {
  std::mt19937_64 gen(31);
  const BlockLayout layout(3, 2);
  const auto prior = DiversifiedPrior::with_gammas(layout, testing::random_positive(gen, 6));
  const Posterior p = random_posterior(gen, 6);
  const Vector g = update_gamma(prior, p, layout);
  for (Index k = 0; k < 6; ++k) EXPECT_NEAR(g(k), p.covariance(k, k) + p.mean(k) * p.mean(k), 1e-12);
}

TEST(UpdateGamma, PrunedBlocksStayZero) {
  std::mt19937_64 gen(32);
  const BlockLayout layout(2, 2);
  auto prior = DiversifiedPrior::with_gammas(layout, Vector{{1.0, 1.0, 0.0, 0.0}});
  prior.active[1] = false;
  const Vector g = update_gamma(prior, random_posterior(gen, 4), layout);
  EXPECT_TRUE(g.tail(2).isZero(0.0));
  EXPECT_TRUE((g.head(2).array() > 0.0).all());
}

// Each coordinate is the exact maximizer given the ones already visited.
TEST(UpdateGamma, SequentialSweepZeroesEachCoordinateGradient) {
  std::mt19937_64 gen(33);
  const BlockLayout layout(2, 4);
  for (int rep = 0; rep < 10; ++rep) {
    const DiversifiedPrior prior = random_prior(gen, layout);
    const Posterior p = random_posterior(gen, 8);
    const Vector g = update_gamma(prior, p, layout);
    for (Index i = 0; i < 2; ++i) {
      for (Index j = 0; j < 4; ++j) {
        DiversifiedPrior view = prior;
        view.gammas.segment(i * 4, j + 1) = g.segment(i * 4, j + 1);
        const double A = gamma_terms(view, p, layout, i, j).A;
        EXPECT_LT(std::abs(q_grad_sqrt_gamma(view, p, layout, i, j)), 1e-6 * (1.0 + std::abs(A)));
      }
    }
  }
}

TEST(UpdateGamma, SweepDoesNotDecreaseQ) {
  std::mt19937_64 gen(34);
  const BlockLayout layout(3, 3);
  for (int rep = 0; rep < 20; ++rep) {
    DiversifiedPrior prior = random_prior(gen, layout);
    const Posterior p = random_posterior(gen, 9);
    const double before = q_value(prior, p, layout);
    prior.gammas = update_gamma(prior, p, layout);
    EXPECT_GE(q_value(prior, p, layout), before - 1e-10);
  }
}

// ---------------------------------------------------------------------------
// Correlation matrices

TEST(UnconstrainedCorrelation, UnitVariancesGiveSecondMoment) {
  std::mt19937_64 gen(41);
  const BlockLayout layout(2, 3);
  const auto prior = DiversifiedPrior::initial(layout);
  const Posterior p = random_posterior(gen, 6);
  EXPECT_TRUE(unconstrained_correlation(prior, p, layout, 1).isApprox(block_second_moment(p, layout, 1), 1e-14));
}

TEST(UnconstrainedCorrelation, ScalarCase) {
  const BlockLayout layout(1, 1);
  const auto prior = DiversifiedPrior::with_gammas(layout, Vector::Constant(1, 4.0));
  const Posterior p{Vector::Constant(1, 2.0), Matrix::Constant(1, 1, 4.0)};
  EXPECT_DOUBLE_EQ(unconstrained_correlation(prior, p, layout, 0)(0, 0), 2.0);
}

TEST(UnconstrainedCorrelation, SymmetricAndRejectsZeroVariance) {
  std::mt19937_64 gen(42);
  const BlockLayout layout(1, 4);
  const Matrix u = unconstrained_correlation(random_prior(gen, layout), random_posterior(gen, 4), layout, 0);
  EXPECT_TRUE(u.isApprox(u.transpose(), 0.0));
  const auto zero = DiversifiedPrior::with_gammas(layout, Vector{{1.0, 0.0, 1.0, 1.0}});
  EXPECT_THROW(unconstrained_correlation(zero, random_posterior(gen, 4), layout, 0), DomainError);
}

TEST(CommonCorrelation, SingleBlockEqualsItsOwnMatrix) {
  std::mt19937_64 gen(43);
  const BlockLayout layout(1, 3);
  const auto prior = random_prior(gen, layout);
  const Posterior p = random_posterior(gen, 3);
  EXPECT_TRUE(common_correlation(prior, p, layout).isApprox(unconstrained_correlation(prior, p, layout, 0), 1e-15));
}

TEST(CommonCorrelation, AverageOfIdentityAndThreeIdentity) {
  const BlockLayout layout(2, 2);
  const auto prior = DiversifiedPrior::initial(layout);
  Matrix cov = Matrix::Identity(4, 4);
  cov.block(2, 2, 2, 2) *= 3.0;
  const Posterior p{Vector::Zero(4), cov};
  EXPECT_TRUE(common_correlation(prior, p, layout).isApprox(2.0 * Matrix::Identity(2, 2), 1e-15));
}

TEST(CommonCorrelation, MatchesExplicitLoopAndSkipsPrunedBlocks) {
  std::mt19937_64 gen(44);
  const BlockLayout layout(3, 2);
  auto prior = random_prior(gen, layout);
  const Posterior p = random_posterior(gen, 6);
  Matrix sum = Matrix::Zero(2, 2);
  for (Index i = 0; i < 3; ++i) {
    Matrix c = p.covariance.block(2 * i, 2 * i, 2, 2) + p.mean.segment(2 * i, 2) * p.mean.segment(2 * i, 2).transpose();
    for (Index a = 0; a < 2; ++a)
      for (Index b = 0; b < 2; ++b) c(a, b) /= std::sqrt(prior.gammas(2 * i + a) * prior.gammas(2 * i + b));
    sum += c;
  }
  EXPECT_LT((common_correlation(prior, p, layout) - sum / 3.0).lpNorm<Eigen::Infinity>(), 1e-12);

  prior.active[0] = prior.active[1] = prior.active[2] = false;
  EXPECT_THROW(common_correlation(prior, p, layout), DomainError);
}

// ---------------------------------------------------------------------------
// Dual ascent

TEST(DualStep, ZeroMultiplierReturnsUnconstrained) {
  std::mt19937_64 gen(51);
  const BlockLayout layout(2, 3);
  const auto prior = random_prior(gen, layout);
  const Posterior p = random_posterior(gen, 6);
  const DualState st = dual_step(prior, p, layout, Matrix::Identity(3, 3), 0.5);
  for (Index i = 0; i < 2; ++i) EXPECT_EQ(st.correlations[i], unconstrained_correlation(prior, p, layout, i));
}

TEST(DualStep, ZeroResidualLeavesMultiplier) {
  const Matrix b{{2.0, 0.3}, {0.3, 1.0}};
  const DualState st = dual_step({Matrix::Identity(2, 2)}, {b}, Vector::Constant(1, 0.25), BlockMask{true},
                                 spd_logdet(b), 1.0);
  EXPECT_NEAR(st.multipliers(0), 0.25, 1e-15);
  EXPECT_NEAR(st.residuals(0), 0.0, 1e-15);
}

TEST(DualStep, ScalarEvaluation) {
  const DualState st =
      dual_step({Matrix::Constant(1, 1, 2.0)}, {Matrix::Constant(1, 1, 2.0)}, Vector::Constant(1, 0.5),
                BlockMask{true}, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(st.correlations[0](0, 0), 1.0);
  EXPECT_NEAR(st.multipliers(0), 0.5 + std::log(2.0), 1e-15);
  EXPECT_NEAR(st.multipliers(0), 1.193, 1e-3);
}

TEST(DualStep, MultiplierIsClampedAndStepValidated) {
  const DualState st = dual_step({Matrix::Identity(1, 1)}, {Matrix::Identity(1, 1)}, Vector::Zero(1),
                                 BlockMask{true}, 10.0, 1.0);
  EXPECT_NEAR(1.0 + 2.0 * st.multipliers(0), kMinMultiplierDenominator, 1e-15);
  EXPECT_THROW(dual_step({Matrix::Identity(1, 1)}, {Matrix::Identity(1, 1)}, Vector::Zero(1), BlockMask{true}, 0.0,
                         0.0),
               ValidationError);
}

TEST(DiversifyComplete, AlreadyFeasibleTakesNoStep) {
  std::mt19937_64 gen(52);
  const BlockLayout layout(2, 2);
  auto prior = random_prior(gen, layout);
  const Matrix common = random_spd(gen, 2);
  prior.correlations = {common, common};
  const DualResult r = diversify_complete(prior, random_posterior(gen, 4), layout, common, 1e-3, 500);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, (std::vector<int>{0, 0}));
  EXPECT_EQ(r.state.correlations[0], common);
}

TEST(DiversifyComplete, ScalarFixedPoint) {
  const BlockLayout layout(1, 1);
  const auto prior = DiversifiedPrior::initial(layout);
  const Posterior p{Vector::Zero(1), Matrix::Constant(1, 1, 4.0)};
  const DualResult r = diversify_complete(prior, p, layout, Matrix::Constant(1, 1, 2.0), 1e-3, 500);
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.state.correlations[0](0, 0), 2.0, 2e-3 * 2.0);
  EXPECT_NEAR(r.state.multipliers(0), 0.5, 1e-2);
}

TEST(DiversifyComplete, ReducesResidualOnRandomInstance) {
  std::mt19937_64 gen(53);
  const BlockLayout layout(3, 4);
  const auto prior = random_prior(gen, layout);
  const Posterior p = random_posterior(gen, 12);
  const Matrix common = common_correlation(prior, p, layout);
  const double ld = spd_logdet(common);
  const DualResult r = diversify_complete(prior, p, layout, common, 1e-3, 500);
  for (Index i = 0; i < 3; ++i) {
    const double before = std::abs(spd_logdet(prior.correlations[i]) - ld);
    const double after = std::abs(spd_logdet(r.state.correlations[i]) - ld);
    EXPECT_LT(after, before);
    EXPECT_NEAR(after, std::abs(r.state.residuals(i)), 1e-9);
  }
}

TEST(SpdLogdet, KnownValuesAndSemidefiniteRidge) {
  EXPECT_NEAR(spd_logdet(Vector{{2.0, 3.0}}.asDiagonal().toDenseMatrix()), std::log(6.0), 1e-14);
  EXPECT_TRUE(std::isfinite(spd_logdet(Matrix::Ones(3, 3))));
  EXPECT_THROW(spd_logdet(-Matrix::Identity(2, 2)), DomainError);
}

// ---------------------------------------------------------------------------
// Toeplitz, beta, pruning, cost

TEST(Toeplitz, HandEvaluatedPair) {
  const Matrix t = toeplitz_correct(Matrix{{2.0, 1.0}, {1.0, 2.0}}, 0.99);
  EXPECT_TRUE(t.isApprox(Matrix{{1.0, 0.5}, {0.5, 1.0}}, 1e-15));
}

TEST(Toeplitz, DiagonalInputGivesIdentity) {
  EXPECT_TRUE(toeplitz_correct(Vector{{1.0, 2.0, 3.0}}.asDiagonal().toDenseMatrix(), 0.99).isIdentity(0.0));
  EXPECT_TRUE(toeplitz_correct(Matrix::Zero(3, 3), 0.99).isIdentity(0.0));
}

TEST(Toeplitz, IdempotentOnItsRange) {
  Matrix t(4, 4);
  for (Index s = 0; s < 4; ++s)
    for (Index k = 0; k < 4; ++k) t(s, k) = std::pow(-0.6, std::abs(s - k));
  EXPECT_TRUE(toeplitz_correct(t, 0.99).isApprox(t, 1e-15));
}

TEST(Toeplitz, ClampsCoefficient) {
  const Matrix t = toeplitz_correct(Matrix::Ones(3, 3), 0.9);
  EXPECT_DOUBLE_EQ(t(0, 1), 0.9);
  EXPECT_NEAR(t(0, 2), 0.81, 1e-15);
  EXPECT_THROW(toeplitz_correct(Matrix::Ones(2, 3), 0.9), ValidationError);
}

TEST(UpdateBeta, DirectEvaluation) {
  // ||y - mu||^2 = 1 and tr(Sigma) = 1 with Phi = I, M = 4.
  const MeasurementModel m(Matrix::Identity(4, 4), Vector{{1.0, 0.0, 0.0, 0.0}}, 1.0);
  const Posterior p{Vector::Zero(4), 0.25 * Matrix::Identity(4, 4)};
  EXPECT_DOUBLE_EQ(update_beta(m, p, 1e12), 2.0);
}

TEST(UpdateBeta, CapAndResidualOnly) {
  const Vector y{{1.0, 2.0}};
  const MeasurementModel m(Matrix::Identity(2, 2), y, 1.0);
  EXPECT_DOUBLE_EQ(update_beta(m, Posterior{y, Matrix::Zero(2, 2)}, 1e12), 1e12);
  EXPECT_DOUBLE_EQ(update_beta(m, Posterior{Vector::Zero(2), Matrix::Zero(2, 2)}, 1e12), 2.0 / 5.0);
}

TEST(UpdateBeta, TraceTermMatchesExplicitProduct) {
  std::mt19937_64 gen(61);
  const Matrix phi = random_matrix(gen, 5, 7);
  const MeasurementModel m(phi, random_vector(gen, 5), 1.0);
  const Posterior p = random_posterior(gen, 7);
  const double denom = (m.measurements() - phi * p.mean).squaredNorm() + (p.covariance * phi.transpose() * phi).trace();
  EXPECT_NEAR(update_beta(m, p, 1e12), 5.0 / denom, 1e-12);
}

TEST(Prune, BelowAndAboveThreshold) {
  std::mt19937_64 gen(62);
  const BlockLayout layout(3, 2);
  const auto prior = DiversifiedPrior::with_gammas(layout, Vector{{1e-9, 1e-9, 0.5, 0.5, 1e-9, 1e-9}});
  const Posterior p = random_posterior(gen, 6);
  const PruneOutcome out = prune(prior, p, 1e-6, layout);
  EXPECT_EQ(out.pruned, (std::vector<Index>{0, 2}));
  EXPECT_EQ(out.prior.active, (BlockMask{false, true, false}));
  EXPECT_TRUE(out.prior.gammas.head(2).isZero(0.0));
  EXPECT_TRUE(out.posterior.mean.tail(2).isZero(0.0));
  EXPECT_TRUE(out.posterior.covariance.middleRows(0, 2).isZero(0.0));
  EXPECT_TRUE(out.posterior.covariance.middleCols(4, 2).isZero(0.0));
  EXPECT_EQ(out.posterior.covariance.block(2, 2, 2, 2), p.covariance.block(2, 2, 2, 2));
  EXPECT_TRUE(prune(DiversifiedPrior::initial(layout), p, 1e-6, layout).pruned.empty());
}

TEST(PruneThreshold, RelativeWithFloor) {
  const BlockLayout layout(2, 2);
  SolverConfig c;
  const auto prior = DiversifiedPrior::with_gammas(layout, Vector{{1.0, 3.0, 10.0, 30.0}});
  EXPECT_DOUBLE_EQ(prune_threshold(prior, layout, c), 1e-3 * 20.0);
  const auto tiny = DiversifiedPrior::with_gammas(layout, Vector::Constant(4, 1e-14));
  EXPECT_DOUBLE_EQ(prune_threshold(tiny, layout, c), SolverConfig::kPruneFloor);
}

TEST(Cost, CollapsedPriorLeavesNoiseOnly) {
  const BlockLayout layout(2, 1);
  auto prior = DiversifiedPrior::with_gammas(layout, Vector::Zero(2));
  prior.active = {false, false};
  const Vector y{{1.0, 2.0, 2.0}};
  const MeasurementModel m(Matrix::Ones(3, 2), y, 1.0);
  EXPECT_NEAR(cost(m, prior, layout), -9.0, 1e-14);
}

TEST(Cost, ScalarEvaluation) {
  const BlockLayout layout(1, 1);
  const MeasurementModel m(Matrix::Ones(1, 1), Vector::Constant(1, 2.0), 1.0);
  EXPECT_NEAR(cost(m, DiversifiedPrior::initial(layout), layout), -2.0 - std::log(2.0), 1e-14);
}

TEST(Cost, BlockPermutationInvariance) {
  std::mt19937_64 gen(63);
  const BlockLayout layout(3, 2);
  const Matrix phi = random_matrix(gen, 4, 6);
  const Vector y = random_vector(gen, 4);
  const DiversifiedPrior prior = random_prior(gen, layout);
  const std::vector<Index> perm{2, 0, 1};
  Matrix phi_p(4, 6);
  DiversifiedPrior pp = prior;
  for (Index b = 0; b < 3; ++b) {
    phi_p.middleCols(2 * b, 2) = phi.middleCols(2 * perm[b], 2);
    pp.gammas.segment(2 * b, 2) = prior.gammas.segment(2 * perm[b], 2);
    pp.correlations[b] = prior.correlations[perm[b]];
  }
  EXPECT_NEAR(cost(MeasurementModel(phi, y, 2.0), prior, layout), cost(MeasurementModel(phi_p, y, 2.0), pp, layout),
              1e-10);
}

// ---------------------------------------------------------------------------
// Solver

TEST(Solve, ZeroMeasurementsGiveZeroEstimate) {
  std::mt19937_64 gen(71);
  const BlockLayout layout(4, 2);
  const MeasurementModel m(random_matrix(gen, 5, 8), Vector::Zero(5), 1.0);
  const SolveResult r = solve(m, layout, SolverConfig{});
  EXPECT_TRUE(r.x_hat.isZero(0.0));
}

TEST(Solve, ExactRecoveryInNoiselessRegime) {
  const ExperimentConfig cfg = scenario("noiseless");
  const TrialData d = make_trial_data(cfg, 0);
  SolverConfig sc = cfg.solver;
  const SolveResult r = solve(MeasurementModel(d.phi, d.y, 1e10), BlockLayout::from_dimension(80, 4), sc);
  EXPECT_LT(nmse(r.x_hat, d.truth.x_true), 1e-4);
}

TEST(Solve, BitIdenticalAcrossRuns) {
  const ExperimentConfig cfg = scenario("homoscedastic");
  const TrialData d = make_trial_data(cfg, 3);
  const MeasurementModel m(d.phi, d.y, default_noise_precision(d.y));
  const BlockLayout layout = BlockLayout::from_dimension(162, 6);
  SolverConfig sc;
  sc.max_iters = 40;
  const SolveResult a = solve(m, layout, sc);
  const SolveResult b = solve(m, layout, sc);
  EXPECT_EQ(a.x_hat, b.x_hat);
  EXPECT_EQ(a.posterior.covariance, b.posterior.covariance);
  EXPECT_EQ(a.prior.gammas, b.prior.gammas);
  EXPECT_EQ(a.cost_trace, b.cost_trace);
  EXPECT_EQ(a.beta, b.beta);
}

TEST(Solve, ObserverSeesEveryIterationAndCostTraceMatches) {
  const ExperimentConfig cfg = scenario("homoscedastic");
  const TrialData d = make_trial_data(cfg, 1);
  SolverConfig sc;
  sc.max_iters = 15;
  std::vector<double> seen;
  const SolveResult r = solve(MeasurementModel(d.phi, d.y, 50.0), BlockLayout::from_dimension(162, 6), sc,
                              [&](const IterationView& v) {
                                EXPECT_EQ(v.iteration, static_cast<int>(seen.size()) + 1);
                                seen.push_back(v.cost);
                              });
  EXPECT_EQ(seen, r.cost_trace);
  EXPECT_EQ(r.iterations, static_cast<int>(seen.size()));
}

TEST(Solve, FixedBetaIsHeld) {
  const ExperimentConfig cfg = scenario("homoscedastic");
  const TrialData d = make_trial_data(cfg, 1);
  SolverConfig sc;
  sc.max_iters = 5;
  sc.learn_beta = false;
  sc.beta_init = 123.0;
  const SolveResult r = solve(MeasurementModel(d.phi, d.y, 1.0), BlockLayout::from_dimension(162, 6), sc);
  EXPECT_DOUBLE_EQ(r.beta, 123.0);
}

TEST(Solve, LayoutMismatchAndBadConfigThrow) {
  const MeasurementModel m(Matrix::Ones(2, 6), Vector::Ones(2), 1.0);
  EXPECT_THROW(solve(m, BlockLayout(2, 2), SolverConfig{}), ValidationError);
  SolverConfig bad;
  bad.conv_tol = 0.0;
  EXPECT_THROW(solve(m, BlockLayout(3, 2), bad), ConfigError);
}

TEST(InitialGammas, ConstantAndSeededRandom) {
  const BlockLayout layout(5, 2);
  SolverConfig c;
  c.gamma_init_scale = 3.0;
  EXPECT_TRUE(initial_gammas(layout, c).isConstant(3.0));
  c.gamma_init_random = true;
  c.gamma_init_seed = 9;
  const Vector a = initial_gammas(layout, c);
  EXPECT_EQ(a, initial_gammas(layout, c));
  EXPECT_TRUE((a.array() > 0.0).all() && (a.array() < 3.0).all());
  c.gamma_init_seed = 10;
  EXPECT_NE(a, initial_gammas(layout, c));
}

}  // namespace
}  // namespace divsbl
