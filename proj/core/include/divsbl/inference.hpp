#pragma once

// Diversified block sparse Bayesian learning.
//
// The hyperparameters (per-element variances gamma, per-block correlation
// matrices B_i, noise precision beta) are fitted by EM. The B_i are pulled
// toward a common matrix B through log-det equality constraints solved by
// dual ascent, then projected onto the AR(1) Toeplitz family.

#include "divsbl/model.hpp"

#include <functional>
#include <vector>

namespace divsbl {

// ---------------------------------------------------------------------------
// Posterior
// ---------------------------------------------------------------------------

/// Gaussian posterior of x given y under prior N(0, sigma0).
///
/// Works on the active blocks only: inactive blocks get zero mean and zero
/// rows/columns of the covariance. The solve is done in whichever of the
/// active dimension or M is smaller.
Posterior compute_posterior(const MeasurementModel& model, const Matrix& sigma0, const BlockLayout& layout,
                            const BlockMask& active);

/// Same as above with sigma0 assembled from the prior.
Posterior compute_posterior(const MeasurementModel& model, const DiversifiedPrior& prior, const BlockLayout& layout);

/// Sigma_i + mu_i mu_i^T, the second moment of block i under the posterior.
Matrix block_second_moment(const Posterior& posterior, const BlockLayout& layout, Index i);

// ---------------------------------------------------------------------------
// M-step pieces
// ---------------------------------------------------------------------------

/// Expected complete-data log prior, up to constants, summed over active blocks:
/// -1/2 log|Sigma0| - 1/2 tr[Sigma0^{-1} (Sigma + mu mu^T)].
/// Throws DomainError if an active block has a zero gamma.
double q_value(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout);

struct GammaTerms {
  double T = 0.0;  // cross-term coupling element j to the rest of its block
  double A = 0.0;  // (B_i^{-1})_jj (Sigma_i + mu_i mu_i^T)_jj
};

/// T and A for element j of block i. Neither depends on gamma_ij itself.
/// The reciprocal of the zeroed j-th entry of W_{-j} is taken as 0.
GammaTerms gamma_terms(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout, Index i,
                       Index j);

/// dQ / d sqrt(gamma_ij) = -1/s + A/s^3 + T/s^2 with s = sqrt(gamma_ij).
/// Throws DomainError if gamma_ij <= 0.
double q_grad_sqrt_gamma(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout, Index i,
                         Index j);

/// Positive root of s^2 - T s - A = 0, squared: 4A^2 / (sqrt(T^2 + 4A) - T)^2.
/// A is floored at kMinA.
double gamma_from_terms(double T, double A);
inline constexpr double kMinA = 1e-16;

/// New variance vector. Elements of a block are visited in order and each one
/// sees the already-updated values of the elements before it (coordinate ascent
/// on Q). Pruned blocks stay at zero.
Vector update_gamma(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout);

/// G_i^{-1} (Sigma_i + mu_i mu_i^T) G_i^{-1}. Throws DomainError if any gamma of block i is zero.
Matrix unconstrained_correlation(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout,
                                 Index i);

/// Mean of unconstrained_correlation over the active blocks.
/// Throws DomainError when no block is active.
Matrix common_correlation(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout);

// ---------------------------------------------------------------------------
// Dual ascent on log det B_i = log det B
// ---------------------------------------------------------------------------

/// 1 + 2 lambda is kept at or above this after every multiplier update.
inline constexpr double kMinMultiplierDenominator = 1e-6;

/// log det of a symmetric positive semi-definite matrix; a small ridge is
/// added when the Cholesky factorization fails.
double spd_logdet(const Matrix& m);

struct DualState {
  std::vector<Matrix> correlations;  // B_i, one per block (inactive entries untouched)
  Vector multipliers;                // lambda_i
  Vector residuals;                  // log det B_i - log det B, evaluated on the B_i fed into the step
};

/// One primal/dual step for every active block:
///   B_i    <- U_i / (1 + 2 lambda_i)
///   lambda <- lambda + step (log det B_i_old - log det B)
/// where U_i is the unconstrained correlation and B_i_old the prior's current B_i.
DualState dual_step(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout,
                    const Matrix& common, double step);

/// Same step against precomputed unconstrained matrices (one per block; inactive entries ignored).
DualState dual_step(const std::vector<Matrix>& unconstrained, const std::vector<Matrix>& correlations,
                    const Vector& multipliers, const BlockMask& active, double common_logdet, double step);

struct DualResult {
  DualState state;
  std::vector<int> iterations;  // per block
  bool converged = false;       // every active block reached |residual| <= tol
};

/// Repeats the multiplier step with step 1/k until |log det B_i - log det B| <= tol
/// for each block, or max_iters steps. A block already within tol takes no step;
/// any other block starts from B_i = U_i / (1 + 2 lambda_i) for its incoming lambda_i.
DualResult diversify_complete(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout,
                              const Matrix& common, double tol, int max_iters);

// ---------------------------------------------------------------------------
// Toeplitz projection, noise, pruning, cost
// ---------------------------------------------------------------------------

/// AR(1) estimate of a correlation matrix: Toeplitz([1, r, ..., r^{L-1}]) with
/// r = (mean of first off-diagonal) / (mean of main diagonal), |r| <= r_clamp.
/// Returns the identity if the main diagonal mean is not positive.
Matrix toeplitz_correct(const Matrix& b, double r_clamp);

/// M / (||y - Phi mu||^2 + tr(Sigma Phi^T Phi)), capped at beta_max.
double update_beta(const MeasurementModel& model, const Posterior& posterior, double beta_max);

struct PruneOutcome {
  DiversifiedPrior prior;
  Posterior posterior;
  std::vector<Index> pruned;  // blocks switched off by this call
};

/// Switches off every active block whose mean gamma is below threshold and
/// zeroes its gammas, mean entries and covariance rows/columns.
PruneOutcome prune(const DiversifiedPrior& prior, const Posterior& posterior, double threshold,
                   const BlockLayout& layout);

/// Log evidence up to constants: -y^T Sigma_y^{-1} y - log det Sigma_y,
/// Sigma_y = 1/beta I + Phi Sigma0 Phi^T.
double cost(const MeasurementModel& model, const DiversifiedPrior& prior, const BlockLayout& layout);

// ---------------------------------------------------------------------------
// Full solver
// ---------------------------------------------------------------------------

/// Snapshot handed to an observer at the end of every outer iteration.
struct IterationView {
  int iteration;  // 1-based
  const DiversifiedPrior& prior;
  const Posterior& posterior;
  double beta;
  double cost;
};
using IterationObserver = std::function<void(const IterationView&)>;

/// Outer loop: prune, gamma, B, B_i/lambda, Toeplitz, posterior, beta, until
/// ||mu_t - mu_{t-1}||_inf < conv_tol or max_iters. Returns x_hat = posterior mean.
SolveResult solve(const MeasurementModel& model, const BlockLayout& layout, const SolverConfig& config,
                  const IterationObserver& observer = {});

/// Variances at iteration 0 according to the config (constant or scaled uniform).
Vector initial_gammas(const BlockLayout& layout, const SolverConfig& config);

/// Noise precision at iteration 0 according to the config.
double initial_beta(const MeasurementModel& model, const SolverConfig& config);

/// Absolute pruning threshold for the current variances.
double prune_threshold(const DiversifiedPrior& prior, const BlockLayout& layout, const SolverConfig& config);

}  // namespace divsbl
