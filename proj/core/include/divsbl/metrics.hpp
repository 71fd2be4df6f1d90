#pragma once

#include "divsbl/datagen.hpp"
#include "divsbl/model.hpp"

#include <span>
#include <utility>
#include <vector>

namespace divsbl {

/// ||x_hat - x||^2 / ||x||^2. Throws DomainError when x_true is zero.
double nmse(const Vector& x_hat, const Vector& x_true);

struct CorrValue {
  double value = 0.0;
  bool degenerate = false;  // one of the vectors was zero; value is 0
};

/// Cosine similarity <x_hat, x> / (||x_hat|| ||x||).
CorrValue corr(const Vector& x_hat, const Vector& x_true);

/// Marginal Gaussian interval mu_j +/- z sqrt(Sigma_jj) at the given two-sided level.
/// Pruned coefficients (zero mean and variance) come out as (0, 0).
std::vector<std::pair<double, double>> credible_interval(const Posterior& posterior, double level);

/// Two-sided standard normal quantile for the level, e.g. 1.959964 for 0.95.
double normal_quantile_two_sided(double level);

/// Strict: nmse_value < threshold.
bool phase_success(double nmse_value, double threshold = 1e-2);

/// Fraction of true support blocks whose estimated energy exceeds 1e-4 ||x_hat||^2.
/// A diagnostic of support recovery, not one of the standard error measures.
double block_hit_rate(const Vector& x_hat, std::span<const SupportBlock> support);

struct TrialMetrics {
  double nmse = 0.0;
  double corr = 0.0;
  double block_hit_rate = 0.0;
  Index support_size = 0;  // non-zero entries of x_hat
  bool success = false;
};

TrialMetrics evaluate(const Vector& x_hat, const GroundTruth& truth, double success_threshold = 1e-2);

}  // namespace divsbl
