#pragma once

// Domain types shared by the inference engine, the baselines and the harness.
//
// Blocks are indexed from 0. Block i covers the element range
// [i * L, (i + 1) * L) of any length-N vector.

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace divsbl {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using BlockMask = std::vector<bool>;

/// Equal-size partition of an N-vector into g contiguous blocks of size L.
class BlockLayout {
 public:
  BlockLayout(Index num_blocks, Index block_size);

  /// Throws LayoutError unless block_size divides total_dim.
  static BlockLayout from_dimension(Index total_dim, Index block_size);

  Index num_blocks() const { return num_blocks_; }
  Index block_size() const { return block_size_; }
  Index total_dim() const { return num_blocks_ * block_size_; }

  /// First element index of block i. Throws LayoutError when i is out of range.
  Index block_start(Index i) const;
  void check_block(Index i) const;

  friend bool operator==(const BlockLayout&, const BlockLayout&) = default;

 private:
  Index num_blocks_;
  Index block_size_;
};

/// y = Phi x + n with n ~ N(0, 1/beta I).
///
/// The design matrix and measurements are shared between copies, so
/// with_noise_precision() is cheap.
class MeasurementModel {
 public:
  MeasurementModel(Matrix design, Vector measurements, double noise_precision);

  const Matrix& design() const { return *design_; }
  const Vector& measurements() const { return *measurements_; }
  /// Phi^T Phi, computed once at construction.
  const Matrix& gram() const { return *gram_; }
  double noise_precision() const { return noise_precision_; }

  Index num_measurements() const { return design_->rows(); }
  Index signal_dim() const { return design_->cols(); }

  MeasurementModel with_noise_precision(double beta) const;

 private:
  MeasurementModel(std::shared_ptr<const Matrix> design, std::shared_ptr<const Vector> y,
                   std::shared_ptr<const Matrix> gram, double beta);

  std::shared_ptr<const Matrix> design_;
  std::shared_ptr<const Vector> measurements_;
  std::shared_ptr<const Matrix> gram_;
  double noise_precision_;
};

/// Hyperparameters of the diversified block prior.
///
/// Block i has prior covariance G_i B_i G_i with G_i = diag(sqrt(gamma_i1), ..., sqrt(gamma_iL)).
/// Pruned blocks keep their slot (gammas zero, active[i] false) so indices stay stable.
struct DiversifiedPrior {
  Vector gammas;                     // length N
  std::vector<Matrix> correlations;  // g matrices, L x L
  Matrix common_correlation;         // L x L
  Vector multipliers;                // length g, Lagrange multipliers of the log-det constraints
  BlockMask active;                  // length g

  /// gamma = scale * 1, all B_i = B = I, multipliers 0, every block active.
  static DiversifiedPrior initial(const BlockLayout& layout, double gamma_scale = 1.0);

  /// Same as initial() but with caller-supplied variances.
  static DiversifiedPrior with_gammas(const BlockLayout& layout, Vector gammas);

  Index num_active() const;

  /// Throws ValidationError on wrong shapes, negative or non-finite entries,
  /// or a multiplier violating 1 + 2 lambda > 0 on an active block.
  void validate(const BlockLayout& layout) const;
};

struct Posterior {
  Vector mean;
  Matrix covariance;
};

enum class DualMode { one_step, complete };

struct SolverConfig {
  int max_iters = 500;
  double conv_tol = 1e-8;
  /// Relative: a block is pruned when its mean variance drops below
  /// prune_threshold * (largest block mean), floored at kPruneFloor. Zero disables pruning.
  double prune_threshold = 1e-3;
  DualMode dual_mode = DualMode::one_step;
  double dual_tol = 1e-3;
  int dual_max_iters = 500;
  bool toeplitz_enabled = true;
  /// When false every B_i stays at the identity (no B, no dual ascent, no Toeplitz step).
  bool learn_correlation = true;
  bool learn_beta = true;
  /// Unset: start from the model's noise precision.
  std::optional<double> beta_init;
  double gamma_init_scale = 1.0;
  /// Draw the initial gammas as scale * U(0, 1) instead of scale * 1.
  bool gamma_init_random = false;
  std::uint64_t gamma_init_seed = 0;
  double r_clamp = 0.99;
  double beta_max = 1e12;

  static constexpr double kPruneFloor = 1e-12;

  /// Throws ConfigError when a bound is violated.
  void validate() const;
};

struct SolveResult {
  Vector x_hat;
  Posterior posterior;
  DiversifiedPrior prior;
  double beta = 0.0;
  int iterations = 0;
  std::vector<double> cost_trace;
  bool converged = false;
};

/// 100 / mean(y^2), a 20 dB guess at the noise precision; 1 when y = 0.
double default_noise_precision(const Vector& y);

/// Block i of v and the matching diagonal block of sigma.
std::pair<Vector, Matrix> block_view(const Vector& v, const Matrix& sigma, Index i, const BlockLayout& layout);

/// Sigma_0 = blockdiag(G_1 B_1 G_1, ..., G_g B_g G_g). Pruned blocks are zero.
Matrix assemble_prior_covariance(const DiversifiedPrior& prior, const BlockLayout& layout);

/// G_i B_i G_i for a single block.
Matrix prior_block(const DiversifiedPrior& prior, const BlockLayout& layout, Index i);

}  // namespace divsbl
