#include "divsbl/model.hpp"

#include "divsbl/errors.hpp"

#include <cmath>
#include <string>

namespace divsbl {

namespace {

bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

}  // namespace

BlockLayout::BlockLayout(Index num_blocks, Index block_size) : num_blocks_(num_blocks), block_size_(block_size) {
  if (num_blocks < 1 || block_size < 1) {
    throw LayoutError("block layout needs at least one block of size >= 1 (got g=" + std::to_string(num_blocks) +
                      ", L=" + std::to_string(block_size) + ")");
  }
}

BlockLayout BlockLayout::from_dimension(Index total_dim, Index block_size) {
  if (block_size < 1 || total_dim < 1 || total_dim % block_size != 0) {
    throw LayoutError("block size " + std::to_string(block_size) + " does not divide dimension " +
                      std::to_string(total_dim));
  }
  return BlockLayout(total_dim / block_size, block_size);
}

void BlockLayout::check_block(Index i) const {
  if (i < 0 || i >= num_blocks_) {
    throw LayoutError("block index " + std::to_string(i) + " outside [0, " + std::to_string(num_blocks_) + ")");
  }
}

Index BlockLayout::block_start(Index i) const {
  check_block(i);
  return i * block_size_;
}

MeasurementModel::MeasurementModel(Matrix design, Vector measurements, double noise_precision)
    : MeasurementModel(std::make_shared<const Matrix>(std::move(design)),
                       std::make_shared<const Vector>(std::move(measurements)), nullptr, noise_precision) {
  if (design_->rows() < 1 || design_->cols() < 1) {
    throw ValidationError("design matrix must have at least one row and one column");
  }
  if (design_->rows() != measurements_->size()) {
    throw ValidationError("design matrix has " + std::to_string(design_->rows()) + " rows but y has " +
                          std::to_string(measurements_->size()) + " entries");
  }
  if (!all_finite(*design_)) throw ValidationError("design matrix contains non-finite entries");
  if (!measurements_->allFinite()) throw ValidationError("measurements contain non-finite entries");
  Matrix gram(design_->cols(), design_->cols());
  gram.setZero();
  gram.selfadjointView<Eigen::Lower>().rankUpdate(design_->transpose());
  gram_ = std::make_shared<const Matrix>(gram.selfadjointView<Eigen::Lower>());
}

MeasurementModel::MeasurementModel(std::shared_ptr<const Matrix> design, std::shared_ptr<const Vector> y,
                                   std::shared_ptr<const Matrix> gram, double beta)
    : design_(std::move(design)), measurements_(std::move(y)), gram_(std::move(gram)), noise_precision_(beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ValidationError("noise precision must be positive and finite");
  }
}

MeasurementModel MeasurementModel::with_noise_precision(double beta) const {
  return MeasurementModel(design_, measurements_, gram_, beta);
}

DiversifiedPrior DiversifiedPrior::initial(const BlockLayout& layout, double gamma_scale) {
  if (!(gamma_scale > 0.0) || !std::isfinite(gamma_scale)) {
    throw ValidationError("initial gamma scale must be positive");
  }
  return with_gammas(layout, Vector::Constant(layout.total_dim(), gamma_scale));
}

DiversifiedPrior DiversifiedPrior::with_gammas(const BlockLayout& layout, Vector gammas) {
  const Index L = layout.block_size();
  DiversifiedPrior prior;
  prior.gammas = std::move(gammas);
  prior.correlations.assign(static_cast<std::size_t>(layout.num_blocks()), Matrix::Identity(L, L));
  prior.common_correlation = Matrix::Identity(L, L);
  prior.multipliers = Vector::Zero(layout.num_blocks());
  prior.active.assign(static_cast<std::size_t>(layout.num_blocks()), true);
  prior.validate(layout);
  return prior;
}

Index DiversifiedPrior::num_active() const {
  Index n = 0;
  for (bool a : active) n += a ? 1 : 0;
  return n;
}

void DiversifiedPrior::validate(const BlockLayout& layout) const {
  const Index g = layout.num_blocks();
  const Index L = layout.block_size();
  if (gammas.size() != layout.total_dim()) throw ValidationError("gamma vector length does not match layout");
  if (static_cast<Index>(correlations.size()) != g) throw ValidationError("need one correlation matrix per block");
  if (multipliers.size() != g) throw ValidationError("need one multiplier per block");
  if (static_cast<Index>(active.size()) != g) throw ValidationError("active mask length does not match layout");
  if (common_correlation.rows() != L || common_correlation.cols() != L) {
    throw ValidationError("common correlation must be L x L");
  }
  if (!gammas.allFinite() || (gammas.array() < 0.0).any()) {
    throw ValidationError("gammas must be finite and non-negative");
  }
  for (Index i = 0; i < g; ++i) {
    const Matrix& b = correlations[static_cast<std::size_t>(i)];
    if (b.rows() != L || b.cols() != L) throw ValidationError("correlation matrix must be L x L");
    if (!all_finite(b)) throw ValidationError("correlation matrix contains non-finite entries");
    if (active[static_cast<std::size_t>(i)] && !(1.0 + 2.0 * multipliers(i) > 0.0)) {
      throw ValidationError("multiplier violates 1 + 2 lambda > 0 on block " + std::to_string(i));
    }
  }
}

void SolverConfig::validate() const {
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(conv_tol > 0.0)) throw ConfigError("conv_tol must be positive");
  if (!(prune_threshold >= 0.0)) throw ConfigError("prune_threshold must be non-negative");
  if (!(dual_tol > 0.0)) throw ConfigError("dual_tol must be positive");
  if (dual_max_iters < 1) throw ConfigError("dual_max_iters must be >= 1");
  if (beta_init && !(*beta_init > 0.0 && std::isfinite(*beta_init))) throw ConfigError("beta_init must be positive");
  if (!(gamma_init_scale > 0.0) || !std::isfinite(gamma_init_scale)) {
    throw ConfigError("gamma_init_scale must be positive");
  }
  if (!(r_clamp > 0.0 && r_clamp < 1.0)) throw ConfigError("r_clamp must lie in (0, 1)");
  if (!(beta_max > 0.0)) throw ConfigError("beta_max must be positive");
}

double default_noise_precision(const Vector& y) {
  const double power = y.size() > 0 ? y.squaredNorm() / static_cast<double>(y.size()) : 0.0;
  return power > 0.0 ? 100.0 / power : 1.0;
}

std::pair<Vector, Matrix> block_view(const Vector& v, const Matrix& sigma, Index i, const BlockLayout& layout) {
  const Index start = layout.block_start(i);
  const Index L = layout.block_size();
  if (v.size() != layout.total_dim() || sigma.rows() != layout.total_dim() || sigma.cols() != layout.total_dim()) {
    throw LayoutError("block_view: operands do not match the layout dimension");
  }
  return {v.segment(start, L), sigma.block(start, start, L, L)};
}

Matrix prior_block(const DiversifiedPrior& prior, const BlockLayout& layout, Index i) {
  const Index start = layout.block_start(i);
  const Index L = layout.block_size();
  if (!prior.active[static_cast<std::size_t>(i)]) return Matrix::Zero(L, L);
  const Vector g = prior.gammas.segment(start, L).cwiseSqrt();
  return g.asDiagonal() * prior.correlations[static_cast<std::size_t>(i)] * g.asDiagonal();
}

Matrix assemble_prior_covariance(const DiversifiedPrior& prior, const BlockLayout& layout) {
  prior.validate(layout);
  const Index L = layout.block_size();
  Matrix sigma0 = Matrix::Zero(layout.total_dim(), layout.total_dim());
  for (Index i = 0; i < layout.num_blocks(); ++i) {
    sigma0.block(i * L, i * L, L, L) = prior_block(prior, layout, i);
  }
  return sigma0;
}

}  // namespace divsbl
