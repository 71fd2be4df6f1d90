#include "divsbl/inference.hpp"

#include "divsbl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace divsbl {

namespace {

std::size_t at(Index i) { return static_cast<std::size_t>(i); }

// Returns F with F F^T = s for a symmetric positive semi-definite s.
// Negative eigenvalues produced by rounding are clipped.
Matrix psd_factor(const Matrix& s) {
  if (s.rows() == 1) return Matrix::Constant(1, 1, std::sqrt(std::max(s(0, 0), 0.0)));
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

// Inverse of a symmetric positive definite matrix. Falls back to a small
// ridge when the Cholesky factorization breaks down.
Matrix spd_inverse(const Matrix& m) {
  const Index n = m.rows();
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success) return llt.solve(Matrix::Identity(n, n));
  const double scale = std::max(m.trace() / static_cast<double>(n), 1.0);
  double ridge = 1e-10 * scale;
  for (int attempt = 0; attempt < 12; ++attempt, ridge *= 10.0) {
    llt.compute(m + ridge * Matrix::Identity(n, n));
    if (llt.info() == Eigen::Success) return llt.solve(Matrix::Identity(n, n));
  }
  throw DomainError("matrix is not positive definite even after regularization");
}

Eigen::LLT<Matrix> factor_with_jitter(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  const Index n = m.rows();
  double ridge = 1e-10 * std::max(m.trace() / static_cast<double>(n), std::numeric_limits<double>::min());
  for (int attempt = 0; attempt < 12; ++attempt, ridge *= 10.0) {
    llt.compute(m + ridge * Matrix::Identity(n, n));
    if (llt.info() == Eigen::Success) return llt;
  }
  throw DomainError("covariance factorization failed");
}

// Factors of the active prior blocks together with their column offsets.
struct ActiveFactors {
  std::vector<Index> blocks;
  std::vector<Matrix> factors;  // F_b F_b^T = Sigma0_b
  Index block_size = 0;

  Index dim() const { return static_cast<Index>(blocks.size()) * block_size; }
};

ActiveFactors factors_from_sigma0(const Matrix& sigma0, const BlockLayout& layout, const BlockMask& active) {
  ActiveFactors af;
  af.block_size = layout.block_size();
  const Index L = layout.block_size();
  for (Index i = 0; i < layout.num_blocks(); ++i) {
    if (!active[at(i)]) continue;
    const Matrix block = sigma0.block(i * L, i * L, L, L);
    af.blocks.push_back(i);
    af.factors.push_back(psd_factor(0.5 * (block + block.transpose())));
  }
  return af;
}

ActiveFactors factors_from_prior(const DiversifiedPrior& prior, const BlockLayout& layout) {
  ActiveFactors af;
  af.block_size = layout.block_size();
  const Index L = layout.block_size();
  for (Index i = 0; i < layout.num_blocks(); ++i) {
    if (!prior.active[at(i)]) continue;
    const Matrix& b = prior.correlations[at(i)];
    const Vector g = prior.gammas.segment(i * L, L).cwiseSqrt();
    af.blocks.push_back(i);
    af.factors.push_back(g.asDiagonal() * psd_factor(0.5 * (b + b.transpose())));
  }
  return af;
}

// Phi restricted to the active blocks and multiplied by the prior factor.
Matrix whitened_design(const Matrix& phi, const ActiveFactors& af) {
  const Index L = af.block_size;
  Matrix k(phi.rows(), af.dim());
  for (std::size_t b = 0; b < af.blocks.size(); ++b) {
    k.middleCols(static_cast<Index>(b) * L, L).noalias() = phi.middleCols(af.blocks[b] * L, L) * af.factors[b];
  }
  return k;
}

Posterior posterior_from_factors(const MeasurementModel& model, const ActiveFactors& af, const BlockLayout& layout) {
  const Index N = layout.total_dim();
  const Index M = model.num_measurements();
  const Index L = layout.block_size();
  const Index na = af.dim();
  const double beta = model.noise_precision();
  const Vector& y = model.measurements();

  Posterior post{Vector::Zero(N), Matrix::Zero(N, N)};
  if (na == 0) return post;

  const Matrix k = whitened_design(model.design(), af);

  // Posterior in whitened coordinates: x_a = F u, u | y ~ N(m, X).
  Matrix x_cov;
  Vector u_mean;
  if (na <= M) {
    Matrix s = Matrix::Identity(na, na);
    s.selfadjointView<Eigen::Lower>().rankUpdate(k.transpose(), beta);
    s = s.selfadjointView<Eigen::Lower>();
    const Eigen::LLT<Matrix> llt = factor_with_jitter(s);
    x_cov = llt.solve(Matrix::Identity(na, na));
    u_mean = beta * (x_cov * (k.transpose() * y));
  } else {
    Matrix sy = Matrix::Identity(M, M) / beta;
    sy.selfadjointView<Eigen::Lower>().rankUpdate(k);
    sy = sy.selfadjointView<Eigen::Lower>();
    const Eigen::LLT<Matrix> llt = factor_with_jitter(sy);
    // X = I - K^T Sigma_y^{-1} K = I - W^T W with W = chol(Sigma_y)^{-1} K.
    const Matrix w = llt.matrixL().solve(k);
    x_cov = Matrix::Identity(na, na);
    x_cov.selfadjointView<Eigen::Lower>().rankUpdate(w.transpose(), -1.0);
    x_cov = x_cov.selfadjointView<Eigen::Lower>();
    u_mean = k.transpose() * llt.solve(y);
  }

  // Map back: Sigma_a = F X F^T, mu_a = F m, with F block diagonal.
  Matrix tmp(na, na);
  for (std::size_t b = 0; b < af.blocks.size(); ++b) {
    const Index off = static_cast<Index>(b) * L;
    tmp.middleCols(off, L).noalias() = x_cov.middleCols(off, L) * af.factors[b].transpose();
  }
  Matrix sigma_a(na, na);
  Vector mu_a(na);
  for (std::size_t b = 0; b < af.blocks.size(); ++b) {
    const Index off = static_cast<Index>(b) * L;
    sigma_a.middleRows(off, L).noalias() = af.factors[b] * tmp.middleRows(off, L);
    mu_a.segment(off, L).noalias() = af.factors[b] * u_mean.segment(off, L);
  }

  for (std::size_t bi = 0; bi < af.blocks.size(); ++bi) {
    const Index ri = af.blocks[bi] * L;
    post.mean.segment(ri, L) = mu_a.segment(static_cast<Index>(bi) * L, L);
    for (std::size_t bj = 0; bj < af.blocks.size(); ++bj) {
      const Index cj = af.blocks[bj] * L;
      post.covariance.block(ri, cj, L, L) = sigma_a.block(static_cast<Index>(bi) * L, static_cast<Index>(bj) * L, L, L);
    }
  }
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose()).eval();
  return post;
}

void check_posterior_shape(const Posterior& posterior, const BlockLayout& layout) {
  const Index N = layout.total_dim();
  if (posterior.mean.size() != N || posterior.covariance.rows() != N || posterior.covariance.cols() != N) {
    throw ValidationError("posterior dimensions do not match the layout");
  }
}

Vector inverse_sqrt_or_zero(const Eigen::Ref<const Vector>& gammas) {
  Vector out(gammas.size());
  for (Index k = 0; k < gammas.size(); ++k) out(k) = gammas(k) > 0.0 ? 1.0 / std::sqrt(gammas(k)) : 0.0;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Posterior compute_posterior(const MeasurementModel& model, const Matrix& sigma0, const BlockLayout& layout,
                            const BlockMask& active) {
  const Index N = layout.total_dim();
  if (model.signal_dim() != N) throw ValidationError("design matrix column count does not match the layout");
  if (sigma0.rows() != N || sigma0.cols() != N) throw ValidationError("prior covariance must be N x N");
  if (static_cast<Index>(active.size()) != layout.num_blocks()) throw ValidationError("active mask length mismatch");
  if (!sigma0.allFinite()) throw ValidationError("prior covariance contains non-finite entries");
  return posterior_from_factors(model, factors_from_sigma0(sigma0, layout, active), layout);
}

Posterior compute_posterior(const MeasurementModel& model, const DiversifiedPrior& prior, const BlockLayout& layout) {
  if (model.signal_dim() != layout.total_dim()) {
    throw ValidationError("design matrix column count does not match the layout");
  }
  return posterior_from_factors(model, factors_from_prior(prior, layout), layout);
}

Matrix block_second_moment(const Posterior& posterior, const BlockLayout& layout, Index i) {
  auto [mu, sigma] = block_view(posterior.mean, posterior.covariance, i, layout);
  sigma.noalias() += mu * mu.transpose();
  return sigma;
}

double q_value(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout) {
  check_posterior_shape(posterior, layout);
  const Index L = layout.block_size();
  double q = 0.0;
  for (Index i = 0; i < layout.num_blocks(); ++i) {
    if (!prior.active[at(i)]) continue;
    const Vector g = prior.gammas.segment(i * L, L);
    if ((g.array() <= 0.0).any()) {
      throw DomainError("q_value: active block " + std::to_string(i) + " has a zero variance");
    }
    const Vector ginv = g.cwiseSqrt().cwiseInverse();
    const Matrix scaled = ginv.asDiagonal() * block_second_moment(posterior, layout, i) * ginv.asDiagonal();
    const Eigen::LLT<Matrix> llt(prior.correlations[at(i)]);
    if (llt.info() != Eigen::Success) throw DomainError("q_value: correlation matrix is not positive definite");
    const double logdet_b = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double logdet_s0 = g.array().log().sum() + logdet_b;
    q += -0.5 * logdet_s0 - 0.5 * llt.solve(scaled).trace();
  }
  return q;
}

GammaTerms gamma_terms(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout, Index i,
                       Index j) {
  layout.check_block(i);
  const Index L = layout.block_size();
  if (j < 0 || j >= L) throw LayoutError("element index " + std::to_string(j) + " outside block");
  const Matrix c = block_second_moment(posterior, layout, i);
  const Matrix binv = spd_inverse(prior.correlations[at(i)]);
  const Vector w = inverse_sqrt_or_zero(prior.gammas.segment(i * L, L));
  GammaTerms t;
  t.A = binv(j, j) * c(j, j);
  for (Index k = 0; k < L; ++k) {
    if (k != j) t.T += binv(j, k) * w(k) * c(k, j);
  }
  return t;
}

double q_grad_sqrt_gamma(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout, Index i,
                         Index j) {
  const GammaTerms t = gamma_terms(prior, posterior, layout, i, j);
  const double gamma = prior.gammas(layout.block_start(i) + j);
  if (!(gamma > 0.0)) throw DomainError("q_grad_sqrt_gamma: gamma must be positive");
  const double s = std::sqrt(gamma);
  return -1.0 / s + t.A / (s * s * s) + t.T / gamma;
}

double gamma_from_terms(double T, double A) {
  A = std::max(A, kMinA);
  const double root = std::sqrt(T * T + 4.0 * A);
  // Both branches are the same closed form; each avoids cancellation on its side of T = 0.
  if (T >= 0.0) {
    const double s = 0.5 * (T + root);
    return s * s;
  }
  const double d = root - T;
  return 4.0 * A * A / (d * d);
}

Vector update_gamma(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout) {
  check_posterior_shape(posterior, layout);
  const Index L = layout.block_size();
  Vector out = Vector::Zero(layout.total_dim());
  for (Index i = 0; i < layout.num_blocks(); ++i) {
    if (!prior.active[at(i)]) continue;
    const Matrix c = block_second_moment(posterior, layout, i);
    const Matrix binv = spd_inverse(prior.correlations[at(i)]);
    Vector w = inverse_sqrt_or_zero(prior.gammas.segment(i * L, L));
    // Sweep in place: each new gamma feeds the next coordinate. A simultaneous update
    // can overshoot by orders of magnitude when a neighbour's variance is stale.
    for (Index j = 0; j < L; ++j) {
      double T = 0.0;
      for (Index k = 0; k < L; ++k) {
        if (k != j) T += binv(j, k) * w(k) * c(k, j);
      }
      out(i * L + j) = gamma_from_terms(T, binv(j, j) * c(j, j));
      const double g = out(i * L + j);
      w(j) = g > 0.0 ? 1.0 / std::sqrt(g) : 0.0;
    }
  }
  return out;
}

Matrix unconstrained_correlation(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout,
                                 Index i) {
  const Index L = layout.block_size();
  const Vector g = prior.gammas.segment(layout.block_start(i), L);
  if ((g.array() <= 0.0).any()) {
    throw DomainError("unconstrained_correlation: block " + std::to_string(i) + " has a zero variance");
  }
  const Vector ginv = g.cwiseSqrt().cwiseInverse();
  Matrix u = ginv.asDiagonal() * block_second_moment(posterior, layout, i) * ginv.asDiagonal();
  return 0.5 * (u + u.transpose());
}

Matrix common_correlation(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout) {
  const Index L = layout.block_size();
  Matrix sum = Matrix::Zero(L, L);
  Index count = 0;
  for (Index i = 0; i < layout.num_blocks(); ++i) {
    if (!prior.active[at(i)]) continue;
    sum += unconstrained_correlation(prior, posterior, layout, i);
    ++count;
  }
  if (count == 0) throw DomainError("common_correlation: no active blocks");
  return sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------

double spd_logdet(const Matrix& m) {
  const Index n = m.rows();
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    const double tr = m.trace();
    double ridge = 1e-10 * (tr > 0.0 ? tr / static_cast<double>(n) : 1.0);
    // Jitter stays below 1e-4 of the mean diagonal; anything needing more is not semi-definite.
    for (int attempt = 0; attempt < 7 && llt.info() != Eigen::Success; ++attempt, ridge *= 10.0) {
      llt.compute(m + ridge * Matrix::Identity(n, n));
    }
    if (llt.info() != Eigen::Success) throw DomainError("spd_logdet: matrix is not positive semi-definite");
  }
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

namespace {

double clamp_multiplier(double lambda) {
  return std::max(lambda, 0.5 * (kMinMultiplierDenominator - 1.0));
}

std::vector<Matrix> all_unconstrained(const DiversifiedPrior& prior, const Posterior& posterior,
                                      const BlockLayout& layout) {
  std::vector<Matrix> u(at(layout.num_blocks()));
  for (Index i = 0; i < layout.num_blocks(); ++i) {
    if (prior.active[at(i)]) u[at(i)] = unconstrained_correlation(prior, posterior, layout, i);
  }
  return u;
}

}  // namespace

DualState dual_step(const std::vector<Matrix>& unconstrained, const std::vector<Matrix>& correlations,
                    const Vector& multipliers, const BlockMask& active, double common_logdet, double step) {
  if (!(step > 0.0)) throw ValidationError("dual step size must be positive");
  DualState st{correlations, multipliers, Vector::Zero(multipliers.size())};
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (!active[i]) continue;
    const double lambda = multipliers(static_cast<Index>(i));
    const double denom = 1.0 + 2.0 * lambda;
    if (!(denom > 0.0)) throw ValidationError("dual_step: 1 + 2 lambda must be positive");
    const double residual = spd_logdet(correlations[i]) - common_logdet;
    st.residuals(static_cast<Index>(i)) = residual;
    st.correlations[i] = unconstrained[i] / denom;
    st.multipliers(static_cast<Index>(i)) = clamp_multiplier(lambda + step * residual);
  }
  return st;
}

DualState dual_step(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout,
                    const Matrix& common, double step) {
  return dual_step(all_unconstrained(prior, posterior, layout), prior.correlations, prior.multipliers, prior.active,
                   spd_logdet(common), step);
}

DualResult diversify_complete(const DiversifiedPrior& prior, const Posterior& posterior, const BlockLayout& layout,
                              const Matrix& common, double tol, int max_iters) {
  if (!(tol > 0.0) || max_iters < 1) throw ValidationError("diversify_complete: need tol > 0 and max_iters >= 1");
  const Index L = layout.block_size();
  const double common_ld = spd_logdet(common);

  DualResult out;
  out.state = DualState{prior.correlations, prior.multipliers, Vector::Zero(layout.num_blocks())};
  out.iterations.assign(at(layout.num_blocks()), 0);
  out.converged = true;

  for (Index i = 0; i < layout.num_blocks(); ++i) {
    if (!prior.active[at(i)]) continue;
    const Matrix u = unconstrained_correlation(prior, posterior, layout, i);
    const double u_ld = spd_logdet(u);

    // log det (U / c) = log det U - L log c, so only the scalar sequence needs tracking.
    // A block that already satisfies the constraint keeps its matrix. Otherwise the
    // iteration starts from the primal minimizer for the incoming multiplier, so that
    // every residual is evaluated on a B_i consistent with the lambda that produced it.
    double lambda = prior.multipliers(i);
    double current_ld = spd_logdet(prior.correlations[at(i)]);
    int k = 1;
    if (std::abs(current_ld - common_ld) > tol) {
      current_ld = u_ld - static_cast<double>(L) * std::log(1.0 + 2.0 * lambda);
      while (std::abs(current_ld - common_ld) > tol && k <= max_iters) {
        lambda = clamp_multiplier(lambda + (current_ld - common_ld) / static_cast<double>(k));
        current_ld = u_ld - static_cast<double>(L) * std::log(1.0 + 2.0 * lambda);
        ++k;
      }
      out.state.correlations[at(i)] = u / (1.0 + 2.0 * lambda);
    }
    out.iterations[at(i)] = k - 1;
    out.state.multipliers(i) = lambda;
    out.state.residuals(i) = current_ld - common_ld;
    if (std::abs(current_ld - common_ld) > tol) out.converged = false;
  }
  return out;
}

// ---------------------------------------------------------------------------

Matrix toeplitz_correct(const Matrix& b, double r_clamp) {
  const Index L = b.rows();
  if (L < 1 || b.cols() != L) throw ValidationError("toeplitz_correct: expected a non-empty square matrix");
  const double m0 = b.diagonal().mean();
  if (!(m0 > 0.0) || !std::isfinite(m0)) return Matrix::Identity(L, L);
  double r = 0.0;
  if (L > 1) {
    const double m1 = b.diagonal(-1).mean();
    r = std::clamp(m1 / m0, -r_clamp, r_clamp);
    if (!std::isfinite(r)) r = 0.0;
  }
  Matrix t(L, L);
  for (Index s = 0; s < L; ++s) {
    for (Index k = 0; k < L; ++k) t(s, k) = std::pow(r, static_cast<double>(std::abs(s - k)));
  }
  return t;
}

double update_beta(const MeasurementModel& model, const Posterior& posterior, double beta_max) {
  const Matrix& phi = model.design();
  const Index M = model.num_measurements();
  const double residual = (model.measurements() - phi * posterior.mean).squaredNorm();

  const double trace = posterior.covariance.cwiseProduct(model.gram()).sum();
  const double denom = residual + std::max(trace, 0.0);
  if (!(denom > static_cast<double>(M) / beta_max)) return beta_max;
  return static_cast<double>(M) / denom;
}

PruneOutcome prune(const DiversifiedPrior& prior, const Posterior& posterior, double threshold,
                   const BlockLayout& layout) {
  check_posterior_shape(posterior, layout);
  const Index L = layout.block_size();
  PruneOutcome out{prior, posterior, {}};
  for (Index i = 0; i < layout.num_blocks(); ++i) {
    if (!prior.active[at(i)]) continue;
    if (prior.gammas.segment(i * L, L).mean() < threshold) {
      out.prior.active[at(i)] = false;
      out.prior.gammas.segment(i * L, L).setZero();
      out.posterior.mean.segment(i * L, L).setZero();
      out.posterior.covariance.middleRows(i * L, L).setZero();
      out.posterior.covariance.middleCols(i * L, L).setZero();
      out.pruned.push_back(i);
    }
  }
  return out;
}

double cost(const MeasurementModel& model, const DiversifiedPrior& prior, const BlockLayout& layout) {
  const Index M = model.num_measurements();
  const ActiveFactors af = factors_from_prior(prior, layout);
  Matrix sy = Matrix::Identity(M, M) / model.noise_precision();
  if (af.dim() > 0) {
    const Matrix k = whitened_design(model.design(), af);
    sy.selfadjointView<Eigen::Lower>().rankUpdate(k);
    sy = sy.selfadjointView<Eigen::Lower>();
  }
  const Eigen::LLT<Matrix> llt = factor_with_jitter(sy);
  const Vector& y = model.measurements();
  const double quad = y.dot(llt.solve(y));
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -quad - logdet;
}

// ---------------------------------------------------------------------------

Vector initial_gammas(const BlockLayout& layout, const SolverConfig& config) {
  const Index N = layout.total_dim();
  if (!config.gamma_init_random) return Vector::Constant(N, config.gamma_init_scale);
  std::seed_seq seq{static_cast<std::uint32_t>(config.gamma_init_seed),
                    static_cast<std::uint32_t>(config.gamma_init_seed >> 32), 0x67616d6du};
  std::mt19937_64 gen(seq);
  Vector g(N);
  for (Index k = 0; k < N; ++k) {
    // 53-bit uniform in (0, 1); zero would leave an element with no prior mass.
    const double u = (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
    g(k) = config.gamma_init_scale * u;
  }
  return g;
}

double initial_beta(const MeasurementModel& model, const SolverConfig& config) {
  return config.beta_init.value_or(model.noise_precision());
}

double prune_threshold(const DiversifiedPrior& prior, const BlockLayout& layout, const SolverConfig& config) {
  if (config.prune_threshold <= 0.0) return 0.0;
  const Index L = layout.block_size();
  double largest = 0.0;
  for (Index i = 0; i < layout.num_blocks(); ++i) {
    if (prior.active[at(i)]) largest = std::max(largest, prior.gammas.segment(i * L, L).mean());
  }
  return std::max(config.prune_threshold * largest, SolverConfig::kPruneFloor);
}

SolveResult solve(const MeasurementModel& model, const BlockLayout& layout, const SolverConfig& config,
                  const IterationObserver& observer) {
  config.validate();
  if (model.signal_dim() != layout.total_dim()) {
    throw ValidationError("design matrix has " + std::to_string(model.signal_dim()) + " columns but the layout has " +
                          std::to_string(layout.total_dim()) + " elements");
  }

  DiversifiedPrior prior = DiversifiedPrior::with_gammas(layout, initial_gammas(layout, config));
  double beta = initial_beta(model, config);
  MeasurementModel current = model.with_noise_precision(beta);
  Posterior post = compute_posterior(current, prior, layout);

  SolveResult result;
  for (int t = 1; t <= config.max_iters; ++t) {
    const Vector previous_mean = post.mean;
    result.iterations = t;

    if (config.prune_threshold > 0.0) {
      PruneOutcome pruned = prune(prior, post, prune_threshold(prior, layout, config), layout);
      prior = std::move(pruned.prior);
      post = std::move(pruned.posterior);
    }
    if (prior.num_active() == 0) {
      post.mean.setZero();
      post.covariance.setZero();
      result.cost_trace.push_back(cost(current, prior, layout));
      result.converged = true;
      break;
    }

    prior.gammas = update_gamma(prior, post, layout);

    if (config.learn_correlation) {
      const Matrix common = common_correlation(prior, post, layout);
      if (config.dual_mode == DualMode::one_step) {
        DualState st = dual_step(prior, post, layout, common, 1.0 / static_cast<double>(t));
        prior.correlations = std::move(st.correlations);
        prior.multipliers = std::move(st.multipliers);
      } else {
        DualResult dr = diversify_complete(prior, post, layout, common, config.dual_tol, config.dual_max_iters);
        prior.correlations = std::move(dr.state.correlations);
        prior.multipliers = std::move(dr.state.multipliers);
      }
      prior.common_correlation = common;
      if (config.toeplitz_enabled) {
        for (Index i = 0; i < layout.num_blocks(); ++i) {
          if (prior.active[at(i)]) prior.correlations[at(i)] = toeplitz_correct(prior.correlations[at(i)], config.r_clamp);
        }
      }
    }

    post = compute_posterior(current, prior, layout);
    if (config.learn_beta) {
      beta = update_beta(current, post, config.beta_max);
      current = current.with_noise_precision(beta);
    }
    const double c = cost(current, prior, layout);
    result.cost_trace.push_back(c);
    if (observer) observer(IterationView{t, prior, post, beta, c});

    if ((post.mean - previous_mean).lpNorm<Eigen::Infinity>() < config.conv_tol) {
      result.converged = true;
      break;
    }
  }

  result.x_hat = post.mean;
  result.posterior = std::move(post);
  result.prior = std::move(prior);
  result.beta = beta;
  return result;
}

}  // namespace divsbl
