#include "divsbl/baselines.hpp"

#include "divsbl/errors.hpp"

#include <string>

namespace divsbl {

namespace {

std::size_t at(Index i) { return static_cast<std::size_t>(i); }

// Shared outer loop: prune, variance/correlation update, posterior, noise.
template <typename UpdateFn>
SolveResult run_em(const MeasurementModel& model, const BlockLayout& layout, const SolverConfig& config,
                   const IterationObserver& observer, UpdateFn&& update) {
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

    update(prior, post);

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

}  // namespace

Vector sbl_reference_step(const MeasurementModel& model, const Vector& gammas) {
  const Matrix& phi = model.design();
  const Index M = model.num_measurements();
  if (gammas.size() != model.signal_dim()) throw ValidationError("sbl_reference_step: gamma length mismatch");
  if ((gammas.array() < 0.0).any()) throw ValidationError("sbl_reference_step: negative gamma");

  // Sigma_y = 1/beta I + Phi Gamma Phi^T; mu = Gamma Phi^T Sigma_y^{-1} y;
  // Sigma_jj = gamma_j - gamma_j^2 phi_j^T Sigma_y^{-1} phi_j.
  const Matrix phi_gamma = phi * gammas.asDiagonal();
  Matrix sy = phi_gamma * phi.transpose();
  sy.diagonal().array() += 1.0 / model.noise_precision();
  const Eigen::LDLT<Matrix> ldlt(sy);
  const Matrix sy_inv_phi = ldlt.solve(phi);
  const Vector mu = gammas.asDiagonal() * (sy_inv_phi.transpose() * model.measurements());

  Vector out(gammas.size());
  for (Index j = 0; j < gammas.size(); ++j) {
    const double sigma_jj = gammas(j) - gammas(j) * gammas(j) * phi.col(j).dot(sy_inv_phi.col(j));
    out(j) = sigma_jj + mu(j) * mu(j);
  }
  (void)M;
  return out;
}

SolveResult sbl_solve(const MeasurementModel& model, const SolverConfig& config, const IterationObserver& observer) {
  const BlockLayout layout(model.signal_dim(), 1);
  return run_em(model, layout, config, observer, [](DiversifiedPrior& prior, const Posterior& post) {
    for (Index j = 0; j < prior.gammas.size(); ++j) {
      if (!prior.active[at(j)]) continue;
      const double mu = post.mean(j);
      prior.gammas(j) = std::max(post.covariance(j, j) + mu * mu, kMinA);
    }
  });
}

SolveResult bsbl_strong_solve(const MeasurementModel& model, const BlockLayout& layout, const SolverConfig& config,
                              const IterationObserver& observer) {
  const Index L = layout.block_size();
  return run_em(model, layout, config, observer, [&](DiversifiedPrior& prior, const Posterior& post) {
    const Matrix b_inv = prior.common_correlation.ldlt().solve(Matrix::Identity(L, L));
    Matrix b_sum = Matrix::Zero(L, L);
    Index count = 0;
    for (Index i = 0; i < layout.num_blocks(); ++i) {
      if (!prior.active[at(i)]) continue;
      const Matrix c = block_second_moment(post, layout, i);
      const double gamma = std::max((b_inv * c).trace() / static_cast<double>(L), kMinA);
      prior.gammas.segment(i * L, L).setConstant(gamma);
      b_sum += c / gamma;
      ++count;
    }
    if (!config.learn_correlation) return;
    Matrix b = b_sum / static_cast<double>(count);
    b = 0.5 * (b + b.transpose());
    if (config.toeplitz_enabled) b = toeplitz_correct(b, config.r_clamp);
    prior.common_correlation = b;
    for (Index i = 0; i < layout.num_blocks(); ++i) {
      if (prior.active[at(i)]) prior.correlations[at(i)] = b;
    }
  });
}

}  // namespace divsbl
