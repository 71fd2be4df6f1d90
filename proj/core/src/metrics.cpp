#include "divsbl/metrics.hpp"

#include "divsbl/errors.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>

namespace divsbl {

double nmse(const Vector& x_hat, const Vector& x_true) {
  if (x_hat.size() != x_true.size()) throw ValidationError("nmse: size mismatch");
  const double denom = x_true.squaredNorm();
  if (!(denom > 0.0)) throw DomainError("nmse: true signal is zero");
  return (x_hat - x_true).squaredNorm() / denom;
}

CorrValue corr(const Vector& x_hat, const Vector& x_true) {
  if (x_hat.size() != x_true.size()) throw ValidationError("corr: size mismatch");
  const double na = x_hat.norm();
  const double nb = x_true.norm();
  if (!(na > 0.0) || !(nb > 0.0)) return {0.0, true};
  return {x_hat.dot(x_true) / (na * nb), false};
}

double normal_quantile_two_sided(double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("credible level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + 0.5 * level);
}

std::vector<std::pair<double, double>> credible_interval(const Posterior& posterior, double level) {
  const double z = normal_quantile_two_sided(level);
  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<std::size_t>(posterior.mean.size()));
  for (Index j = 0; j < posterior.mean.size(); ++j) {
    const double half = z * std::sqrt(std::max(posterior.covariance(j, j), 0.0));
    out.emplace_back(posterior.mean(j) - half, posterior.mean(j) + half);
  }
  return out;
}

bool phase_success(double nmse_value, double threshold) { return nmse_value < threshold; }

double block_hit_rate(const Vector& x_hat, std::span<const SupportBlock> support) {
  if (support.empty()) return 1.0;
  const double floor = 1e-4 * x_hat.squaredNorm();
  std::size_t hits = 0;
  for (const SupportBlock& b : support) {
    if (x_hat.segment(b.start, b.length).squaredNorm() > floor) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(support.size());
}

TrialMetrics evaluate(const Vector& x_hat, const GroundTruth& truth, double success_threshold) {
  TrialMetrics m;
  m.nmse = nmse(x_hat, truth.x_true);
  m.corr = corr(x_hat, truth.x_true).value;
  m.block_hit_rate = block_hit_rate(x_hat, truth.support);
  m.support_size = static_cast<Index>((x_hat.array() != 0.0).count());
  m.success = phase_success(m.nmse, success_threshold);
  return m;
}

}  // namespace divsbl
