#include "divsbl/datagen.hpp"

#include "divsbl/errors.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

namespace divsbl {

namespace {

boost::random::mt19937_64 make_engine(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return boost::random::mt19937_64((static_cast<std::uint64_t>(words[0]) << 32) | words[1]);
}

double draw_uniform(boost::random::mt19937_64& gen, double lo, double hi) {
  if (lo == hi) return lo;
  return boost::random::uniform_real_distribution<double>(lo, hi)(gen);
}

}  // namespace

void SignalSpec::validate() const {
  if (dim < 1) throw ConfigError("signal dimension must be >= 1");
  if (num_blocks < 0) throw ConfigError("number of blocks must be >= 0");
  if (block_size_min < 1 || block_size_max < block_size_min) throw ConfigError("invalid block size range");
  if (!(variance_min > 0.0) || variance_max < variance_min || !std::isfinite(variance_max)) {
    throw ConfigError("invalid variance range");
  }
  if (!(correlation_min > -1.0) || correlation_max < correlation_min || !(correlation_max < 1.0)) {
    throw ConfigError("correlation range must satisfy -1 < min <= max < 1");
  }
  if (align < 1 || dim % align != 0 || block_size_min % align != 0 || block_size_max % align != 0) {
    throw ConfigError("dimension and block sizes must be multiples of the alignment");
  }
  if (num_blocks * block_size_min > dim) {
    throw ConfigError("cannot place " + std::to_string(num_blocks) + " blocks of size >= " +
                      std::to_string(block_size_min) + " in dimension " + std::to_string(dim));
  }
}

Matrix gen_design_matrix(Index M, Index N, std::uint64_t seed) {
  if (M < 1 || N < 1) throw ConfigError("design matrix needs M >= 1 and N >= 1");
  auto gen = make_engine(seed, RandomStream::design);
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  Matrix phi(M, N);
  for (Index c = 0; c < N; ++c) {
    for (Index r = 0; r < M; ++r) phi(r, c) = normal(gen);
    const double norm = phi.col(c).norm();
    if (norm > 0.0) {
      phi.col(c) /= norm;
    } else {
      phi.col(c).setZero();
      phi(0, c) = 1.0;
    }
  }
  return phi;
}

GroundTruth gen_block_sparse(const SignalSpec& spec) {
  spec.validate();
  auto gen = make_engine(spec.seed, RandomStream::signal);
  GroundTruth truth{Vector::Zero(spec.dim), {}};
  if (spec.num_blocks == 0) return truth;

  const Index unit = spec.align;
  const Index slots = spec.dim / unit;
  boost::random::uniform_int_distribution<Index> size_dist(spec.block_size_min / unit, spec.block_size_max / unit);

  // Redraw sizes until they fit; validate() guarantees the minimum sizes do.
  std::vector<Index> sizes(static_cast<std::size_t>(spec.num_blocks));
  Index used = 0;
  for (int attempt = 0;; ++attempt) {
    for (auto& s : sizes) s = size_dist(gen);
    used = std::accumulate(sizes.begin(), sizes.end(), Index{0});
    if (used <= slots) break;
    if (attempt == 1000) throw ConfigError("could not draw block sizes that fit the signal dimension");
  }

  // Uniform placement: choose which K of the (free + K) positions in the
  // sequence of free slots and blocks are blocks.
  const Index free = slots - used;
  const Index positions = free + spec.num_blocks;
  std::vector<Index> pool(static_cast<std::size_t>(positions));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index k = 0; k < spec.num_blocks; ++k) {
    boost::random::uniform_int_distribution<Index> pick(k, positions - 1);
    std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(pick(gen))]);
  }
  std::vector<Index> chosen(pool.begin(), pool.begin() + spec.num_blocks);
  std::sort(chosen.begin(), chosen.end());

  const bool shared = spec.variance_mode == VarianceMode::homoscedastic;
  const double shared_variance = draw_uniform(gen, spec.variance_min, spec.variance_max);
  boost::random::normal_distribution<double> normal(0.0, 1.0);

  Index blocks_before = 0;
  for (std::size_t b = 0; b < chosen.size(); ++b) {
    const Index start_unit = chosen[b] - static_cast<Index>(b) + blocks_before;
    blocks_before += sizes[b];
    const Index start = start_unit * unit;
    const Index length = sizes[b] * unit;
    const double variance = shared ? shared_variance : draw_uniform(gen, spec.variance_min, spec.variance_max);
    const double sd = std::sqrt(variance);
    const double rho = draw_uniform(gen, spec.correlation_min, spec.correlation_max);
    const double innovation = std::sqrt(1.0 - rho * rho);
    double z = 0.0;
    for (Index k = 0; k < length; ++k) {
      z = k == 0 ? normal(gen) : rho * z + innovation * normal(gen);
      double weight = 1.0;
      if (spec.envelope == Envelope::tapered) {
        weight = std::numbers::sqrt2 * std::sin(std::numbers::pi * (static_cast<double>(k) + 0.5) /
                                                static_cast<double>(length));
      }
      truth.x_true(start + k) = sd * weight * z;
    }
    truth.support.push_back(SupportBlock{start, length, variance, rho});
  }
  return truth;
}

NoisyMeasurements add_noise(const Vector& y_clean, double snr_db, std::uint64_t seed) {
  const double power = y_clean.squaredNorm();
  if (!(power > 0.0)) throw DomainError("add_noise: clean measurements are zero");
  if (!std::isfinite(snr_db)) throw DomainError("add_noise: SNR must be finite");
  const auto M = static_cast<double>(y_clean.size());
  const double sigma2 = power / (M * std::pow(10.0, snr_db / 10.0));
  auto gen = make_engine(seed, RandomStream::noise);
  boost::random::normal_distribution<double> normal(0.0, std::sqrt(sigma2));
  NoisyMeasurements out{y_clean, 1.0 / sigma2};
  for (Index k = 0; k < out.y.size(); ++k) out.y(k) += normal(gen);
  return out;
}

Matrix dct_basis(Index N) {
  if (N < 1) throw ConfigError("DCT size must be >= 1");
  Matrix c(N, N);
  const double n = static_cast<double>(N);
  for (Index k = 0; k < N; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (Index j = 0; j < N; ++j) {
      c(k, j) = scale * std::cos(std::numbers::pi * (static_cast<double>(j) + 0.5) * static_cast<double>(k) / n);
    }
  }
  return c;
}

double uniform_draw(double lo, double hi, std::uint64_t seed, std::uint32_t stream) {
  auto gen = make_engine(seed, stream);
  return draw_uniform(gen, lo, hi);
}

}  // namespace divsbl
