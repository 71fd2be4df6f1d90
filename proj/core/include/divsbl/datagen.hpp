#pragma once

// Synthetic block-sparse problems.
//
// Every generator is a pure function of its arguments. Random streams come
// from boost::random::mt19937_64 seeded through std::seed_seq with
// (seed, stream id); Boost's distributions are used because their output,
// unlike the standard library's, is the same on every platform.

#include "divsbl/model.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace divsbl {

enum class VarianceMode { homoscedastic, heteroscedastic };

/// Shape of the amplitudes inside one block.
enum class Envelope {
  flat,     // i.i.d. N(0, v) inside the block
  tapered,  // variance v * w_k^2 with a raised-cosine window over the block, as in spectral lobes
};

struct SignalSpec {
  Index dim = 162;
  Index num_blocks = 5;  // K0, number of non-zero blocks
  Index block_size_min = 6;
  Index block_size_max = 6;
  VarianceMode variance_mode = VarianceMode::homoscedastic;
  double variance_min = 1.0;
  double variance_max = 1.0;
  Envelope envelope = Envelope::flat;
  /// Amplitudes inside a block follow a stationary AR(1) process whose
  /// coefficient is drawn per block from [correlation_min, correlation_max].
  double correlation_min = 0.0;
  double correlation_max = 0.0;
  /// Block starts are multiples of this (1 = anywhere). Sizes and dim must be multiples too.
  Index align = 1;
  std::uint64_t seed = 0;

  /// Throws ConfigError for infeasible or malformed specs.
  void validate() const;
};

struct SupportBlock {
  Index start;
  Index length;
  double variance;
  double correlation;  // AR(1) coefficient
};

struct GroundTruth {
  Vector x_true;
  std::vector<SupportBlock> support;  // sorted by start
};

/// Independent stream for (seed, stream id).
struct RandomStream {
  static constexpr std::uint32_t design = 1;
  static constexpr std::uint32_t signal = 2;
  static constexpr std::uint32_t noise = 3;
  static constexpr std::uint32_t snr = 4;
  static constexpr std::uint32_t init = 5;
};

/// M x N standard Gaussian matrix with columns scaled to unit Euclidean norm.
Matrix gen_design_matrix(Index M, Index N, std::uint64_t seed);

/// Non-overlapping blocks placed uniformly at random; amplitudes are a
/// Gaussian AR(1) sequence at the block's variance. Homoscedastic mode draws one variance shared by all
/// blocks, heteroscedastic mode one per block, both uniform on
/// [variance_min, variance_max].
GroundTruth gen_block_sparse(const SignalSpec& spec);

struct NoisyMeasurements {
  Vector y;
  double beta_true;  // 1 / sigma^2
};

/// Adds i.i.d. N(0, sigma^2) noise with sigma^2 = ||y||^2 / (M 10^(snr/10)).
/// Throws DomainError when y_clean is zero.
NoisyMeasurements add_noise(const Vector& y_clean, double snr_db, std::uint64_t seed);

/// Orthonormal type-II DCT analysis matrix C: c = C x, x = C^T c.
Matrix dct_basis(Index N);

/// Uniform draw in [lo, hi] from the given stream.
double uniform_draw(double lo, double hi, std::uint64_t seed, std::uint32_t stream);

}  // namespace divsbl
