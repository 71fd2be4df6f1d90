#pragma once

// Experiment harness: seeded trials, parameter sweeps, aggregation and
// result files. Shared by the command-line tool and the acceptance tests.

#include "divsbl/datagen.hpp"
#include "divsbl/inference.hpp"
#include "divsbl/metrics.hpp"
#include "divsbl/model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace divsbl {

enum class Algorithm { divsbl, sbl, bsbl };

/// Basis the signal is sparse in. With dct the sensing operator is Phi C^T
/// and recovery is scored on the DCT coefficients.
enum class Transform { identity, dct };

enum class SweepParameter { preset_L, sample_rate, snr_db, gamma_init_scale, phase };

struct SweepSpec {
  SweepParameter parameter = SweepParameter::snr_db;
  std::vector<double> values;
  /// Second axis of the phase grid (sample rates); values holds the SNRs.
  std::vector<double> values2;
};

struct ExperimentConfig {
  std::vector<Algorithm> algorithms{Algorithm::divsbl};
  SignalSpec signal;
  Index M = 80;
  Index preset_L = 6;
  /// SNR in dB. With snr_db_max set, every trial draws uniformly from [snr_db, snr_db_max].
  double snr_db = 25.0;
  std::optional<double> snr_db_max;
  bool noiseless = false;
  Transform transform = Transform::identity;
  int trials = 50;
  std::uint64_t base_seed = 0;
  SolverConfig solver;
  std::optional<SweepSpec> sweep;
  double success_threshold = 1e-2;

  /// Throws ConfigError.
  void validate() const;
};

std::string_view to_string(Algorithm a);
std::string_view to_string(SweepParameter p);
std::string_view to_string(Transform t);
std::string_view to_string(VarianceMode m);
std::string_view to_string(Envelope e);
std::string_view to_string(DualMode m);
/// Parsers throw ConfigError on unknown names.
Algorithm parse_algorithm(std::string_view s);
SweepParameter parse_sweep_parameter(std::string_view s);

/// Named starting points: "homoscedastic", "heteroscedastic", "noiseless", "audio", "blocksize".
ExperimentConfig scenario(std::string_view name);
std::vector<std::string> scenario_names();

/// Applies one "key = value" setting. Keys mirror the config fields
/// (e.g. "M", "snr_db", "signal.num_blocks", "solver.max_iters", "sweep.values").
/// Throws ConfigError on unknown keys or malformed values.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Reads a flat key-value file ('#' starts a comment) on top of cfg.
/// Throws IoError if the file cannot be read, ConfigError on bad content.
void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);

/// The coordinates of one sweep cell.
struct CellKey {
  Algorithm algorithm = Algorithm::divsbl;
  std::optional<double> value;
  std::optional<double> value2;
  friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct TrialRecord {
  CellKey cell;
  int trial = 0;
  std::uint64_t seed = 0;
  double snr_db = 0.0;  // NaN when noiseless
  TrialMetrics metrics;
  int iterations = 0;
  bool converged = false;
  double beta_hat = 0.0;
  Index gamma_l0 = 0;          // non-zero variances at the end
  bool sparsity_flag = false;  // gamma_l0 > sqrt(M)
  double seconds = 0.0;
  std::vector<double> cost_trace;
};

/// One synthetic problem instance.
struct TrialData {
  Matrix phi;      // sensing operator as seen by the solver
  Vector y;
  GroundTruth truth;  // in the sparse domain
  double snr_db;
  double beta_true;
};

/// Data for trial `trial_index` of cfg with any sweep cell already applied.
/// Seed is base_seed + trial_index and does not depend on the algorithm.
TrialData make_trial_data(const ExperimentConfig& cfg, int trial_index);

/// Generates data, runs one algorithm, scores it. Solver errors are rethrown
/// with the trial index in the message.
TrialRecord run_trial(const ExperimentConfig& cfg, Algorithm algorithm, int trial_index);

/// Config with the cell's sweep values applied (sample rate sets M = round(rate * N)).
ExperimentConfig cell_config(const ExperimentConfig& cfg, const CellKey& key);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample convention; 0 for a single value
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

/// Throws ValidationError on an empty input.
Summary summarize(std::vector<double> values);

struct CellAggregate {
  Summary nmse;
  Summary corr;
  Summary iterations;
  Summary seconds;
  double success_rate = 0.0;
  double converged_rate = 0.0;
};

CellAggregate summarize(const std::vector<TrialRecord>& records);

struct SweepResult {
  ExperimentConfig config;
  std::vector<CellKey> cells;                     // in run order
  std::map<CellKey, std::vector<TrialRecord>> records;  // trial order within a cell
  std::map<CellKey, CellAggregate> aggregates;
};

/// Runs every algorithm x sweep cell x trial. threads <= 1 runs serially;
/// results do not depend on the thread count.
SweepResult run_sweep(const ExperimentConfig& cfg, int threads = 1);

/// DIVSBL_THREADS if set and valid, else 1.
int default_thread_count();

enum class ResultFormat { csv, json };

/// CSV has one row per (cell, trial) and omits wall-clock time so identical
/// runs give identical bytes. JSON carries everything, timing included.
/// Throws ValidationError when there are no records (no file is created),
/// IoError when the file cannot be written.
void emit(const SweepResult& result, ResultFormat format, const std::filesystem::path& path);
std::string to_csv(const SweepResult& result);
std::string to_json(const SweepResult& result);

/// Loaders used to check round trips. Cost traces and timing are only in JSON.
std::vector<TrialRecord> load_csv_records(const std::filesystem::path& path);
SweepResult load_json_result(const std::filesystem::path& path);

}  // namespace divsbl
