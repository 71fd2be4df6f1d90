#include "divsbl/harness.hpp"

#include "divsbl/baselines.hpp"
#include "divsbl/errors.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace divsbl {

namespace {

template <typename Enum, std::size_t K>
Enum parse_enum(std::string_view s, const std::pair<std::string_view, Enum> (&table)[K], std::string_view what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw ConfigError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

template <typename Enum, std::size_t K>
std::string_view enum_name(Enum e, const std::pair<std::string_view, Enum> (&table)[K]) {
  for (const auto& [name, value] : table) {
    if (value == e) return name;
  }
  return "?";
}

constexpr std::pair<std::string_view, Algorithm> kAlgorithms[] = {
    {"divsbl", Algorithm::divsbl}, {"sbl", Algorithm::sbl}, {"bsbl", Algorithm::bsbl}};
constexpr std::pair<std::string_view, SweepParameter> kSweeps[] = {
    {"preset_L", SweepParameter::preset_L},
    {"sample_rate", SweepParameter::sample_rate},
    {"snr_db", SweepParameter::snr_db},
    {"gamma_init_scale", SweepParameter::gamma_init_scale},
    {"phase", SweepParameter::phase}};
constexpr std::pair<std::string_view, Transform> kTransforms[] = {{"identity", Transform::identity},
                                                                  {"dct", Transform::dct}};
constexpr std::pair<std::string_view, VarianceMode> kVarianceModes[] = {
    {"homoscedastic", VarianceMode::homoscedastic}, {"heteroscedastic", VarianceMode::heteroscedastic}};
constexpr std::pair<std::string_view, Envelope> kEnvelopes[] = {{"flat", Envelope::flat},
                                                                {"tapered", Envelope::tapered}};
constexpr std::pair<std::string_view, DualMode> kDualModes[] = {{"one_step", DualMode::one_step},
                                                                {"complete", DualMode::complete}};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(trim(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

double parse_double(std::string_view key, std::string_view s) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("'" + std::string(key) + "' expects a number, got '" + std::string(s) + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view s) {
  s = trim(s);
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("'" + std::string(key) + "' expects an integer, got '" + std::string(s) + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("'" + std::string(key) + "' expects true or false, got '" + std::string(s) + "'");
}

std::vector<double> parse_doubles(std::string_view key, std::string_view s) {
  std::vector<double> out;
  for (auto item : split_list(s)) out.push_back(parse_double(key, item));
  return out;
}

// Rethrows the active exception with a prefix, keeping its type.
[[noreturn]] void rethrow_with_context(const std::string& prefix) {
  try {
    throw;
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const LayoutError& e) {
    throw LayoutError(prefix + e.what());
  } catch (const DomainError& e) {
    throw DomainError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(prefix + e.what());
  }
}

}  // namespace

std::string_view to_string(Algorithm a) { return enum_name(a, kAlgorithms); }
std::string_view to_string(SweepParameter p) { return enum_name(p, kSweeps); }
std::string_view to_string(Transform t) { return enum_name(t, kTransforms); }
std::string_view to_string(VarianceMode m) { return enum_name(m, kVarianceModes); }
std::string_view to_string(Envelope e) { return enum_name(e, kEnvelopes); }
std::string_view to_string(DualMode m) { return enum_name(m, kDualModes); }
Algorithm parse_algorithm(std::string_view s) { return parse_enum(trim(s), kAlgorithms, "algorithm"); }
SweepParameter parse_sweep_parameter(std::string_view s) { return parse_enum(trim(s), kSweeps, "sweep parameter"); }

void ExperimentConfig::validate() const {
  if (algorithms.empty()) throw ConfigError("at least one algorithm is required");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (M < 1) throw ConfigError("M must be >= 1");
  if (preset_L < 1) throw ConfigError("preset_L must be >= 1");
  if (!std::isfinite(snr_db)) throw ConfigError("snr_db must be finite");
  if (snr_db_max && !(*snr_db_max >= snr_db && std::isfinite(*snr_db_max))) {
    throw ConfigError("snr_db_max must be finite and >= snr_db");
  }
  if (!(success_threshold > 0.0)) throw ConfigError("success_threshold must be positive");
  signal.validate();
  solver.validate();
  if (sweep) {
    if (sweep->values.empty()) throw ConfigError("sweep values must be non-empty");
    if (sweep->parameter == SweepParameter::phase && sweep->values2.empty()) {
      throw ConfigError("phase sweep needs sweep.values (SNR) and sweep.values2 (sample rate)");
    }
    if (sweep->parameter != SweepParameter::preset_L && signal.dim % preset_L != 0) {
      throw ConfigError("preset_L " + std::to_string(preset_L) + " does not divide N " + std::to_string(signal.dim));
    }
    for (const auto* list : {&sweep->values, &sweep->values2}) {
      std::vector<double> sorted = *list;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ConfigError("sweep values must be distinct");
      }
    }
    for (double v : sweep->values) {
      if (!std::isfinite(v)) throw ConfigError("sweep values must be finite");
      if (sweep->parameter == SweepParameter::preset_L) {
        const auto L = static_cast<Index>(v);
        if (static_cast<double>(L) != v || L < 1 || signal.dim % L != 0) {
          throw ConfigError("swept preset_L must be positive integers dividing N");
        }
      }
    }
  } else if (signal.dim % preset_L != 0) {
    throw ConfigError("preset_L " + std::to_string(preset_L) + " does not divide N " + std::to_string(signal.dim));
  }
}

ExperimentConfig scenario(std::string_view name) {
  ExperimentConfig cfg;
  cfg.algorithms = {Algorithm::divsbl, Algorithm::sbl, Algorithm::bsbl};
  cfg.snr_db = 15.0;
  cfg.snr_db_max = 25.0;
  if (name == "homoscedastic") {
    cfg.signal.dim = 162;
    cfg.signal.num_blocks = 5;
    cfg.signal.block_size_min = 6;
    cfg.signal.block_size_max = 6;
    cfg.signal.align = 6;
    cfg.signal.variance_mode = VarianceMode::homoscedastic;
    cfg.M = 80;
    cfg.preset_L = 6;
  } else if (name == "heteroscedastic") {
    cfg.signal.dim = 162;
    cfg.signal.num_blocks = 4;
    cfg.signal.block_size_min = 5;
    cfg.signal.block_size_max = 12;
    cfg.signal.variance_mode = VarianceMode::heteroscedastic;
    cfg.signal.variance_min = 0.1;
    cfg.signal.variance_max = 10.0;
    cfg.signal.envelope = Envelope::tapered;
    cfg.M = 80;
    cfg.preset_L = 6;
  } else if (name == "noiseless") {
    cfg.signal.dim = 80;
    cfg.signal.num_blocks = 2;
    cfg.signal.block_size_min = 4;
    cfg.signal.block_size_max = 4;
    cfg.signal.align = 4;
    cfg.M = 40;
    cfg.preset_L = 4;
    cfg.noiseless = true;
    cfg.snr_db_max.reset();
    cfg.solver.learn_beta = false;
    cfg.solver.beta_init = 1e10;
    cfg.trials = 20;
  } else if (name == "audio") {
    cfg.signal.dim = 480;
    cfg.signal.num_blocks = 6;
    cfg.signal.block_size_min = 10;
    cfg.signal.block_size_max = 20;
    cfg.signal.variance_mode = VarianceMode::heteroscedastic;
    cfg.signal.variance_min = 0.1;
    cfg.signal.variance_max = 10.0;
    cfg.signal.envelope = Envelope::tapered;
    cfg.transform = Transform::dct;
    cfg.M = 120;
    cfg.preset_L = 8;
    cfg.snr_db = 20.0;
    cfg.snr_db_max.reset();
    cfg.trials = 20;
    cfg.algorithms = {Algorithm::divsbl};
  } else if (name == "blocksize") {
    cfg.signal.dim = 500;
    cfg.signal.num_blocks = 4;
    cfg.signal.block_size_min = 10;
    cfg.signal.block_size_max = 40;
    cfg.signal.variance_mode = VarianceMode::heteroscedastic;
    cfg.signal.variance_min = 0.1;
    cfg.signal.variance_max = 10.0;
    cfg.signal.envelope = Envelope::tapered;
    cfg.M = 250;
    cfg.preset_L = 10;
    cfg.trials = 20;
    cfg.algorithms = {Algorithm::divsbl, Algorithm::bsbl};
  } else {
    throw ConfigError("unknown scenario '" + std::string(name) + "'");
  }
  return cfg;
}

std::vector<std::string> scenario_names() {
  return {"homoscedastic", "heteroscedastic", "noiseless", "audio", "blocksize"};
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  SignalSpec& s = cfg.signal;
  SolverConfig& v = cfg.solver;
  auto sweep = [&]() -> SweepSpec& {
    if (!cfg.sweep) cfg.sweep.emplace();
    return *cfg.sweep;
  };

  if (key == "scenario") {
    cfg = scenario(value);
  } else if (key == "algorithm" || key == "algorithms") {
    cfg.algorithms.clear();
    for (auto item : split_list(value)) cfg.algorithms.push_back(parse_algorithm(item));
  } else if (key == "M") {
    cfg.M = parse_int<Index>(key, value);
  } else if (key == "preset_L") {
    cfg.preset_L = parse_int<Index>(key, value);
  } else if (key == "snr_db") {
    cfg.snr_db = parse_double(key, value);
  } else if (key == "snr_db_max") {
    if (value.empty() || value == "none") {
      cfg.snr_db_max.reset();
    } else {
      cfg.snr_db_max = parse_double(key, value);
    }
  } else if (key == "noiseless") {
    cfg.noiseless = parse_bool(key, value);
  } else if (key == "transform") {
    cfg.transform = parse_enum(value, kTransforms, "transform");
  } else if (key == "trials") {
    cfg.trials = parse_int<int>(key, value);
  } else if (key == "base_seed" || key == "seed") {
    cfg.base_seed = parse_int<std::uint64_t>(key, value);
  } else if (key == "success_threshold") {
    cfg.success_threshold = parse_double(key, value);
  } else if (key == "signal.dim" || key == "N") {
    s.dim = parse_int<Index>(key, value);
  } else if (key == "signal.num_blocks") {
    s.num_blocks = parse_int<Index>(key, value);
  } else if (key == "signal.block_size_min") {
    s.block_size_min = parse_int<Index>(key, value);
  } else if (key == "signal.block_size_max") {
    s.block_size_max = parse_int<Index>(key, value);
  } else if (key == "signal.variance_mode") {
    s.variance_mode = parse_enum(value, kVarianceModes, "variance mode");
  } else if (key == "signal.variance_min") {
    s.variance_min = parse_double(key, value);
  } else if (key == "signal.variance_max") {
    s.variance_max = parse_double(key, value);
  } else if (key == "signal.correlation_min") {
    s.correlation_min = parse_double(key, value);
  } else if (key == "signal.correlation_max") {
    s.correlation_max = parse_double(key, value);
  } else if (key == "signal.envelope") {
    s.envelope = parse_enum(value, kEnvelopes, "envelope");
  } else if (key == "signal.align") {
    s.align = parse_int<Index>(key, value);
  } else if (key == "solver.max_iters") {
    v.max_iters = parse_int<int>(key, value);
  } else if (key == "solver.conv_tol") {
    v.conv_tol = parse_double(key, value);
  } else if (key == "solver.prune_threshold") {
    v.prune_threshold = parse_double(key, value);
  } else if (key == "solver.dual_mode") {
    v.dual_mode = parse_enum(value, kDualModes, "dual mode");
  } else if (key == "solver.dual_tol") {
    v.dual_tol = parse_double(key, value);
  } else if (key == "solver.dual_max_iters") {
    v.dual_max_iters = parse_int<int>(key, value);
  } else if (key == "solver.toeplitz_enabled") {
    v.toeplitz_enabled = parse_bool(key, value);
  } else if (key == "solver.learn_correlation") {
    v.learn_correlation = parse_bool(key, value);
  } else if (key == "solver.learn_beta") {
    v.learn_beta = parse_bool(key, value);
  } else if (key == "solver.beta_init") {
    if (value.empty() || value == "none") {
      v.beta_init.reset();
    } else {
      v.beta_init = parse_double(key, value);
    }
  } else if (key == "solver.gamma_init_scale") {
    v.gamma_init_scale = parse_double(key, value);
  } else if (key == "solver.gamma_init_random") {
    v.gamma_init_random = parse_bool(key, value);
  } else if (key == "solver.gamma_init_seed") {
    v.gamma_init_seed = parse_int<std::uint64_t>(key, value);
  } else if (key == "solver.r_clamp") {
    v.r_clamp = parse_double(key, value);
  } else if (key == "solver.beta_max") {
    v.beta_max = parse_double(key, value);
  } else if (key == "sweep.parameter") {
    sweep().parameter = parse_sweep_parameter(value);
  } else if (key == "sweep.values") {
    sweep().values = parse_doubles(key, value);
  } else if (key == "sweep.values2") {
    sweep().values2 = parse_doubles(key, value);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view text(line);
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      apply_setting(cfg, text.substr(0, eq), text.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

ExperimentConfig cell_config(const ExperimentConfig& cfg, const CellKey& key) {
  ExperimentConfig out = cfg;
  out.sweep.reset();
  if (!cfg.sweep || !key.value) return out;
  const double v = *key.value;
  const auto rate_to_m = [&](double rate) {
    const auto m = static_cast<Index>(std::lround(rate * static_cast<double>(cfg.signal.dim)));
    if (m < 1) throw ConfigError("sample rate " + std::to_string(rate) + " gives no measurements");
    return m;
  };
  switch (cfg.sweep->parameter) {
    case SweepParameter::preset_L:
      out.preset_L = static_cast<Index>(v);
      break;
    case SweepParameter::sample_rate:
      out.M = rate_to_m(v);
      break;
    case SweepParameter::snr_db:
      out.snr_db = v;
      out.snr_db_max.reset();
      out.noiseless = false;
      break;
    case SweepParameter::gamma_init_scale:
      out.solver.gamma_init_scale = v;
      break;
    case SweepParameter::phase:
      out.snr_db = v;
      out.snr_db_max.reset();
      out.noiseless = false;
      if (key.value2) out.M = rate_to_m(*key.value2);
      break;
  }
  return out;
}

TrialData make_trial_data(const ExperimentConfig& cfg, int trial_index) {
  const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(trial_index);
  SignalSpec spec = cfg.signal;
  spec.seed = seed;
  TrialData data;
  data.truth = gen_block_sparse(spec);
  data.phi = gen_design_matrix(cfg.M, spec.dim, seed);
  // With a DCT the signal is C^T w; folding C^T into the operator lets the
  // solver work on the sparse coefficients w directly.
  if (cfg.transform == Transform::dct) data.phi = data.phi * dct_basis(spec.dim).transpose();
  const Vector y_clean = data.phi * data.truth.x_true;
  if (cfg.noiseless) {
    data.y = y_clean;
    data.snr_db = std::numeric_limits<double>::quiet_NaN();
    data.beta_true = std::numeric_limits<double>::infinity();
    return data;
  }
  data.snr_db = cfg.snr_db_max ? uniform_draw(cfg.snr_db, *cfg.snr_db_max, seed, RandomStream::snr) : cfg.snr_db;
  const NoisyMeasurements noisy = add_noise(y_clean, data.snr_db, seed);
  data.y = noisy.y;
  data.beta_true = noisy.beta_true;
  return data;
}

TrialRecord run_trial(const ExperimentConfig& cfg, Algorithm algorithm, int trial_index) {
  try {
    const TrialData data = make_trial_data(cfg, trial_index);
    const MeasurementModel model(data.phi, data.y, default_noise_precision(data.y));

    const auto start = std::chrono::steady_clock::now();
    SolveResult result;
    switch (algorithm) {
      case Algorithm::divsbl:
        result = solve(model, BlockLayout::from_dimension(cfg.signal.dim, cfg.preset_L), cfg.solver);
        break;
      case Algorithm::sbl:
        result = sbl_solve(model, cfg.solver);
        break;
      case Algorithm::bsbl:
        result = bsbl_strong_solve(model, BlockLayout::from_dimension(cfg.signal.dim, cfg.preset_L), cfg.solver);
        break;
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

    TrialRecord rec;
    rec.cell.algorithm = algorithm;
    rec.trial = trial_index;
    rec.seed = cfg.base_seed + static_cast<std::uint64_t>(trial_index);
    rec.snr_db = data.snr_db;
    rec.metrics = evaluate(result.x_hat, data.truth, cfg.success_threshold);
    rec.iterations = result.iterations;
    rec.converged = result.converged;
    rec.beta_hat = result.beta;
    rec.gamma_l0 = (result.prior.gammas.array() != 0.0).count();
    rec.sparsity_flag = static_cast<double>(rec.gamma_l0) > std::sqrt(static_cast<double>(cfg.M));
    rec.seconds = elapsed.count();
    rec.cost_trace = std::move(result.cost_trace);
    return rec;
  } catch (...) {
    rethrow_with_context("trial " + std::to_string(trial_index) + ": ");
  }
}

Summary summarize(std::vector<double> values) {
  if (values.empty()) throw ValidationError("summarize: no values");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  Summary s;
  double sum = 0.0;
  for (double x : values) sum += x;
  s.mean = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double x : values) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(n - 1));
  }
  const auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, n - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  return s;
}

CellAggregate summarize(const std::vector<TrialRecord>& records) {
  if (records.empty()) throw ValidationError("summarize: no records");
  std::vector<double> nmse, corr, iters, secs;
  double successes = 0.0, converged = 0.0;
  for (const auto& r : records) {
    nmse.push_back(r.metrics.nmse);
    corr.push_back(r.metrics.corr);
    iters.push_back(r.iterations);
    secs.push_back(r.seconds);
    successes += r.metrics.success ? 1.0 : 0.0;
    converged += r.converged ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(records.size());
  return CellAggregate{summarize(nmse), summarize(corr), summarize(iters), summarize(secs), successes / n,
                       converged / n};
}

int default_thread_count() {
  if (const char* env = std::getenv("DIVSBL_THREADS")) {
    int n = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec == std::errc() && ptr == s.data() + s.size() && n >= 1) return n;
  }
  return 1;
}

SweepResult run_sweep(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  SweepResult result;
  result.config = cfg;

  std::vector<std::pair<std::optional<double>, std::optional<double>>> points;
  if (!cfg.sweep) {
    points.emplace_back();
  } else if (cfg.sweep->parameter == SweepParameter::phase) {
    for (double a : cfg.sweep->values) {
      for (double b : cfg.sweep->values2) points.emplace_back(a, b);
    }
  } else {
    for (double a : cfg.sweep->values) points.emplace_back(a, std::nullopt);
  }
  std::vector<ExperimentConfig> cell_cfgs;
  for (Algorithm algo : cfg.algorithms) {
    for (const auto& [a, b] : points) {
      CellKey key{algo, a, b};
      result.cells.push_back(key);
      cell_cfgs.push_back(cell_config(cfg, key));
      cell_cfgs.back().validate();
    }
  }

  const std::size_t per_cell = static_cast<std::size_t>(cfg.trials);
  const std::size_t jobs = result.cells.size() * per_cell;
  std::vector<TrialRecord> out(jobs);
  std::vector<std::exception_ptr> errors(jobs);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      const std::size_t c = j / per_cell;
      try {
        out[j] = run_trial(cell_cfgs[c], result.cells[c].algorithm, static_cast<int>(j % per_cell));
        out[j].cell = result.cells[c];
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, threads));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(n_threads, jobs); ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    auto& recs = result.records[result.cells[c]];
    recs.assign(std::make_move_iterator(out.begin() + static_cast<std::ptrdiff_t>(c * per_cell)),
                std::make_move_iterator(out.begin() + static_cast<std::ptrdiff_t>((c + 1) * per_cell)));
    result.aggregates[result.cells[c]] = summarize(recs);
  }
  return result;
}

}  // namespace divsbl
