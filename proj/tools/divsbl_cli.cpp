// divsbl: generate synthetic problems, solve them, and run benchmark sweeps.
//
// Exit status: 0 on success, 1 for configuration or validation errors,
// 2 for file I/O errors.

#include "divsbl/baselines.hpp"
#include "divsbl/csv.hpp"
#include "divsbl/errors.hpp"
#include "divsbl/harness.hpp"
#include "divsbl/inference.hpp"
#include "divsbl/metrics.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace divsbl;

namespace {

struct ExperimentFlags {
  std::string scenario;
  std::string config_file;
  std::string algorithms;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::vector<std::string> settings;
};

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& f, const std::string& default_scenario) {
  f.scenario = default_scenario;
  cmd->add_option("--scenario", f.scenario, "Starting configuration")->capture_default_str();
  cmd->add_option("--config", f.config_file, "Flat 'key = value' file applied on top of the scenario");
  cmd->add_option("--algorithm", f.algorithms, "Comma list of divsbl, sbl, bsbl");
  cmd->add_option("--seed", f.seed, "Base seed; trial k uses seed + k");
  cmd->add_option("--trials", f.trials, "Trials per cell");
  cmd->add_option("--set", f.settings, "Extra key=value override (repeatable)");
}

ExperimentConfig build_config(const ExperimentFlags& f) {
  ExperimentConfig cfg = scenario(f.scenario);
  if (!f.config_file.empty()) load_config_file(cfg, f.config_file);
  if (!f.algorithms.empty()) apply_setting(cfg, "algorithm", f.algorithms);
  if (f.seed) cfg.base_seed = *f.seed;
  if (f.trials) cfg.trials = *f.trials;
  for (const auto& kv : f.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

ResultFormat parse_format(const std::string& s) {
  if (s == "csv") return ResultFormat::csv;
  if (s == "json") return ResultFormat::json;
  throw ConfigError("unknown format '" + s + "' (csv or json)");
}

void print_summary(const SweepResult& result) {
  std::printf("%-8s %12s %12s %12s %12s %10s %8s %8s\n", "algo", "param", "param2", "nmse_mean", "nmse_std",
              "corr_mean", "success", "conv");
  for (const CellKey& key : result.cells) {
    const CellAggregate& a = result.aggregates.at(key);
    std::printf("%-8s %12s %12s %12.5g %12.5g %10.5f %8.3f %8.3f\n", std::string(to_string(key.algorithm)).c_str(),
                key.value ? format_double(*key.value).c_str() : "-",
                key.value2 ? format_double(*key.value2).c_str() : "-", a.nmse.mean, a.nmse.std, a.corr.mean,
                a.success_rate, a.converged_rate);
  }
}

struct OutputFlags {
  std::string out;
  std::string format = "csv";
  std::optional<int> threads;
};

void add_output_flags(CLI::App* cmd, OutputFlags& o) {
  cmd->add_option("--out", o.out, "Result file (CSV written to stdout when omitted)");
  cmd->add_option("--format", o.format, "csv or json")->capture_default_str();
  cmd->add_option("--threads", o.threads, "Worker threads (default: DIVSBL_THREADS or 1)");
}

void run_and_emit(const ExperimentConfig& cfg, const OutputFlags& o) {
  const ResultFormat format = parse_format(o.format);
  const SweepResult result = run_sweep(cfg, o.threads.value_or(default_thread_count()));
  if (o.out.empty()) {
    std::cout << (format == ResultFormat::csv ? to_csv(result) : to_json(result));
  } else {
    emit(result, format, o.out);
    print_summary(result);
  }
}

struct NamedSweep {
  std::string scenario;
  SweepSpec spec;
  std::vector<Algorithm> algorithms;
  int trials;
};

const std::map<std::string, NamedSweep>& named_sweeps() {
  static const std::map<std::string, NamedSweep> sweeps = {
      {"block-size",
       {"blocksize", {SweepParameter::preset_L, {10, 20, 50}, {}}, {Algorithm::divsbl, Algorithm::bsbl}, 20}},
      {"sample-rate",
       {"audio", {SweepParameter::sample_rate, {0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55}, {}}, {Algorithm::divsbl}, 20}},
      {"snr", {"audio", {SweepParameter::snr_db, {10, 20, 30, 40, 50}, {}}, {Algorithm::divsbl}, 20}},
      {"init",
       {"heteroscedastic",
        {SweepParameter::gamma_init_scale, {0.1, 1, 1e2, 1e4}, {}},
        {Algorithm::divsbl},
        5}},
      {"phase",
       {"audio",
        {SweepParameter::phase, {10, 20, 30, 40, 50}, {0.25, 0.35, 0.45, 0.55}},
        {Algorithm::divsbl},
        10}},
  };
  return sweeps;
}

int cmd_gen(const ExperimentFlags& f, const std::string& out_dir) {
  const ExperimentConfig cfg = build_config(f);
  cfg.validate();
  const TrialData data = make_trial_data(cfg, 0);
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_matrix_csv(dir / "phi.csv", data.phi);
  write_vector_csv(dir / "y.csv", data.y);
  write_vector_csv(dir / "x_true.csv", data.truth.x_true);
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : data.truth.support) {
    blocks.push_back(
        {{"start", b.start}, {"length", b.length}, {"variance", b.variance}, {"correlation", b.correlation}});
  }
  const nlohmann::json meta = {
      {"seed", cfg.base_seed},
      {"N", cfg.signal.dim},
      {"M", cfg.M},
      {"preset_L", cfg.preset_L},
      {"transform", to_string(cfg.transform)},
      {"snr_db", std::isfinite(data.snr_db) ? nlohmann::json(data.snr_db) : nlohmann::json(nullptr)},
      {"beta_true", std::isfinite(data.beta_true) ? nlohmann::json(data.beta_true) : nlohmann::json(nullptr)},
      {"support", blocks}};
  std::ofstream meta_out(dir / "meta.json");
  if (!meta_out) throw IoError("cannot write " + (dir / "meta.json").string());
  meta_out << meta.dump(2) << "\n";
  std::printf("wrote %s/{phi,y,x_true}.csv and meta.json\n", dir.string().c_str());
  return 0;
}

struct SolveFlags {
  std::string phi, y, x_true, out, config_file, algorithm = "divsbl";
  Index L = 6;
  std::optional<double> beta;
  std::vector<std::string> settings;
};

int cmd_solve(const SolveFlags& f) {
  ExperimentConfig cfg;
  if (!f.config_file.empty()) load_config_file(cfg, f.config_file);
  for (const auto& kv : f.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  const Matrix phi = read_matrix_csv(f.phi);
  const Vector y = read_vector_csv(f.y);
  const MeasurementModel model(phi, y, f.beta.value_or(default_noise_precision(y)));
  SolveResult r;
  switch (parse_algorithm(f.algorithm)) {
    case Algorithm::divsbl:
      r = solve(model, BlockLayout::from_dimension(phi.cols(), f.L), cfg.solver);
      break;
    case Algorithm::sbl:
      r = sbl_solve(model, cfg.solver);
      break;
    case Algorithm::bsbl:
      r = bsbl_strong_solve(model, BlockLayout::from_dimension(phi.cols(), f.L), cfg.solver);
      break;
  }
  if (!f.out.empty()) {
    write_vector_csv(f.out, r.x_hat);
  } else {
    for (Index k = 0; k < r.x_hat.size(); ++k) std::printf("%s\n", format_double(r.x_hat(k)).c_str());
  }
  std::fprintf(stderr, "iterations=%d converged=%d beta=%s active_blocks=%ld\n", r.iterations, r.converged ? 1 : 0,
               format_double(r.beta).c_str(), static_cast<long>(r.prior.num_active()));
  if (!f.x_true.empty()) {
    const Vector x = read_vector_csv(f.x_true);
    if (x.size() != r.x_hat.size()) throw ValidationError("x_true length does not match the design matrix");
    std::fprintf(stderr, "nmse=%s corr=%s\n", format_double(nmse(r.x_hat, x)).c_str(),
                 format_double(corr(r.x_hat, x).value).c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diversified block sparse Bayesian learning: data generation, recovery and benchmarks"};
  app.require_subcommand(1);

  ExperimentFlags gen_flags;
  std::string gen_out = "instance";
  auto* gen = app.add_subcommand("gen", "Write one synthetic instance (phi.csv, y.csv, x_true.csv, meta.json)");
  add_experiment_flags(gen, gen_flags, "heteroscedastic");
  gen->add_option("--out", gen_out, "Output directory")->capture_default_str();

  SolveFlags solve_flags;
  auto* solve_cmd = app.add_subcommand("solve", "Recover x from phi.csv and y.csv");
  solve_cmd->add_option("--phi", solve_flags.phi, "Design matrix CSV")->required();
  solve_cmd->add_option("--y", solve_flags.y, "Measurement CSV")->required();
  solve_cmd->add_option("--x-true", solve_flags.x_true, "Ground truth CSV, to report NMSE and Corr");
  solve_cmd->add_option("--algorithm", solve_flags.algorithm, "divsbl, sbl or bsbl")->capture_default_str();
  solve_cmd->add_option("--L", solve_flags.L, "Preset block size")->capture_default_str();
  solve_cmd->add_option("--beta", solve_flags.beta, "Initial noise precision");
  solve_cmd->add_option("--config", solve_flags.config_file, "Key-value file (solver.* keys are used)");
  solve_cmd->add_option("--set", solve_flags.settings, "Extra key=value override (repeatable)");
  solve_cmd->add_option("--out", solve_flags.out, "Write x_hat here instead of stdout");

  ExperimentFlags bench_flags;
  OutputFlags bench_out;
  auto* bench = app.add_subcommand("bench", "Repeated trials of one configuration");
  add_experiment_flags(bench, bench_flags, "heteroscedastic");
  add_output_flags(bench, bench_out);

  ExperimentFlags sweep_flags;
  OutputFlags sweep_out;
  std::string sweep_name;
  std::string sweep_values, sweep_values2;
  auto* sweep = app.add_subcommand("sweep", "Named sweep: block-size, sample-rate, snr, init, phase");
  sweep->add_option("name", sweep_name, "Sweep name")->required();
  add_experiment_flags(sweep, sweep_flags, "");
  add_output_flags(sweep, sweep_out);
  sweep->add_option("--values", sweep_values, "Comma list replacing the default sweep values");
  sweep->add_option("--values2", sweep_values2, "Second axis values (phase sweep sample rates)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen(gen_flags, gen_out);
    if (*solve_cmd) return cmd_solve(solve_flags);
    if (*bench) {
      run_and_emit(build_config(bench_flags), bench_out);
      return 0;
    }
    if (*sweep) {
      const auto& sweeps = named_sweeps();
      const auto it = sweeps.find(sweep_name);
      if (it == sweeps.end()) throw ConfigError("unknown sweep '" + sweep_name + "'");
      const NamedSweep& named = it->second;
      ExperimentFlags flags = sweep_flags;
      if (flags.scenario.empty()) flags.scenario = named.scenario;
      ExperimentConfig base = scenario(flags.scenario);
      base.algorithms = named.algorithms;
      base.trials = named.trials;
      base.sweep = named.spec;
      if (!sweep_values.empty()) apply_setting(base, "sweep.values", sweep_values);
      if (!sweep_values2.empty()) apply_setting(base, "sweep.values2", sweep_values2);
      // Scenario, then sweep defaults, then file and flags.
      ExperimentConfig cfg = base;
      if (!flags.config_file.empty()) load_config_file(cfg, flags.config_file);
      if (!flags.algorithms.empty()) apply_setting(cfg, "algorithm", flags.algorithms);
      if (flags.seed) cfg.base_seed = *flags.seed;
      if (flags.trials) cfg.trials = *flags.trials;
      for (const auto& kv : flags.settings) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      run_and_emit(cfg, sweep_out);
      return 0;
    }
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
