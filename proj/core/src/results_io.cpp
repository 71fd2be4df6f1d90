#include "divsbl/csv.hpp"
#include "divsbl/errors.hpp"
#include "divsbl/harness.hpp"

#include <boost/version.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#ifndef DIVSBL_VERSION
#define DIVSBL_VERSION "unknown"
#endif

namespace divsbl {

namespace {

using nlohmann::json;

constexpr const char* kCsvHeader =
    "algorithm,param,param2,trial,seed,snr_db,nmse,corr,block_hit_rate,support_size,success,iterations,converged,"
    "beta_hat,gamma_l0,sparsity_flag";

std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

void require_records(const SweepResult& result) {
  std::size_t n = 0;
  for (const auto& [key, recs] : result.records) n += recs.size();
  if (n == 0) throw ValidationError("no trial records to write");
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (k) out += ',';
    out += format_double(values[k]);
  }
  return out;
}

// Flat key -> value view of the config, using the keys apply_setting accepts.
json config_to_json(const ExperimentConfig& c) {
  std::string algos;
  for (std::size_t k = 0; k < c.algorithms.size(); ++k) {
    if (k) algos += ',';
    algos += to_string(c.algorithms[k]);
  }
  json j = {
      {"algorithms", algos},
      {"M", c.M},
      {"preset_L", c.preset_L},
      {"snr_db", c.snr_db},
      {"snr_db_max", c.snr_db_max ? json(*c.snr_db_max) : json("none")},
      {"noiseless", c.noiseless},
      {"transform", to_string(c.transform)},
      {"trials", c.trials},
      {"base_seed", c.base_seed},
      {"success_threshold", c.success_threshold},
      {"signal.dim", c.signal.dim},
      {"signal.num_blocks", c.signal.num_blocks},
      {"signal.block_size_min", c.signal.block_size_min},
      {"signal.block_size_max", c.signal.block_size_max},
      {"signal.variance_mode", to_string(c.signal.variance_mode)},
      {"signal.variance_min", c.signal.variance_min},
      {"signal.variance_max", c.signal.variance_max},
      {"signal.correlation_min", c.signal.correlation_min},
      {"signal.correlation_max", c.signal.correlation_max},
      {"signal.envelope", to_string(c.signal.envelope)},
      {"signal.align", c.signal.align},
      {"solver.max_iters", c.solver.max_iters},
      {"solver.conv_tol", c.solver.conv_tol},
      {"solver.prune_threshold", c.solver.prune_threshold},
      {"solver.dual_mode", to_string(c.solver.dual_mode)},
      {"solver.dual_tol", c.solver.dual_tol},
      {"solver.dual_max_iters", c.solver.dual_max_iters},
      {"solver.toeplitz_enabled", c.solver.toeplitz_enabled},
      {"solver.learn_correlation", c.solver.learn_correlation},
      {"solver.learn_beta", c.solver.learn_beta},
      {"solver.beta_init", c.solver.beta_init ? json(*c.solver.beta_init) : json("none")},
      {"solver.gamma_init_scale", c.solver.gamma_init_scale},
      {"solver.gamma_init_random", c.solver.gamma_init_random},
      {"solver.gamma_init_seed", c.solver.gamma_init_seed},
      {"solver.r_clamp", c.solver.r_clamp},
      {"solver.beta_max", c.solver.beta_max},
  };
  if (c.sweep) {
    j["sweep.parameter"] = to_string(c.sweep->parameter);
    j["sweep.values"] = join(c.sweep->values);
    if (!c.sweep->values2.empty()) j["sweep.values2"] = join(c.sweep->values2);
  }
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  for (const auto& [key, value] : j.items()) {
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_boolean()) {
      text = value.get<bool>() ? "true" : "false";
    } else if (value.is_number_unsigned()) {
      text = std::to_string(value.get<std::uint64_t>());
    } else if (value.is_number_integer()) {
      text = std::to_string(value.get<std::int64_t>());
    } else if (value.is_number_float()) {
      text = format_double(value.get<double>());
    } else {
      throw ValidationError("config entry '" + key + "' has an unsupported type");
    }
    apply_setting(c, key, text);
  }
  return c;
}

json summary_to_json(const Summary& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"median", s.median}, {"q1", s.q1}, {"q3", s.q3}};
}

json record_to_json(const TrialRecord& r) {
  return {{"trial", r.trial},
          {"seed", r.seed},
          {"snr_db", number_or_null(r.snr_db)},
          {"nmse", r.metrics.nmse},
          {"corr", r.metrics.corr},
          {"block_hit_rate", r.metrics.block_hit_rate},
          {"support_size", r.metrics.support_size},
          {"success", r.metrics.success},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"beta_hat", r.beta_hat},
          {"gamma_l0", r.gamma_l0},
          {"sparsity_flag", r.sparsity_flag},
          {"seconds", r.seconds},
          {"cost_trace", r.cost_trace}};
}

TrialRecord record_from_json(const json& j, const CellKey& cell) {
  TrialRecord r;
  r.cell = cell;
  r.trial = j.at("trial").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.snr_db = number_from(j.at("snr_db"));
  r.metrics.nmse = j.at("nmse").get<double>();
  r.metrics.corr = j.at("corr").get<double>();
  r.metrics.block_hit_rate = j.at("block_hit_rate").get<double>();
  r.metrics.support_size = j.at("support_size").get<Index>();
  r.metrics.success = j.at("success").get<bool>();
  r.iterations = j.at("iterations").get<int>();
  r.converged = j.at("converged").get<bool>();
  r.beta_hat = j.at("beta_hat").get<double>();
  r.gamma_l0 = j.at("gamma_l0").get<Index>();
  r.sparsity_flag = j.at("sparsity_flag").get<bool>();
  r.seconds = j.at("seconds").get<double>();
  r.cost_trace = j.at("cost_trace").get<std::vector<double>>();
  return r;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double csv_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("bad number '" + std::string(s) + "' in results CSV");
  }
  return v;
}

template <typename Int>
Int csv_int(std::string_view s) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("bad integer '" + std::string(s) + "' in results CSV");
  }
  return v;
}

}  // namespace

std::string to_csv(const SweepResult& result) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const CellKey& key : result.cells) {
    const auto it = result.records.find(key);
    if (it == result.records.end()) continue;
    for (const TrialRecord& r : it->second) {
      out += to_string(key.algorithm);
      out += ',' + opt_field(key.value) + ',' + opt_field(key.value2);
      out += ',' + std::to_string(r.trial) + ',' + std::to_string(r.seed);
      out += ',' + format_double(r.snr_db);
      out += ',' + format_double(r.metrics.nmse) + ',' + format_double(r.metrics.corr);
      out += ',' + format_double(r.metrics.block_hit_rate) + ',' + std::to_string(r.metrics.support_size);
      out += std::string(",") + (r.metrics.success ? "1" : "0");
      out += ',' + std::to_string(r.iterations) + (r.converged ? ",1" : ",0");
      out += ',' + format_double(r.beta_hat) + ',' + std::to_string(r.gamma_l0);
      out += r.sparsity_flag ? ",1" : ",0";
      out += '\n';
    }
  }
  return out;
}

std::string to_json(const SweepResult& result) {
  json cells = json::array();
  for (const CellKey& key : result.cells) {
    json cell = {{"algorithm", to_string(key.algorithm)},
                 {"value", key.value ? json(*key.value) : json(nullptr)},
                 {"value2", key.value2 ? json(*key.value2) : json(nullptr)}};
    if (const auto agg = result.aggregates.find(key); agg != result.aggregates.end()) {
      const CellAggregate& a = agg->second;
      cell["aggregate"] = {{"nmse", summary_to_json(a.nmse)},
                           {"corr", summary_to_json(a.corr)},
                           {"iterations", summary_to_json(a.iterations)},
                           {"seconds", summary_to_json(a.seconds)},
                           {"success_rate", a.success_rate},
                           {"converged_rate", a.converged_rate}};
    }
    json trials = json::array();
    if (const auto recs = result.records.find(key); recs != result.records.end()) {
      for (const TrialRecord& r : recs->second) trials.push_back(record_to_json(r));
    }
    cell["trials"] = std::move(trials);
    cells.push_back(std::move(cell));
  }
  const json doc = {{"versions",
                     {{"divsbl", DIVSBL_VERSION},
                      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)},
                      {"boost", BOOST_LIB_VERSION}}},
                    {"base_seed", result.config.base_seed},
                    {"config", config_to_json(result.config)},
                    {"cells", std::move(cells)}};
  return doc.dump(2) + "\n";
}

void emit(const SweepResult& result, ResultFormat format, const std::filesystem::path& path) {
  require_records(result);
  write_text(path, format == ResultFormat::csv ? to_csv(result) : to_json(result));
}

std::vector<TrialRecord> load_csv_records(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw ValidationError(path.string() + ": missing or unexpected results header");
  }
  std::vector<TrialRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      f.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (f.size() != 16) throw ValidationError(path.string() + ": expected 16 fields per row");
    TrialRecord r;
    r.cell.algorithm = parse_algorithm(f[0]);
    if (!f[1].empty()) r.cell.value = csv_double(f[1]);
    if (!f[2].empty()) r.cell.value2 = csv_double(f[2]);
    r.trial = csv_int<int>(f[3]);
    r.seed = csv_int<std::uint64_t>(f[4]);
    r.snr_db = csv_double(f[5]);
    r.metrics.nmse = csv_double(f[6]);
    r.metrics.corr = csv_double(f[7]);
    r.metrics.block_hit_rate = csv_double(f[8]);
    r.metrics.support_size = csv_int<Index>(f[9]);
    r.metrics.success = f[10] == "1";
    r.iterations = csv_int<int>(f[11]);
    r.converged = f[12] == "1";
    r.beta_hat = csv_double(f[13]);
    r.gamma_l0 = csv_int<Index>(f[14]);
    r.sparsity_flag = f[15] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

SweepResult load_json_result(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  SweepResult result;
  try {
    result.config = config_from_json(doc.at("config"));
    for (const json& cell : doc.at("cells")) {
      CellKey key;
      key.algorithm = parse_algorithm(cell.at("algorithm").get<std::string>());
      if (!cell.at("value").is_null()) key.value = cell.at("value").get<double>();
      if (!cell.at("value2").is_null()) key.value2 = cell.at("value2").get<double>();
      result.cells.push_back(key);
      auto& recs = result.records[key];
      for (const json& t : cell.at("trials")) recs.push_back(record_from_json(t, key));
      if (!recs.empty()) result.aggregates[key] = summarize(recs);
    }
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return result;
}

}  // namespace divsbl
