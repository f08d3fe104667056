#pragma once

#include "sarvb/csv.hpp"
#include "sarvb/model.hpp"
#include "sarvb/simulate.hpp"
#include "sarvb/spatial.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace sarvb::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitInputError = 3;
inline constexpr int kExitNumericalError = 4;
inline constexpr int kExitPartialConvergence = 5;

// Key-value run configuration: config file first, command-line overrides on
// top. Every numeric field is validated before any computation starts.
struct RunConfig {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) > 0; }

  std::string str(const std::string& key, const std::string& fallback = "") const {
    const auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
  }

  double num(const std::string& key, double fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw config_error("config key '" + key + "' is not numeric: '" + it->second + "'");
    }
  }

  long integer(const std::string& key, long fallback) const {
    const double v = num(key, static_cast<double>(fallback));
    const long r = static_cast<long>(v);
    if (static_cast<double>(r) != v) {
      throw config_error("config key '" + key + "' must be an integer");
    }
    return r;
  }

  bool flag(const std::string& key, bool fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw config_error("config key '" + key + "' is not a boolean: '" + v + "'");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream in(str(key));
    std::string item;
    while (std::getline(in, item, ',')) {
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }
};

inline void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    if (strip(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error("config file " + path.string() + ": line " + std::to_string(line_no) +
                         " is not key=value");
    }
    cfg.values[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
  }
}

inline EstimatorConfig estimator_config(const RunConfig& cfg) {
  EstimatorConfig est;
  est.stage1.concentration_a = cfg.num("a", 0.5);
  est.stage1.concentration_a_omega = cfg.num("a_omega", 0.5);
  est.stage1.diag_rate = cfg.num("diag_rate", 1.0);
  est.stage1.tol = cfg.num("tol", 1e-6);
  est.stage1.max_iter = static_cast<int>(cfg.integer("max_iter", 10000));
  est.stage2.concentration_a_tilde = cfg.num("a_tilde", 0.5);
  est.stage2.nu = cfg.num("nu", 0.01);
  est.stage2.s_tilde = cfg.num("s_tilde", 0.01);
  est.stage2.tol = cfg.num("tol", 1e-6);
  est.stage2.max_iter = static_cast<int>(cfg.integer("max_iter", 10000));
  est.shared_first_stage = cfg.flag("shared_first_stage", false);
  est.seed = static_cast<std::uint64_t>(cfg.integer("seed", 0));
  est.threads = static_cast<unsigned>(cfg.integer("threads", 0));
  const std::string mode = cfg.str("precision_mode", "means");
  if (mode == "reciprocal") {
    est.stage1.precision_mode = PriorPrecisionMode::reciprocal_moments;
    est.stage2.precision_mode = PriorPrecisionMode::reciprocal_moments;
  } else if (mode != "means") {
    throw config_error("precision_mode must be 'means' or 'reciprocal'");
  }
  if (!(est.stage1.concentration_a > 0.0) || !(est.stage1.concentration_a_omega > 0.0) ||
      !(est.stage2.concentration_a_tilde > 0.0)) {
    throw config_error("concentrations must be positive");
  }
  if (!(est.stage1.tol > 0.0)) throw config_error("tol must be positive");
  if (est.stage1.max_iter < 1) throw config_error("max_iter must be at least 1");
  if (!(est.stage1.diag_rate > 0.0)) throw config_error("diag_rate must be positive");
  if (!(est.stage2.nu > 0.0) || !(est.stage2.s_tilde > 0.0)) {
    throw config_error("nu and s_tilde must be positive");
  }
  return est;
}

inline DgpSpec dgp_spec(const RunConfig& cfg) {
  DgpSpec dgp;
  dgp.model = static_cast<int>(cfg.integer("model", 1));
  dgp.N = static_cast<int>(cfg.integer("N", 30));
  dgp.T = static_cast<int>(cfg.integer("T", 80));
  dgp.lambda_coef = cfg.num("lambda_coef", 0.6);
  dgp.beta_coef = cfg.num("beta_coef", 0.9);
  dgp.noise_scale = cfg.num("noise_scale", 0.1);
  dgp.model2.cross_coupling = cfg.num("m2_cross_coupling", 0.5);
  dgp.model2.own_spatial = cfg.num("m2_own_spatial", 0.6);
  dgp.model2.cross_spatial = cfg.num("m2_cross_spatial", 0.4);
  dgp.model2.beta = cfg.num("beta_coef", 0.9);
  dgp.model2.noise_scale_1 = cfg.num("m2_noise_1", cfg.num("noise_scale", 0.1));
  dgp.model2.noise_scale_2 = cfg.num("m2_noise_2", cfg.num("noise_scale", 0.1));
  if (dgp.model != 1 && dgp.model != 2) throw config_error("model must be 1 or 2");
  if (dgp.N < 3) throw config_error("N must be at least 3");
  if (dgp.T < 1) throw config_error("T must be positive");
  return dgp;
}

inline std::filesystem::path output_dir(const RunConfig& cfg) {
  const std::filesystem::path dir = cfg.str("out", ".");
  std::filesystem::create_directories(dir);
  return dir;
}

// config echo + seed + version, written beside every output; deliberately
// timestamp-free so reruns are byte-identical
inline void write_manifest(const RunConfig& cfg, const std::filesystem::path& dir,
                           const std::string& command,
                           const std::vector<std::string>& extra_lines = {}) {
  std::ostringstream out;
  out << "sarvb " << kVersion << '\n';
  out << "command = " << command << '\n';
  out << "seed = " << cfg.integer("seed", 0) << '\n';
  for (const auto& [k, v] : cfg.values) out << k << " = " << v << '\n';
  for (const auto& line : extra_lines) out << line << '\n';
  write_text_file(dir / "manifest.txt", out.str());
}

inline int cmd_simulate(const RunConfig& cfg) {
  const DgpSpec dgp = dgp_spec(cfg);
  const auto seed = static_cast<std::uint64_t>(cfg.integer("seed", 0));
  const SimData sim = simulate(dgp, seed);
  const auto dir = output_dir(cfg);
  write_text_file(dir / "panel.csv", panel_to_csv(sim.panel));
  write_matrix_csv(dir / "lambda_true.csv", sim.truth.lambda, sim.panel.unit_labels,
                   sim.panel.unit_labels);
  std::ostringstream beta;
  beta << "unit,beta\n";
  for (Eigen::Index i = 0; i < sim.truth.beta.size(); ++i) {
    beta << sim.panel.unit_labels[static_cast<std::size_t>(i)] << ','
         << format_g17(sim.truth.beta[i]) << '\n';
  }
  write_text_file(dir / "beta_true.csv", beta.str());
  write_manifest(cfg, dir, "simulate");
  return kExitOk;
}

inline std::string mc_lambda_csv(const MCSummary& summary) {
  std::ostringstream out;
  out << "i,j,mean,sd\n";
  for (Eigen::Index i = 0; i < summary.lambda_mean.rows(); ++i) {
    for (Eigen::Index j = 0; j < summary.lambda_mean.cols(); ++j) {
      out << (i + 1) << ',' << (j + 1) << ',' << format_g17(summary.lambda_mean(i, j)) << ','
          << format_g17(summary.lambda_sd(i, j)) << '\n';
    }
  }
  return out.str();
}

inline std::string mc_beta_csv(const MCSummary& summary) {
  std::ostringstream out;
  out << "j,mean,sd\n";
  for (Eigen::Index j = 0; j < summary.beta_mean.size(); ++j) {
    out << (j + 1) << ',' << format_g17(summary.beta_mean[j]) << ','
        << format_g17(summary.beta_sd[j]) << '\n';
  }
  return out.str();
}

inline int cmd_mc(const RunConfig& cfg, std::ostream& log) {
  const DgpSpec dgp = dgp_spec(cfg);
  const EstimatorConfig est = estimator_config(cfg);
  const int reps = static_cast<int>(cfg.integer("replications", 100));
  if (reps < 1) throw config_error("replications must be at least 1");
  const int corner = static_cast<int>(cfg.integer("corner_size", 5));
  const auto seed = static_cast<std::uint64_t>(cfg.integer("seed", 0));
  const auto threads = static_cast<unsigned>(cfg.integer("threads", 0));

  const MCSummary summary = run_monte_carlo(dgp, est, reps, seed, threads);
  const auto dir = output_dir(cfg);
  write_text_file(dir / "lambda_summary.csv", mc_lambda_csv(summary));
  write_text_file(dir / "beta_summary.csv", mc_beta_csv(summary));
  write_text_file(dir / "corner_report.txt", corner_report(summary, corner));
  write_manifest(cfg, dir, "mc",
                 {"replications_done = " + std::to_string(summary.replications),
                  "failures = " + std::to_string(summary.failures),
                  "non_converged = " + std::to_string(summary.non_converged)});
  log << "mean runtime per replication: " << summary.mean_runtime_seconds << " s\n";
  log << "failures: " << summary.failures << ", non-converged: " << summary.non_converged
      << '\n';
  return kExitOk;
}

// one JSON object per equation: iterations, final parameter change, flags
inline std::string convergence_jsonl(const SarEstimate& est,
                                     const std::vector<std::string>& unit_labels) {
  nlohmann::ordered_json line;
  std::ostringstream out;
  for (std::size_t i = 0; i < est.per_equation.size(); ++i) {
    const Stage2Result& r = est.per_equation[i];
    line = nlohmann::ordered_json{
        {"equation", i + 1},
        {"unit", i < unit_labels.size() ? unit_labels[i] : std::to_string(i + 1)},
        {"stage2_iterations", r.iterations},
        {"stage2_final_change", r.final_change},
        {"stage2_converged", r.converged},
        {"sigma2", est.sigma2[static_cast<Eigen::Index>(i)]},
    };
    if (est.stage1_iterations.size() == est.per_equation.size()) {
      line["stage1_iterations"] = est.stage1_iterations[i];
      line["stage1_converged"] = static_cast<bool>(est.stage1_converged[i]);
    } else if (!est.stage1_iterations.empty()) {
      line["stage1_iterations"] = est.stage1_iterations[0];
      line["stage1_converged"] = static_cast<bool>(est.stage1_converged[0]);
    }
    out << line.dump() << '\n';
  }
  return out.str();
}

inline int cmd_estimate(const RunConfig& cfg, std::ostream& log) {
  const std::string panel_path = cfg.str("panel");
  if (panel_path.empty()) throw config_error("estimate: 'panel' path is required");
  const PanelData panel = read_panel_csv(panel_path);
  const EstimatorConfig est_cfg = estimator_config(cfg);
  const SarEstimate est = estimate_sar(panel, est_cfg);

  const auto dir = output_dir(cfg);
  write_matrix_csv(dir / "lambda.csv", est.lambda, panel.unit_labels, panel.unit_labels);
  {
    std::ostringstream beta;
    beta << "unit,column,beta\n";
    const auto offsets = panel.block_offsets();
    for (Eigen::Index i = 0; i < panel.N(); ++i) {
      const Eigen::Index m = panel.X_blocks[static_cast<std::size_t>(i)].cols();
      for (Eigen::Index c = 0; c < m; ++c) {
        beta << panel.unit_labels[static_cast<std::size_t>(i)] << ",x" << (c + 1) << ','
             << format_g17(est.beta_tilde[offsets[static_cast<std::size_t>(i)] + c]) << '\n';
      }
    }
    write_text_file(dir / "beta.csv", beta.str());
  }
  {
    std::ostringstream sig;
    sig << "unit,sigma2\n";
    for (Eigen::Index i = 0; i < panel.N(); ++i) {
      sig << panel.unit_labels[static_cast<std::size_t>(i)] << ',' << format_g17(est.sigma2[i])
          << '\n';
    }
    write_text_file(dir / "sigma2.csv", sig.str());
  }
  write_text_file(dir / "convergence.jsonl", convergence_jsonl(est, panel.unit_labels));
  write_manifest(cfg, dir, "estimate",
                 {"spectral_radius = " + format_g17(est.spectral_radius),
                  std::string("stable = ") + (est.stable ? "true" : "false")});
  if (!est.stable) {
    log << "warning: estimated system is explosive (spectral radius " << est.spectral_radius
        << ")\n";
  }
  return est.all_converged() ? kExitOk : kExitPartialConvergence;
}

inline std::map<std::string, std::vector<int>> parse_groups(const RunConfig& cfg,
                                                            const std::vector<std::string>& units,
                                                            int n_units) {
  std::map<std::string, std::vector<int>> groups;
  for (const std::string key : {"south", "north"}) {
    if (!cfg.has(key)) continue;
    std::vector<int> ids;
    for (const std::string& name : cfg.list(key)) {
      int idx = -1;
      for (int i = 0; i < n_units; ++i) {
        if (units[static_cast<std::size_t>(i)] == name) idx = i;
      }
      if (idx < 0) throw input_error("group '" + key + "' names unknown unit '" + name + "'");
      ids.push_back(idx);
    }
    if (ids.empty()) throw input_error("group '" + key + "' is empty");
    groups[key] = std::move(ids);
  }
  if (groups.empty()) throw input_error("rolling/irf: at least one of south/north must be set");
  return groups;
}

inline int run_two_equation_command(const RunConfig& cfg, std::ostream& log, bool rolling) {
  const std::string panel_path = cfg.str("panel");
  if (panel_path.empty()) throw config_error("'panel' path is required");
  const PanelData panel = read_panel_csv(panel_path);

  TwoEquationConfig two;
  two.estimator = estimator_config(cfg);
  two.n_units = static_cast<int>(cfg.integer("n_units", panel.N() / 2));
  two.add_intercept = cfg.flag("add_intercept", true);
  two.add_own_lags = cfg.flag("add_own_lags", true);
  two.weight_threshold = cfg.num("threshold", 0.01);
  two.horizon = static_cast<int>(cfg.integer("horizon", 60));
  if (two.horizon < 0) throw config_error("horizon must be nonnegative");
  if (two.n_units < 1 || panel.N() != 2 * two.n_units) {
    throw input_error("two-variable panel must have 2 * n_units endogenous columns");
  }
  std::vector<std::string> units(panel.unit_labels.begin(),
                                 panel.unit_labels.begin() + two.n_units);
  two.groups = parse_groups(cfg, units, two.n_units);

  const int window = static_cast<int>(
      cfg.integer("window", rolling ? 24 : static_cast<long>(panel.T())));
  std::vector<WindowEstimate> windows;
  if (rolling) {
    windows = rolling_estimate(panel, window, two);
  } else {
    windows.push_back({panel.time_labels.empty() ? "full" : panel.time_labels.front(),
                       estimate_two_equation_system(panel, two)});
  }

  std::ostringstream estimates, spills, weights;
  estimates << "window_start,variable,i,j,value\n";
  spills << "window_start,target,source_group,variable,value\n";
  weights << "window_start,target,source_group,variable,value\n";
  bool all_converged = true;
  for (const auto& w : windows) {
    for (Variable v : {Variable::rate, Variable::spread}) {
      const SarEstimate& eq = v == Variable::rate ? w.estimate.rate_eq : w.estimate.spread_eq;
      all_converged = all_converged && eq.all_converged();
      for (Eigen::Index i = 0; i < eq.lambda.rows(); ++i) {
        for (Eigen::Index j = 0; j < eq.lambda.cols(); ++j) {
          estimates << w.window_start << ',' << variable_name(v) << ',' << (i + 1) << ','
                    << (j + 1) << ',' << format_g17(eq.lambda(i, j)) << '\n';
        }
      }
    }
    auto sys = assemble_system(w.estimate.rate_eq, w.estimate.spread_eq, w.estimate.couplings);
    sys.unit_groups = two.groups;
    if (sys.singular) {
      log << "warning: window " << w.window_start
          << " assembled a singular contemporaneous matrix; responses skipped\n";
      continue;
    }
    for (const auto& row : compute_spillovers(sys, units, w.window_start, two.horizon)) {
      spills << row.window_start << ',' << row.target << ',' << row.source_group << ','
             << row.variable << ',' << format_g17(row.value) << '\n';
    }
    for (const auto& row : compute_weight_averages(w.estimate, two.groups, units,
                                                   w.window_start, two.weight_threshold)) {
      weights << row.window_start << ',' << row.target << ',' << row.source_group << ','
              << row.variable << ',' << format_g17(row.value) << '\n';
    }
  }
  const auto dir = output_dir(cfg);
  write_text_file(dir / "estimates.csv", estimates.str());
  write_text_file(dir / "spillovers.csv", spills.str());
  write_text_file(dir / "weights.csv", weights.str());
  write_manifest(cfg, dir, rolling ? "rolling" : "irf",
                 {"windows = " + std::to_string(windows.size())});
  return all_converged ? kExitOk : kExitPartialConvergence;
}

inline int cmd_rolling(const RunConfig& cfg, std::ostream& log) {
  return run_two_equation_command(cfg, log, /*rolling=*/true);
}

inline int cmd_irf(const RunConfig& cfg, std::ostream& log) {
  return run_two_equation_command(cfg, log, /*rolling=*/false);
}

}  // namespace sarvb::cli
