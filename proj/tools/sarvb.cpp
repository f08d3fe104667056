#include "sarvb/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

namespace {

struct CommonFlags {
  std::string config_path;
  std::map<std::string, std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "key=value configuration file");
  const auto opt = [cmd, &flags](const std::string& flag, const std::string& key,
                                 const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [&flags, key](const std::string& v) { flags.overrides[key] = v; }, help);
  };
  opt("--seed", "seed", "master seed; all randomness derives from it");
  opt("--threads", "threads", "worker pool width (default: SARVB_THREADS or hardware)");
  opt("--out", "out", "output directory");
  opt("--N", "N", "number of cross-sectional units");
  opt("--T", "T", "number of time periods");
  opt("--model", "model", "data-generating process, 1 or 2");
  opt("--replications", "replications", "Monte Carlo replications");
  opt("--window", "window", "rolling window length");
  opt("--tol", "tol", "convergence tolerance on parameter changes");
  opt("--max-iter", "max_iter", "iteration cap per fit");
  opt("--a", "a", "first-stage coefficient concentration");
  opt("--a-tilde", "a_tilde", "second-stage concentration");
  opt("--a-omega", "a_omega", "precision off-diagonal concentration");
  opt("--shared-first-stage", "shared_first_stage", "fit one pooled reduced form (true/false)");
  opt("--panel", "panel", "input panel CSV");
  opt("--n-units", "n_units", "units per variable in a two-variable panel");
  opt("--horizon", "horizon", "cumulative response horizon in periods");
  opt("--threshold", "threshold", "magnitude below which a weight counts as zero");
  opt("--south", "south", "comma-separated unit labels of the first group");
  opt("--north", "north", "comma-separated unit labels of the second group");
  opt("--corner-size", "corner_size", "corner block size in the report");
}

sarvb::cli::RunConfig make_config(const CommonFlags& flags) {
  sarvb::cli::RunConfig cfg;
  if (!flags.config_path.empty()) sarvb::cli::load_config_file(cfg, flags.config_path);
  for (const auto& [k, v] : flags.overrides) cfg.values[k] = v;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage variational Bayes estimation of panel spatial models"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto* sim = app.add_subcommand("simulate", "generate a synthetic panel and its truth record");
  auto* mc = app.add_subcommand("mc", "run a Monte Carlo study and summarize the estimates");
  auto* est = app.add_subcommand("estimate", "estimate the spillover matrix from a panel CSV");
  auto* roll = app.add_subcommand("rolling", "rolling-window two-equation estimation");
  auto* irf = app.add_subcommand("irf", "full-sample two-equation system and spillovers");
  for (auto* cmd : {sim, mc, est, roll, irf}) add_common(cmd, flags);

  CLI11_PARSE(app, argc, argv);

  try {
    const sarvb::cli::RunConfig cfg = make_config(flags);
    if (sim->parsed()) return sarvb::cli::cmd_simulate(cfg);
    if (mc->parsed()) return sarvb::cli::cmd_mc(cfg, std::cout);
    if (est->parsed()) return sarvb::cli::cmd_estimate(cfg, std::cout);
    if (roll->parsed()) return sarvb::cli::cmd_rolling(cfg, std::cout);
    if (irf->parsed()) return sarvb::cli::cmd_irf(cfg, std::cout);
  } catch (const sarvb::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return sarvb::cli::kExitConfigError;
  } catch (const sarvb::input_error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return sarvb::cli::kExitInputError;
  } catch (const sarvb::numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return sarvb::cli::kExitNumericalError;
  } catch (const std::domain_error& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return sarvb::cli::kExitNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return sarvb::cli::kExitInputError;
  }
  return sarvb::cli::kExitOk;
}
