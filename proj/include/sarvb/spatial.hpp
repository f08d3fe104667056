#pragma once

#include "sarvb/common.hpp"
#include "sarvb/model.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace sarvb {

enum class Variable { rate, spread };

inline const char* variable_name(Variable v) { return v == Variable::rate ? "rate" : "spread"; }

// Diagonal coupling and own-lag coefficients of the two-equation system:
// c12 couples spreads into the rate equations, c22 rates into the spread
// equations, c17/c27 are the own lags.
struct CouplingCoefficients {
  VectorXd c12, c22, c17, c27;
};

// Stacked 2N-variable simultaneous system
//   B z_t = lag z_{t-1} + A x_t + eps_t.
struct SimultaneousSystem {
  MatrixXd contemporaneous;  // B
  MatrixXd lag;
  MatrixXd exog_coef;  // A, may be empty
  std::map<std::string, std::vector<int>> unit_groups;
  int n_units = 0;
  double condition_estimate = 0.0;
  bool singular = false;
};

inline SimultaneousSystem assemble_system(const SarEstimate& rate_eq,
                                          const SarEstimate& spread_eq,
                                          const CouplingCoefficients& couplings,
                                          MatrixXd exog_coef = MatrixXd()) {
  const Eigen::Index N = rate_eq.lambda.rows();
  if (spread_eq.lambda.rows() != N) {
    throw input_error("assemble_system: estimates cover different unit counts");
  }
  for (const VectorXd* v : {&couplings.c12, &couplings.c22, &couplings.c17, &couplings.c27}) {
    if (v->size() != N) throw input_error("assemble_system: coupling length mismatch");
  }
  SimultaneousSystem sys;
  sys.n_units = static_cast<int>(N);
  sys.contemporaneous = MatrixXd::Zero(2 * N, 2 * N);
  sys.contemporaneous.topLeftCorner(N, N) = MatrixXd::Identity(N, N) - rate_eq.lambda;
  sys.contemporaneous.bottomRightCorner(N, N) = MatrixXd::Identity(N, N) - spread_eq.lambda;
  sys.contemporaneous.topRightCorner(N, N) = MatrixXd((-couplings.c12).asDiagonal());
  sys.contemporaneous.bottomLeftCorner(N, N) = MatrixXd((-couplings.c22).asDiagonal());
  sys.lag = MatrixXd::Zero(2 * N, 2 * N);
  sys.lag.topLeftCorner(N, N) = MatrixXd(couplings.c17.asDiagonal());
  sys.lag.bottomRightCorner(N, N) = MatrixXd(couplings.c27.asDiagonal());
  sys.exog_coef = std::move(exog_coef);

  Eigen::JacobiSVD<MatrixXd> svd(sys.contemporaneous);
  const double smax = svd.singularValues().maxCoeff();
  const double smin = svd.singularValues().minCoeff();
  sys.singular = smin <= 1e-12 * smax;
  sys.condition_estimate = sys.singular ? std::numeric_limits<double>::infinity() : smax / smin;
  return sys;
}

// Response paths to a one-time disturbance: row h holds the 2N responses at
// horizon h, with exogenous variables held fixed.
inline MatrixXd impulse_response(const SimultaneousSystem& sys, const VectorXd& shock,
                                 int horizon) {
  const Eigen::Index d = sys.contemporaneous.rows();
  if (shock.size() != d) throw input_error("impulse_response: shock length mismatch");
  if (horizon < 0) throw input_error("impulse_response: horizon must be nonnegative");
  if (sys.singular) {
    throw numerical_error("impulse_response: contemporaneous matrix is singular");
  }
  Eigen::PartialPivLU<MatrixXd> lu(sys.contemporaneous);
  MatrixXd out(horizon + 1, d);
  VectorXd r = lu.solve(shock);
  out.row(0) = r.transpose();
  for (int h = 1; h <= horizon; ++h) {
    r = lu.solve(sys.lag * r);
    out.row(h) = r.transpose();
  }
  return out;
}

// Sum of the target's responses over h = 0..horizon to a unit shock at a raw
// stacked index.
inline double cumulative_response(const SimultaneousSystem& sys, Eigen::Index source,
                                  Eigen::Index target, int horizon) {
  const Eigen::Index d = sys.contemporaneous.rows();
  if (source < 0 || source >= d || target < 0 || target >= d) {
    throw input_error("cumulative_response: index out of range");
  }
  VectorXd shock = VectorXd::Zero(d);
  shock[source] = 1.0;
  const MatrixXd resp = impulse_response(sys, shock, horizon);
  return resp.col(target).sum();
}

// Mean cumulative response of `target` to unit shocks in the source group,
// with the target's own shock excluded. Shock and response are read on the
// same variable block.
inline double cumulative_spillover(const SimultaneousSystem& sys,
                                   const std::vector<int>& sources, int target, Variable variable,
                                   int horizon = 60) {
  const int N = sys.n_units;
  const int offset = variable == Variable::rate ? 0 : N;
  double sum = 0.0;
  int used = 0;
  for (int s : sources) {
    if (s == target) continue;
    if (s < 0 || s >= N) throw input_error("cumulative_spillover: source out of range");
    sum += cumulative_response(sys, offset + s, offset + target, horizon);
    ++used;
  }
  if (used == 0) throw input_error("cumulative_spillover: empty source set");
  return sum / static_cast<double>(used);
}

struct GroupAverage {
  double value = 0.0;
  bool is_empty = true;
};

// Mean of the row entries inside `group` whose magnitude clears `threshold`;
// shrunk-to-zero entries do not count as links.
inline GroupAverage group_weight_average(const VectorXd& w_row, const std::vector<int>& group,
                                         double threshold) {
  GroupAverage out;
  double sum = 0.0;
  int used = 0;
  for (int j : group) {
    if (j < 0 || j >= w_row.size()) throw input_error("group_weight_average: index out of range");
    if (std::fabs(w_row[j]) > threshold) {
      sum += w_row[j];
      ++used;
    }
  }
  if (used > 0) {
    out.value = sum / static_cast<double>(used);
    out.is_empty = false;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Two-equation estimation pipeline
// ---------------------------------------------------------------------------

struct TwoEquationConfig {
  EstimatorConfig estimator;
  int n_units = 0;  // panel carries 2 * n_units endogenous columns
  bool add_intercept = true;
  bool add_own_lags = true;
  double weight_threshold = 0.01;
  int horizon = 60;
  std::map<std::string, std::vector<int>> groups;
};

struct TwoEquationEstimate {
  SarEstimate rate_eq;
  SarEstimate spread_eq;
  CouplingCoefficients couplings;
};

// Estimates W^rate and W^spread plus the couplings from a panel whose first
// n_units endogenous columns are the rate block and the last n_units the
// spread block. The contemporaneous cross-variable regressor of each equation
// is endogenous and enters through its first-stage fitted value, like the
// spatial terms.
inline TwoEquationEstimate estimate_two_equation_system(const PanelData& panel,
                                                        const TwoEquationConfig& cfg) {
  panel.validate();
  const int N = cfg.n_units;
  if (N < 1) throw config_error("two-equation system: n_units must be positive");
  if (panel.N() != 2 * N) {
    throw input_error("two-equation system: panel must carry 2 * n_units endogenous columns");
  }
  const Eigen::Index T_raw = panel.T();
  const Eigen::Index T = cfg.add_own_lags ? T_raw - 1 : T_raw;
  if (T < 2) throw input_error("two-equation system: not enough observations");

  // effective endogenous sample and per-equation designs
  const MatrixXd Y = cfg.add_own_lags ? panel.Y.bottomRows(T).eval() : panel.Y;
  std::vector<MatrixXd> own_design(static_cast<std::size_t>(2 * N));
  for (int g = 0; g < 2 * N; ++g) {
    const MatrixXd& file_block = panel.X_blocks[static_cast<std::size_t>(g)];
    const Eigen::Index m_file = file_block.cols();
    const Eigen::Index m = (cfg.add_intercept ? 1 : 0) + m_file + (cfg.add_own_lags ? 1 : 0);
    MatrixXd X(T, m);
    Eigen::Index c = 0;
    if (cfg.add_intercept) X.col(c++).setOnes();
    if (m_file > 0) {
      X.middleCols(c, m_file) = cfg.add_own_lags ? file_block.bottomRows(T).eval() : file_block;
      c += m_file;
    }
    if (cfg.add_own_lags) X.col(c) = panel.Y.col(g).topRows(T);
    own_design[static_cast<std::size_t>(g)] = std::move(X);
  }

  // pooled first-stage design: one shared intercept plus every unit's columns
  Eigen::Index p_pool = cfg.add_intercept ? 1 : 0;
  for (const auto& b : own_design) p_pool += b.cols() - (cfg.add_intercept ? 1 : 0);
  MatrixXd X_pool(T, p_pool);
  {
    Eigen::Index c = 0;
    if (cfg.add_intercept) X_pool.col(c++).setOnes();
    for (const auto& b : own_design) {
      const Eigen::Index skip = cfg.add_intercept ? 1 : 0;
      const Eigen::Index w = b.cols() - skip;
      if (w > 0) X_pool.middleCols(c, w) = b.rightCols(w);
      c += w;
    }
  }

  // endogenous regressor set of equation g: same-variable others + the
  // cross-variable column of the same unit
  const auto endo_set = [&](int g) {
    std::vector<int> cols;
    cols.reserve(static_cast<std::size_t>(N));
    const bool is_rate = g < N;
    const int unit = is_rate ? g : g - N;
    const int base = is_rate ? 0 : N;
    for (int j = 0; j < N; ++j) {
      if (j != unit) cols.push_back(base + j);
    }
    cols.push_back(is_rate ? N + unit : unit);  // cross-variable column, last
    return cols;
  };

  MatrixXd fitted_all;
  if (cfg.estimator.shared_first_stage) {
    fitted_all = stage1_fit(Y, X_pool, cfg.estimator.stage1).fitted;
  }

  struct EqResult {
    Stage2Result second;
    int stage1_iterations = 0;
    bool stage1_converged = true;
  };
  std::vector<EqResult> eq(static_cast<std::size_t>(2 * N));
  parallel_for(static_cast<std::size_t>(2 * N), cfg.estimator.threads, [&](std::size_t gi) {
    const int g = static_cast<int>(gi);
    const std::vector<int> cols = endo_set(g);
    MatrixXd Z_endo(T, cols.size());
    if (cfg.estimator.shared_first_stage) {
      for (std::size_t c = 0; c < cols.size(); ++c) Z_endo.col(c) = fitted_all.col(cols[c]);
    } else {
      MatrixXd Y_sel(T, cols.size());
      for (std::size_t c = 0; c < cols.size(); ++c) Y_sel.col(c) = Y.col(cols[c]);
      const Stage1Result first = stage1_fit(Y_sel, X_pool, cfg.estimator.stage1);
      Z_endo = first.fitted;
      eq[gi].stage1_iterations = first.iterations;
      eq[gi].stage1_converged = first.converged;
    }
    eq[gi].second = stage2_fit(Y.col(g), Z_endo, own_design[gi], cfg.estimator.stage2);
  });

  // scatter into the two per-variable estimates
  TwoEquationEstimate out;
  const auto init_est = [&](SarEstimate& est) {
    est.lambda = MatrixXd::Zero(N, N);
    est.sigma2 = VectorXd::Zero(N);
    est.per_equation.resize(static_cast<std::size_t>(N));
    est.stage1_iterations.resize(static_cast<std::size_t>(N), 0);
    est.stage1_converged.resize(static_cast<std::size_t>(N), 1);
  };
  init_est(out.rate_eq);
  init_est(out.spread_eq);
  out.couplings.c12 = VectorXd::Zero(N);
  out.couplings.c22 = VectorXd::Zero(N);
  out.couplings.c17 = VectorXd::Zero(N);
  out.couplings.c27 = VectorXd::Zero(N);

  const Eigen::Index beta_len = [&] {
    Eigen::Index len = 0;
    for (int i = 0; i < N; ++i) len += own_design[static_cast<std::size_t>(i)].cols();
    return len;
  }();
  out.rate_eq.beta_tilde = VectorXd::Zero(beta_len);
  Eigen::Index beta_len_sp = 0;
  for (int i = 0; i < N; ++i) beta_len_sp += own_design[static_cast<std::size_t>(N + i)].cols();
  out.spread_eq.beta_tilde = VectorXd::Zero(beta_len_sp);

  Eigen::Index off_rate = 0, off_spread = 0;
  for (int g = 0; g < 2 * N; ++g) {
    const bool is_rate = g < N;
    const int unit = is_rate ? g : g - N;
    SarEstimate& est = is_rate ? out.rate_eq : out.spread_eq;
    const EqResult& r = eq[static_cast<std::size_t>(g)];
    const VectorXd& theta = r.second.theta_bar;
    Eigen::Index c = 0;
    for (int j = 0; j < N; ++j) {
      if (j == unit) continue;
      est.lambda(unit, j) = theta[c++];
    }
    const double couple = theta[c++];
    if (is_rate) {
      out.couplings.c12[unit] = couple;
    } else {
      out.couplings.c22[unit] = couple;
    }
    const Eigen::Index m = own_design[static_cast<std::size_t>(g)].cols();
    if (cfg.add_own_lags) {
      (is_rate ? out.couplings.c17 : out.couplings.c27)[unit] = theta[c + m - 1];
    }
    if (is_rate) {
      out.rate_eq.beta_tilde.segment(off_rate, m) = theta.segment(c, m);
      off_rate += m;
    } else {
      out.spread_eq.beta_tilde.segment(off_spread, m) = theta.segment(c, m);
      off_spread += m;
    }
    est.sigma2[unit] = r.second.sigma2_inv_rate / (r.second.sigma2_inv_shape - 1.0);
    est.stage1_iterations[static_cast<std::size_t>(unit)] = r.stage1_iterations;
    est.stage1_converged[static_cast<std::size_t>(unit)] = r.stage1_converged ? 1 : 0;
    est.per_equation[static_cast<std::size_t>(unit)] = std::move(eq[static_cast<std::size_t>(g)].second);
  }
  std::tie(out.rate_eq.stable, out.rate_eq.spectral_radius) =
      check_stability(out.rate_eq.lambda);
  std::tie(out.spread_eq.stable, out.spread_eq.spectral_radius) =
      check_stability(out.spread_eq.lambda);
  return out;
}

struct WindowEstimate {
  std::string window_start;
  TwoEquationEstimate estimate;
};

// Re-estimates the two-equation system on every length-`window` slice of the
// panel. Windows are independent and run on the configured pool.
inline std::vector<WindowEstimate> rolling_estimate(const PanelData& panel, int window,
                                                    const TwoEquationConfig& cfg) {
  panel.validate();
  if (window < 2) throw input_error("rolling_estimate: window too short");
  const Eigen::Index T = panel.T();
  if (window > T) throw input_error("rolling_estimate: window exceeds the sample");
  const Eigen::Index n_windows = T - window + 1;

  std::vector<WindowEstimate> out(static_cast<std::size_t>(n_windows));
  TwoEquationConfig window_cfg = cfg;
  window_cfg.estimator.threads = 1;
  parallel_for(static_cast<std::size_t>(n_windows), cfg.estimator.threads, [&](std::size_t w) {
    PanelData slice;
    slice.Y = panel.Y.middleRows(static_cast<Eigen::Index>(w), window);
    slice.X_blocks.reserve(panel.X_blocks.size());
    for (const auto& b : panel.X_blocks) {
      slice.X_blocks.push_back(b.rows() > 0 ? b.middleRows(static_cast<Eigen::Index>(w), window).eval()
                                            : b);
    }
    slice.unit_labels = panel.unit_labels;
    if (!panel.time_labels.empty()) {
      slice.time_labels.assign(panel.time_labels.begin() + static_cast<std::ptrdiff_t>(w),
                               panel.time_labels.begin() + static_cast<std::ptrdiff_t>(w) + window);
    }
    out[w].window_start = panel.time_labels.empty() ? std::to_string(w + 1)
                                                    : panel.time_labels[w];
    out[w].estimate = estimate_two_equation_system(slice, window_cfg);
  });
  return out;
}

// One tidy output row of the spillover / weight-average analytics.
struct SpilloverRow {
  std::string window_start;
  std::string target;
  std::string source_group;
  std::string variable;
  double value = 0.0;
};

using SpilloverSeries = std::vector<SpilloverRow>;

inline SpilloverSeries compute_spillovers(const SimultaneousSystem& sys,
                                          const std::vector<std::string>& unit_labels,
                                          const std::string& window_start, int horizon) {
  SpilloverSeries rows;
  for (const auto& [group_name, members] : sys.unit_groups) {
    for (int target = 0; target < sys.n_units; ++target) {
      bool only_self = true;
      for (int s : members) {
        if (s != target) only_self = false;
      }
      if (members.empty() || only_self) continue;
      for (Variable v : {Variable::rate, Variable::spread}) {
        SpilloverRow row;
        row.window_start = window_start;
        row.target = unit_labels.empty() ? std::to_string(target + 1)
                                         : unit_labels[static_cast<std::size_t>(target)];
        row.source_group = group_name;
        row.variable = variable_name(v);
        row.value = cumulative_spillover(sys, members, target, v, horizon);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

inline SpilloverSeries compute_weight_averages(const TwoEquationEstimate& est,
                                               const std::map<std::string, std::vector<int>>& groups,
                                               const std::vector<std::string>& unit_labels,
                                               const std::string& window_start, double threshold) {
  SpilloverSeries rows;
  const int N = static_cast<int>(est.rate_eq.lambda.rows());
  for (const auto& [group_name, members] : groups) {
    for (int target = 0; target < N; ++target) {
      std::vector<int> others;
      for (int s : members) {
        if (s != target) others.push_back(s);
      }
      if (others.empty()) continue;
      for (Variable v : {Variable::rate, Variable::spread}) {
        const MatrixXd& W = v == Variable::rate ? est.rate_eq.lambda : est.spread_eq.lambda;
        const GroupAverage avg =
            group_weight_average(W.row(target).transpose(), others, threshold);
        SpilloverRow row;
        row.window_start = window_start;
        row.target = unit_labels.empty() ? std::to_string(target + 1)
                                         : unit_labels[static_cast<std::size_t>(target)];
        row.source_group = group_name;
        row.variable = variable_name(v);
        row.value = avg.is_empty ? 0.0 : avg.value;
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

}  // namespace sarvb
