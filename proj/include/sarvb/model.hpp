#pragma once

#include "sarvb/common.hpp"
#include "sarvb/stage1.hpp"
#include "sarvb/stage2.hpp"

#include <Eigen/Eigenvalues>

#include <string>
#include <utility>
#include <vector>

namespace sarvb {

// Panel of T observations on N endogenous series plus one exogenous block per
// unit. The pooled design stacks the blocks side by side.
struct PanelData {
  MatrixXd Y;                          // T x N
  std::vector<MatrixXd> X_blocks;      // N blocks, T x m_i
  std::vector<std::string> unit_labels;
  std::vector<std::string> time_labels;

  Eigen::Index T() const { return Y.rows(); }
  Eigen::Index N() const { return Y.cols(); }

  Eigen::Index total_exog() const {
    Eigen::Index p = 0;
    for (const auto& b : X_blocks) p += b.cols();
    return p;
  }

  std::vector<Eigen::Index> block_offsets() const {
    std::vector<Eigen::Index> off(X_blocks.size() + 1, 0);
    for (std::size_t i = 0; i < X_blocks.size(); ++i) off[i + 1] = off[i] + X_blocks[i].cols();
    return off;
  }

  MatrixXd pooled_X() const {
    MatrixXd X(T(), total_exog());
    Eigen::Index c = 0;
    for (const auto& b : X_blocks) {
      X.middleCols(c, b.cols()) = b;
      c += b.cols();
    }
    return X;
  }

  void validate() const {
    if (N() < 2) throw input_error("panel: need at least two units");
    if (X_blocks.size() != static_cast<std::size_t>(N())) {
      throw input_error("panel: one exogenous block per unit required");
    }
    for (const auto& b : X_blocks) {
      if (b.cols() > 0 && b.rows() != T()) throw input_error("panel: block row mismatch");
    }
    require_finite(Y, "panel Y");
    for (const auto& b : X_blocks) {
      if (b.size() > 0) require_finite(b, "panel X block");
    }
    if (!unit_labels.empty() && unit_labels.size() != static_cast<std::size_t>(N())) {
      throw input_error("panel: unit label count mismatch");
    }
    if (!time_labels.empty() && time_labels.size() != static_cast<std::size_t>(T())) {
      throw input_error("panel: time label count mismatch");
    }
  }
};

struct EstimatorConfig {
  Stage1Config stage1;
  Stage2Config stage2;
  bool shared_first_stage = false;
  std::uint64_t seed = 0;  // reserved for stochastic initialization
  unsigned threads = 0;    // 0: SARVB_THREADS or hardware width
};

// Full-system estimate: spillover matrix, stacked exogenous coefficients,
// per-equation noise variances and fit diagnostics.
struct SarEstimate {
  MatrixXd lambda;       // N x N, zero diagonal
  VectorXd beta_tilde;   // p = sum m_i
  VectorXd sigma2;       // N, posterior mean rate/(shape-1)
  std::vector<Stage2Result> per_equation;
  std::vector<int> stage1_iterations;       // one entry (shared) or one per equation
  std::vector<unsigned char> stage1_converged;
  bool stable = false;
  double spectral_radius = 0.0;

  bool all_converged() const {
    for (const auto& r : per_equation) {
      if (!r.converged) return false;
    }
    for (unsigned char c : stage1_converged) {
      if (!c) return false;
    }
    return true;
  }
};

inline std::pair<bool, double> check_stability(const MatrixXd& lambda) {
  if (lambda.rows() != lambda.cols()) throw input_error("check_stability: matrix must be square");
  if (lambda.diagonal().cwiseAbs().maxCoeff() != 0.0) {
    throw input_error("check_stability: diagonal must be zero");
  }
  if (lambda.rows() == 0) return {true, 0.0};
  Eigen::EigenSolver<MatrixXd> es(lambda, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw numerical_error("check_stability: eigensolver failed");
  }
  const double radius = es.eigenvalues().cwiseAbs().maxCoeff();
  return {radius < 1.0, radius};
}

// Two-stage estimator over all N equations. Stage one regresses the other
// units' outcomes on the pooled design; stage two regresses each outcome on
// the stage-one fitted values plus the unit's own exogenous block.
inline SarEstimate estimate_sar(const PanelData& panel, const EstimatorConfig& config = {}) {
  panel.validate();
  const Eigen::Index N = panel.N();
  const MatrixXd X = panel.pooled_X();
  if (X.cols() < 1) throw input_error("estimate_sar: no exogenous columns");
  const auto offsets = panel.block_offsets();

  SarEstimate out;
  out.lambda = MatrixXd::Zero(N, N);
  out.beta_tilde = VectorXd::Zero(X.cols());
  out.sigma2 = VectorXd::Zero(N);
  out.per_equation.resize(static_cast<std::size_t>(N));

  MatrixXd shared_fitted;
  if (config.shared_first_stage) {
    const Stage1Result first = stage1_fit(panel.Y, X, config.stage1);
    shared_fitted = first.fitted;
    out.stage1_iterations.assign(1, first.iterations);
    out.stage1_converged.assign(1, first.converged ? 1 : 0);
  } else {
    out.stage1_iterations.assign(static_cast<std::size_t>(N), 0);
    out.stage1_converged.assign(static_cast<std::size_t>(N), 0);
  }

  std::vector<VectorXd> thetas(static_cast<std::size_t>(N));
  parallel_for(static_cast<std::size_t>(N), config.threads, [&](std::size_t eq) {
    const Eigen::Index i = static_cast<Eigen::Index>(eq);
    MatrixXd Y_hat_minus(panel.T(), N - 1);
    if (config.shared_first_stage) {
      Eigen::Index c = 0;
      for (Eigen::Index j = 0; j < N; ++j) {
        if (j == i) continue;
        Y_hat_minus.col(c++) = shared_fitted.col(j);
      }
    } else {
      MatrixXd Y_minus(panel.T(), N - 1);
      Eigen::Index c = 0;
      for (Eigen::Index j = 0; j < N; ++j) {
        if (j == i) continue;
        Y_minus.col(c++) = panel.Y.col(j);
      }
      const Stage1Result first = stage1_fit(Y_minus, X, config.stage1);
      Y_hat_minus = first.fitted;
      out.stage1_iterations[eq] = first.iterations;
      out.stage1_converged[eq] = first.converged ? 1 : 0;
    }
    Stage2Result second = stage2_fit(panel.Y.col(i), Y_hat_minus, panel.X_blocks[eq],
                                     config.stage2);
    if (!second.theta_bar.allFinite()) {
      throw numerical_error("estimate_sar: non-finite estimate for equation " +
                            std::to_string(i));
    }
    thetas[eq] = second.theta_bar;
    out.sigma2[i] = second.sigma2_inv_rate / (second.sigma2_inv_shape - 1.0);
    out.per_equation[eq] = std::move(second);
  });

  // scatter rows into the spillover matrix and the stacked beta
  for (Eigen::Index i = 0; i < N; ++i) {
    const VectorXd& theta = thetas[static_cast<std::size_t>(i)];
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < N; ++j) {
      if (j == i) continue;
      out.lambda(i, j) = theta[c++];
    }
    const Eigen::Index m_i = panel.X_blocks[static_cast<std::size_t>(i)].cols();
    out.beta_tilde.segment(offsets[static_cast<std::size_t>(i)], m_i) = theta.tail(m_i);
  }

  std::tie(out.stable, out.spectral_radius) = check_stability(out.lambda);
  return out;
}

}  // namespace sarvb
