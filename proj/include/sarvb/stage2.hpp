#pragma once

#include "sarvb/common.hpp"
#include "sarvb/dl_prior.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace sarvb {

struct Stage2Config {
  double concentration_a_tilde = 0.5;
  double nu = 0.01;       // gamma prior shape on the noise precision
  double s_tilde = 0.01;  // gamma prior rate on the noise precision
  double tol = 1e-6;
  int max_iter = 10000;
  PriorPrecisionMode precision_mode = PriorPrecisionMode::moment_of_means;
};

struct Stage2Result {
  VectorXd theta_bar;
  MatrixXd theta_cov;
  double sigma2_inv_shape = 0.0;
  double sigma2_inv_rate = 0.0;
  int iterations = 0;
  bool converged = false;
  double final_change = std::numeric_limits<double>::quiet_NaN();
  DLState theta_dl;
};

inline std::pair<VectorXd, MatrixXd> update_theta(const VectorXd& y_i, const MatrixXd& Z,
                                                  double sigma2_inv_mean,
                                                  const VectorXd& prior_precision) {
  const Eigen::Index k = Z.cols();
  if (Z.rows() != y_i.size()) throw input_error("update_theta: row mismatch between y and Z");
  if (prior_precision.size() != k) throw input_error("update_theta: prior precision length mismatch");
  if (!(sigma2_inv_mean > 0.0)) throw input_error("update_theta: noise precision must be positive");
  MatrixXd M = sigma2_inv_mean * (Z.transpose() * Z);
  M.diagonal() += prior_precision;
  Eigen::LLT<MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "update_theta: posterior precision not positive definite (rcond " << llt.rcond()
        << ")";
    throw numerical_error(msg.str());
  }
  VectorXd theta = sigma2_inv_mean * llt.solve(Z.transpose() * y_i);
  MatrixXd cov = llt.solve(MatrixXd::Identity(k, k));
  cov = 0.5 * (cov + cov.transpose()).eval();
  return {std::move(theta), std::move(cov)};
}

// q(sigma^{-2}) = Gamma(T/2 + nu, rate); the rate folds in the residual norm
// and the posterior-covariance trace.
inline std::pair<double, double> update_sigma(const VectorXd& y_i, const MatrixXd& Z,
                                              const VectorXd& theta_bar,
                                              const MatrixXd& theta_cov,
                                              const Stage2Config& cfg) {
  const double T = static_cast<double>(y_i.size());
  const double shape = 0.5 * T + cfg.nu;
  const VectorXd resid = y_i - Z * theta_bar;
  const MatrixXd ZtZ = Z.transpose() * Z;
  const double trace = (ZtZ.array() * theta_cov.array()).sum();
  const double rate = 0.5 * (resid.squaredNorm() + trace) + cfg.s_tilde;
  return {shape, rate};
}

// Second-stage VB fit of y_i on the first-stage fitted values and the unit's
// own exogenous block.
inline Stage2Result stage2_fit(const VectorXd& y_i, const MatrixXd& Y_hat_minus_i,
                               const MatrixXd& X_i, const Stage2Config& cfg = {}) {
  const Eigen::Index T = y_i.size();
  if (T < 2) throw input_error("stage2_fit: need at least two observations");
  if (Y_hat_minus_i.rows() != T || (X_i.size() > 0 && X_i.rows() != T)) {
    throw input_error("stage2_fit: row mismatch");
  }
  require_finite(y_i, "stage2_fit y");
  require_finite(Y_hat_minus_i, "stage2_fit fitted values");
  if (X_i.size() > 0) require_finite(X_i, "stage2_fit X");

  const Eigen::Index k = Y_hat_minus_i.cols() + X_i.cols();
  if (k < 1) throw input_error("stage2_fit: empty design");
  MatrixXd Z(T, k);
  Z.leftCols(Y_hat_minus_i.cols()) = Y_hat_minus_i;
  if (X_i.cols() > 0) Z.rightCols(X_i.cols()) = X_i;

  DLState dl = dl_init(static_cast<int>(k), cfg.concentration_a_tilde);
  double sigma2_inv = 1.0;
  VectorXd theta_prev = VectorXd::Zero(k);

  Stage2Result out;
  VectorXd theta;
  MatrixXd cov;
  int it = 0;
  for (it = 1; it <= cfg.max_iter; ++it) {
    const VectorXd prior = dl_prior_precision(dl, cfg.precision_mode);
    std::tie(theta, cov) = update_theta(y_i, Z, sigma2_inv, prior);
    std::tie(out.sigma2_inv_shape, out.sigma2_inv_rate) = update_sigma(y_i, Z, theta, cov, cfg);
    sigma2_inv = out.sigma2_inv_shape / out.sigma2_inv_rate;
    dl = dl_update(dl, make_signal(theta, cov.diagonal()));

    if (!theta.allFinite() || !std::isfinite(sigma2_inv)) {
      throw numerical_error("stage2_fit: non-finite iterate at iteration " + std::to_string(it));
    }
    const double delta = (theta - theta_prev).cwiseAbs().maxCoeff();
    theta_prev = theta;
    out.final_change = delta;
    if (delta < cfg.tol) {
      out.converged = true;
      break;
    }
  }
  out.iterations = std::min(it, cfg.max_iter);
  out.theta_bar = std::move(theta);
  out.theta_cov = std::move(cov);
  out.theta_dl = std::move(dl);
  return out;
}

}  // namespace sarvb
