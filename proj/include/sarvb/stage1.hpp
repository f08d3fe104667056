#pragma once

#include "sarvb/common.hpp"
#include "sarvb/dl_prior.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

namespace sarvb {

struct Stage1Config {
  double concentration_a = 0.5;
  double concentration_a_omega = 0.5;
  double diag_rate = 1.0;  // exponential prior rate on the precision diagonal
  double tol = 1e-6;
  int max_iter = 10000;
  PriorPrecisionMode precision_mode = PriorPrecisionMode::moment_of_means;
  double ridge_init = 1e-3;
  // invoked after each full column cycle; used by tests to watch the iterate
  std::function<void(int iteration, const MatrixXd& omega_bar)> on_cycle;
};

// linear index of off-diagonal pair (r, c), r < c, over the strict upper triangle
inline Eigen::Index offdiag_index(Eigen::Index r, Eigen::Index c) {
  return c * (c - 1) / 2 + r;
}

// Mean precision matrix of the first-stage errors together with the D-L state
// of its off-diagonal elements and the latest per-column posterior covariances.
struct PrecisionState {
  MatrixXd omega_bar;
  std::optional<DLState> offdiag_dl;          // absent when n == 1
  std::vector<MatrixXd> b2_covariances;       // C-bar per column, most recent cycle
  MatrixXd cvar;  // cvar(r, c): posterior variance of omega(r, c) written by column c
};

inline PrecisionState make_precision_state(Eigen::Index n, double concentration_a_omega) {
  PrecisionState p;
  p.omega_bar = MatrixXd::Identity(n, n);
  if (n >= 2) p.offdiag_dl = dl_init(static_cast<int>(n * (n - 1) / 2), concentration_a_omega);
  p.b2_covariances.assign(static_cast<std::size_t>(n), MatrixXd());
  p.cvar = MatrixXd::Zero(n, n);
  return p;
}

struct Stage1Result {
  VectorXd gamma_bar;
  MatrixXd gamma_cov;
  PrecisionState precision;
  MatrixXd fitted;
  int iterations = 0;
  bool converged = false;
  double final_change = std::numeric_limits<double>::quiet_NaN();
  DLState gamma_dl;
};

// Coefficient block update: V-bar = (V^{-1} + Omega (x) X'X)^{-1} and
// gamma-bar = V-bar (Omega (x) X') vec(Y).
inline std::pair<VectorXd, MatrixXd> update_gamma(const MatrixXd& Y_minus_i, const MatrixXd& X,
                                                  const MatrixXd& omega_bar,
                                                  const VectorXd& prior_precision) {
  const Eigen::Index T = X.rows();
  const Eigen::Index p = X.cols();
  const Eigen::Index n = Y_minus_i.cols();
  if (Y_minus_i.rows() != T) throw input_error("update_gamma: row mismatch between Y and X");
  if (omega_bar.rows() != n || omega_bar.cols() != n) {
    throw input_error("update_gamma: omega dimension mismatch");
  }
  if (prior_precision.size() != n * p) {
    throw input_error("update_gamma: prior precision length mismatch");
  }
  const MatrixXd G = X.transpose() * X;
  MatrixXd M(n * p, n * p);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < n; ++k) {
      M.block(j * p, k * p, p, p) = omega_bar(j, k) * G;
    }
  }
  M.diagonal() += prior_precision;
  Eigen::LLT<MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "update_gamma: posterior precision not positive definite"
        << " (diag range [" << M.diagonal().minCoeff() << ", " << M.diagonal().maxCoeff()
        << "], rcond " << llt.rcond() << ")";
    throw numerical_error(msg.str());
  }
  const MatrixXd B = (X.transpose() * Y_minus_i) * omega_bar;  // p x n
  const VectorXd rhs = Eigen::Map<const VectorXd>(B.data(), B.size());
  VectorXd gamma = llt.solve(rhs);
  MatrixXd V = llt.solve(MatrixXd::Identity(n * p, n * p));
  V = 0.5 * (V + V.transpose()).eval();
  return {std::move(gamma), std::move(V)};
}

namespace detail {

inline MatrixXd spd_inverse(const MatrixXd& A, const char* what) {
  Eigen::LLT<MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) {
    throw numerical_error(std::string(what) + ": matrix not positive definite");
  }
  return llt.solve(MatrixXd::Identity(A.rows(), A.cols()));
}

// Full-inverse cache for large n, updated by rank-two corrections so a column
// sweep costs O(n^2) per column instead of O(n^3).
struct OmegaInverseCache {
  MatrixXd inv;
  bool active = false;
};

inline double trace_product(const MatrixXd& A, const MatrixXd& B) {
  // both symmetric, tr(AB) = sum_ij A_ij B_ij
  return (A.array() * B.array()).sum();
}

inline void update_precision_column_inplace(PrecisionState& state, const MatrixXd& S,
                                            const MatrixXd& G, const MatrixXd& gamma_cov,
                                            Eigen::Index col, double T, const Stage1Config& cfg,
                                            OmegaInverseCache* cache) {
  MatrixXd& omega = state.omega_bar;
  const Eigen::Index n = omega.rows();
  const Eigen::Index p = G.rows();

  const auto diag_block = [&](Eigen::Index j) {
    return gamma_cov.block(j * p, j * p, p, p);
  };
  const double sbar_cc =
      0.5 * (S(col, col) + trace_product(G, diag_block(col)) + cfg.diag_rate);
  const double b1 = 0.5 * T / sbar_cc;
  if (n == 1) {
    omega(0, 0) = b1;
    return;
  }

  std::vector<Eigen::Index> idx;
  idx.reserve(n - 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (r != col) idx.push_back(r);
  }
  const Eigen::Index m = n - 1;

  // (Omega_{-c,-c})^{-1}, either from the cached full inverse or directly
  MatrixXd omega_mm_inv;
  if (cache && cache->active) {
    const MatrixXd& P = cache->inv;
    VectorXd pc(m);
    for (Eigen::Index r = 0; r < m; ++r) pc[r] = P(idx[r], col);
    omega_mm_inv.resize(m, m);
    for (Eigen::Index r = 0; r < m; ++r) {
      for (Eigen::Index c2 = 0; c2 < m; ++c2) {
        omega_mm_inv(r, c2) = P(idx[r], idx[c2]) - pc[r] * pc[c2] / P(col, col);
      }
    }
  } else {
    MatrixXd omega_mm(m, m);
    for (Eigen::Index r = 0; r < m; ++r) {
      for (Eigen::Index c2 = 0; c2 < m; ++c2) omega_mm(r, c2) = omega(idx[r], idx[c2]);
    }
    omega_mm_inv = spd_inverse(omega_mm, "update_precision_column");
  }

  // s-bar for the off-diagonal block plus the coefficient cross-covariance
  // traces tr(X'X Cov(upsilon_r, upsilon_col))
  VectorXd sbar(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    sbar[r] = S(idx[r], col) +
              (G.array() * gamma_cov.block(idx[r] * p, col * p, p, p).array()).sum();
  }

  // per-element D-L variances, clamped to keep the solve well posed
  VectorXd h(m);
  const DLState& dl = *state.offdiag_dl;
  for (Eigen::Index r = 0; r < m; ++r) {
    const Eigen::Index lo = std::min(idx[r], col);
    const Eigen::Index hi = std::max(idx[r], col);
    const Eigen::Index k = offdiag_index(lo, hi);
    const double v = dl.psi_bar[k] * dl.phi2_bar[k] * dl.tau2_bar;
    h[r] = std::clamp(v, 1e-12, 1e12);
  }

  MatrixXd C = (2.0 * sbar_cc) * omega_mm_inv;
  C.diagonal() += h.cwiseInverse();
  C = spd_inverse(C, "update_precision_column");
  C = 0.5 * (C + C.transpose()).eval();

  const VectorXd b2 = -(C * sbar);
  const double diag_new = b1 + b2.dot(omega_mm_inv * b2);

  VectorXd delta = VectorXd::Zero(n);
  for (Eigen::Index r = 0; r < m; ++r) delta[idx[r]] = b2[r] - omega(idx[r], col);
  delta[col] = diag_new - omega(col, col);

  for (Eigen::Index r = 0; r < m; ++r) {
    omega(idx[r], col) = b2[r];
    omega(col, idx[r]) = b2[r];
    state.cvar(idx[r], col) = C(r, r);
  }
  omega(col, col) = diag_new;
  state.b2_covariances[static_cast<std::size_t>(col)] = std::move(C);

  if (cache && cache->active) {
    // symmetric rank-two correction of the cached inverse
    VectorXd v = delta;
    v[col] -= 0.5 * delta[col];
    MatrixXd& P = cache->inv;
    {
      const VectorXd Pu = P.col(col);
      const VectorXd Ptv = P.transpose() * v;
      const double denom = 1.0 + Ptv[col];
      P.noalias() -= (Pu / denom) * Ptv.transpose();
    }
    {
      const VectorXd Pv = P * v;
      const VectorXd Pu_row = P.row(col).transpose();
      const double denom = 1.0 + Pv[col];
      P.noalias() -= (Pv / denom) * Pu_row.transpose();
    }
    P = 0.5 * (P + P.transpose()).eval();
  }
}

}  // namespace detail

// Single precision-matrix column update; the in-place variant above is what
// the fit loop uses.
inline PrecisionState update_precision_column(const PrecisionState& state, const MatrixXd& S,
                                              const MatrixXd& X, const MatrixXd& gamma_cov,
                                              Eigen::Index column, const Stage1Config& config) {
  PrecisionState out = state;
  const MatrixXd G = X.transpose() * X;
  detail::update_precision_column_inplace(out, S, G, gamma_cov, column,
                                          static_cast<double>(X.rows()), config, nullptr);
  return out;
}

// First-stage VB fit of Y = X Upsilon + E with D-L-shrunk coefficients and a
// D-L-regularized sparse precision matrix for E.
inline Stage1Result stage1_fit(const MatrixXd& Y_minus_i, const MatrixXd& X,
                               const Stage1Config& cfg = {}) {
  const Eigen::Index T = X.rows();
  const Eigen::Index n = Y_minus_i.cols();
  const Eigen::Index p = X.cols();
  if (T < 2) throw input_error("stage1_fit: need at least two observations");
  if (n < 1 || p < 1) throw input_error("stage1_fit: empty design");
  if (Y_minus_i.rows() != T) throw input_error("stage1_fit: row mismatch between Y and X");
  require_finite(Y_minus_i, "stage1_fit Y");
  require_finite(X, "stage1_fit X");
  const MatrixXd G = X.transpose() * X;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (G(j, j) <= 0.0) {
      throw input_error("stage1_fit: column " + std::to_string(j) + " of X is identically zero");
    }
  }

  // ridge start for the change metric; the first update overwrites it
  MatrixXd ridge = G;
  ridge.diagonal().array() += cfg.ridge_init;
  const MatrixXd ups0 = ridge.llt().solve(X.transpose() * Y_minus_i);
  VectorXd gamma_prev = Eigen::Map<const VectorXd>(ups0.data(), ups0.size());

  PrecisionState prec = make_precision_state(n, cfg.concentration_a_omega);
  DLState dl_gamma = dl_init(static_cast<int>(n * p), cfg.concentration_a);
  MatrixXd omega_prev = prec.omega_bar;

  Stage1Result out;
  const bool big_n = n > 50;
  VectorXd gamma;
  MatrixXd V;
  MatrixXd fitted;
  int it = 0;
  for (it = 1; it <= cfg.max_iter; ++it) {
    const VectorXd prior = dl_prior_precision(dl_gamma, cfg.precision_mode);
    std::tie(gamma, V) = update_gamma(Y_minus_i, X, prec.omega_bar, prior);

    const auto ups = Eigen::Map<const MatrixXd>(gamma.data(), p, n);
    fitted.noalias() = X * ups;
    const MatrixXd resid = Y_minus_i - fitted;
    const MatrixXd S = resid.transpose() * resid;

    detail::OmegaInverseCache cache;
    if (big_n) {
      cache.inv = detail::spd_inverse(prec.omega_bar, "stage1_fit omega");
      cache.active = true;
    }
    for (Eigen::Index c = 0; c < n; ++c) {
      detail::update_precision_column_inplace(prec, S, G, V, c, static_cast<double>(T), cfg,
                                              big_n ? &cache : nullptr);
    }
    if (cfg.on_cycle) cfg.on_cycle(it, prec.omega_bar);

    dl_gamma = dl_update(dl_gamma, make_signal(gamma, V.diagonal()));
    if (n >= 2) {
      const Eigen::Index n_off = n * (n - 1) / 2;
      VectorXd means(n_off), vars(n_off);
      for (Eigen::Index c = 1; c < n; ++c) {
        for (Eigen::Index r = 0; r < c; ++r) {
          const Eigen::Index k = offdiag_index(r, c);
          means[k] = prec.omega_bar(r, c);
          vars[k] = prec.cvar(r, c);
        }
      }
      prec.offdiag_dl = dl_update(*prec.offdiag_dl, make_signal(means, vars));
    }

    if (!gamma.allFinite() || !prec.omega_bar.allFinite()) {
      throw numerical_error("stage1_fit: non-finite iterate at iteration " + std::to_string(it));
    }
    const double delta = std::max((gamma - gamma_prev).cwiseAbs().maxCoeff(),
                                  (prec.omega_bar - omega_prev).cwiseAbs().maxCoeff());
    gamma_prev = gamma;
    omega_prev = prec.omega_bar;
    out.final_change = delta;
    if (delta < cfg.tol) {
      out.converged = true;
      break;
    }
  }
  out.iterations = std::min(it, cfg.max_iter);
  out.gamma_bar = std::move(gamma);
  out.gamma_cov = std::move(V);
  out.precision = std::move(prec);
  out.fitted = std::move(fitted);
  out.gamma_dl = std::move(dl_gamma);
  return out;
}

}  // namespace sarvb
