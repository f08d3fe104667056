#pragma once

#include "sarvb/bessel.hpp"
#include "sarvb/common.hpp"

#include <cmath>

namespace sarvb {

// Which moments feed the prior precision matrix: the reciprocal of the
// posterior means (the default), or the analytic means of the reciprocals.
enum class PriorPrecisionMode { moment_of_means, reciprocal_moments };

// Posterior hyperparameter state of one Dirichlet-Laplace-regularized
// coefficient vector: per-coefficient local scales psi, Dirichlet weights
// phi, and the global scale tau.
struct DLState {
  int dim = 0;
  double concentration = 0.5;
  VectorXd phi_bar;       // E[phi_j], sums to one
  VectorXd phi2_bar;      // E[phi_j^2]
  VectorXd psi_bar;       // E[psi_j]
  VectorXd psi_inv_bar;   // E[1/psi_j]
  double tau_bar = 1.0;   // E[tau]
  double tau2_bar = 1.0;  // E[tau^2]
  // reciprocal moments, kept for the alternative precision mode
  VectorXd phi_inv2_bar;      // E[phi_j^{-2}]
  double tau_inv2_bar = 1.0;  // E[tau^{-2}]
};

// Composite shrinkage signal: entry j is sqrt(mean_j^2 + var_j) for the j-th
// regularized coefficient.
struct SignalVector {
  VectorXd values;
};

inline SignalVector make_signal(const VectorXd& means, const VectorXd& variances) {
  if (means.size() != variances.size()) {
    throw input_error("make_signal: mean/variance length mismatch");
  }
  SignalVector s;
  s.values = (means.array().square() + variances.array().max(0.0)).sqrt();
  return s;
}

inline DLState dl_init(int dim, double concentration) {
  if (dim < 1) throw config_error("dl_init: dim must be at least 1");
  if (!(concentration > 0.0)) throw config_error("dl_init: concentration must be positive");
  DLState s;
  s.dim = dim;
  s.concentration = concentration;
  const double d = static_cast<double>(dim);
  s.phi_bar = VectorXd::Constant(dim, 1.0 / d);
  s.phi2_bar = VectorXd::Constant(dim, 1.0 / (d * d));
  s.psi_bar = VectorXd::Ones(dim);
  s.psi_inv_bar = VectorXd::Ones(dim);
  s.tau_bar = 1.0;
  s.tau2_bar = 1.0;
  s.phi_inv2_bar = VectorXd::Constant(dim, d * d);
  s.tau_inv2_bar = 1.0;
  return s;
}

// One coordinate-ascent sweep over the D-L hyperparameters given the current
// coefficient signal: tau first, then the local scales psi, then the
// Dirichlet weights phi via the unnormalized xi variables.
inline DLState dl_update(const DLState& state, const SignalVector& signal) {
  if (signal.values.size() != state.dim) {
    throw input_error("dl_update: signal length does not match state dimension");
  }
  require_finite(signal.values, "dl_update signal");
  if ((signal.values.array() < 0.0).any()) {
    throw input_error("dl_update: signal entries must be nonnegative");
  }
  if ((signal.values.array() == 0.0).all()) {
    throw degenerate_signal_error("dl_update: all-zero signal, psi update undefined");
  }
  constexpr double floor = 1e-12;  // keeps rho and chi finite under full shrinkage
  const VectorXd s = signal.values.array().max(floor);

  DLState out = state;
  const int d = state.dim;
  const double a = state.concentration;

  // tau ~ giG(d(a-1), 1, chi)
  const double chi = 2.0 * (s.array() / state.phi_bar.array()).sum();
  const double tau_order = static_cast<double>(d) * (a - 1.0);
  const GigMoments tau = gig_moments(tau_order, chi);
  out.tau_bar = tau.mean;
  out.tau2_bar = tau.second_moment;
  out.tau_inv2_bar = gig_reciprocal_second_moment(tau_order, chi);

  // 1/psi_j ~ iG(rho_j, 1), with the freshly updated tau2
  for (int j = 0; j < d; ++j) {
    const double rho = std::sqrt(state.phi2_bar[j] * out.tau2_bar) / s[j];
    const IgReciprocalMoments psi = ig_reciprocal_moments(rho);
    out.psi_inv_bar[j] = psi.mean_reciprocal;
    out.psi_bar[j] = psi.mean;
  }

  // xi_j ~ giG(a-1, 1, 2 s_j); phi is xi rescaled onto the simplex
  VectorXd xi(d), var_xi(d);
  for (int j = 0; j < d; ++j) {
    const double w = 2.0 * s[j];
    const GigMoments m = gig_moments(a - 1.0, w);
    xi[j] = m.mean;
    var_xi[j] = std::max(m.second_moment - m.mean * m.mean, 0.0);
  }
  const double sum_xi = xi.sum();
  const double sum_xi2 = sum_xi * sum_xi;
  for (int j = 0; j < d; ++j) {
    out.phi_bar[j] = xi[j] / sum_xi;
    out.phi2_bar[j] = out.phi_bar[j] * out.phi_bar[j] + var_xi[j] / sum_xi2;
    out.phi_inv2_bar[j] = sum_xi2 * gig_reciprocal_second_moment(a - 1.0, 2.0 * s[j]);
  }
  return out;
}

// Diagonal of the prior precision implied by the current D-L state.
inline VectorXd dl_prior_precision(const DLState& state,
                                   PriorPrecisionMode mode = PriorPrecisionMode::moment_of_means) {
  if (mode == PriorPrecisionMode::moment_of_means) {
    return (state.psi_bar.array() * state.phi2_bar.array() * state.tau2_bar).inverse();
  }
  return state.psi_inv_bar.array() * state.phi_inv2_bar.array() * state.tau_inv2_bar;
}

}  // namespace sarvb
