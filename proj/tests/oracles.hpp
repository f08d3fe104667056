#pragma once

// Independent numerical oracles used by the test suites. Everything here is
// computed by adaptive quadrature of integral representations, deliberately
// sharing no code with the library implementation it checks.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracles {

inline double log_cosh(double y) {
  const double a = std::fabs(y);
  return a + std::log1p(std::exp(-2.0 * a)) - 0.6931471805599453094;
}

namespace detail {

inline double simpson(const std::function<double(double)>& f, double a, double fa, double b,
                      double fb, double fm, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return simpson(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1);
}

inline double integrate_panel(const std::function<double(double)>& f, double a, double b,
                              double tol) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson(f, a, fa, b, fb, fm, whole, tol, 48);
}

// Integrates exp(g(u) - g(peak)) over knot panels clustered around the peak,
// returning log of the integral plus the peak value.
inline double log_integral_exp(const std::function<double(double)>& g, double peak) {
  const double m = g(peak);
  // curvature-based width estimate
  const double h = 1e-4;
  double g2 = (g(peak + h) - 2.0 * m + g(peak - h)) / (h * h);
  double width = 1.0 / std::sqrt(std::max(std::fabs(g2), 1e-8));
  width = std::min(width, 2.0);
  // march outward until the integrand is negligible
  auto march = [&](double dir) {
    double u = peak;
    double step = width;
    while (g(u + dir * step) - m > -80.0) {
      u += dir * step;
      step *= 1.5;
      if (std::fabs(u - peak) > 1e6) break;
    }
    return u + dir * step;
  };
  const double lo = march(-1.0);
  const double hi = march(+1.0);
  std::vector<double> knots{lo, hi, peak};
  for (double k : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
    knots.push_back(peak - k * width);
    knots.push_back(peak + k * width);
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  knots.erase(std::remove_if(knots.begin(), knots.end(),
                             [&](double u) { return u < lo || u > hi; }),
              knots.end());
  const auto f = [&](double u) { return std::exp(g(u) - m); };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    total += integrate_panel(f, knots[i], knots[i + 1], 1e-14);
  }
  return m + std::log(total);
}

}  // namespace detail

// ln K_nu(x) from the integral representation
//   K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt,
// evaluated in log space with the peak factored out.
inline double log_bessel_k(double order, double x) {
  if (!(x > 0.0)) throw std::invalid_argument("oracle log_bessel_k: x must be positive");
  const double nu = std::fabs(order);
  const auto g = [&](double t) { return -x * std::cosh(t) + log_cosh(nu * t); };
  const double peak = std::asinh(nu / x);
  const double m = g(peak);
  // analytic curvature at the peak: -sqrt(x^2 + nu^2) + nu^2 sech^2(nu*peak)
  const double np = nu * peak;
  const double sech2 = np > 350.0 ? 0.0 : 1.0 / std::pow(std::cosh(np), 2);
  const double g2 = -std::hypot(x, nu) + nu * nu * sech2;
  double width = 1.0 / std::sqrt(std::max(std::fabs(g2), 1e-8));
  width = std::min(width, 2.0);
  double hi = peak;
  double step = width;
  while (g(hi) - m > -80.0) {
    hi += step;
    step *= 1.5;
  }
  std::vector<double> knots{0.0, peak, hi};
  for (double k : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
    if (peak - k * width > 0.0) knots.push_back(peak - k * width);
    if (peak + k * width < hi) knots.push_back(peak + k * width);
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  const auto f = [&](double t) { return std::exp(g(t) - m); };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    total += detail::integrate_panel(f, knots[i], knots[i + 1], 1e-14);
  }
  return m + std::log(total);
}

struct GigOracleMoments {
  double mean;
  double second_moment;
};

// Moments of the giG(p, 1, chi) density x^{p-1} exp(-(x + chi/x)/2) by direct
// quadrature after the substitution x = e^u.
inline GigOracleMoments gig_moments(double p, double chi) {
  if (!(chi > 0.0)) throw std::invalid_argument("oracle gig_moments: chi must be positive");
  auto log_integral = [&](double k) {
    const double pk = p + k;
    const double mode = pk + std::sqrt(pk * pk + chi);
    const auto g = [&](double u) {
      return pk * u - 0.5 * (std::exp(u) + chi * std::exp(-u));
    };
    return detail::log_integral_exp(g, std::log(mode));
  };
  const double l0 = log_integral(0.0);
  const double l1 = log_integral(1.0);
  const double l2 = log_integral(2.0);
  return {std::exp(l1 - l0), std::exp(l2 - l0)};
}

// One literal pass through the first-stage D-L hyperparameter updates, built
// on the quadrature giG oracle only. Input and output moment vectors mirror
// the library's DLState fields.
struct DlOracleState {
  Eigen::VectorXd phi_bar, phi2_bar, psi_bar, psi_inv_bar;
  double tau_bar = 1.0, tau2_bar = 1.0;
};

inline DlOracleState dl_update_oracle(double concentration, const DlOracleState& in,
                                      const Eigen::VectorXd& signal) {
  const auto d = signal.size();
  DlOracleState out;
  out.phi_bar.resize(d);
  out.phi2_bar.resize(d);
  out.psi_bar.resize(d);
  out.psi_inv_bar.resize(d);
  double chi = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) chi += 2.0 * signal[j] / in.phi_bar[j];
  const auto tau = gig_moments(static_cast<double>(d) * (concentration - 1.0), chi);
  out.tau_bar = tau.mean;
  out.tau2_bar = tau.second_moment;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double rho = std::sqrt(in.phi2_bar[j] * out.tau2_bar) / signal[j];
    out.psi_inv_bar[j] = rho;
    out.psi_bar[j] = 1.0 + 1.0 / rho;
  }
  Eigen::VectorXd xi(d), var_xi(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto m = gig_moments(concentration - 1.0, 2.0 * signal[j]);
    xi[j] = m.mean;
    var_xi[j] = m.second_moment - m.mean * m.mean;
  }
  const double sum_xi = xi.sum();
  for (Eigen::Index j = 0; j < d; ++j) {
    out.phi_bar[j] = xi[j] / sum_xi;
    out.phi2_bar[j] = out.phi_bar[j] * out.phi_bar[j] + var_xi[j] / (sum_xi * sum_xi);
  }
  return out;
}

}  // namespace oracles
