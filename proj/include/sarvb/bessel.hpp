#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace sarvb {

// Posterior moments of a giG(p, 1, chi) variable: E[X] and E[X^2].
struct GigMoments {
  double mean;
  double second_moment;
};

// E[1/psi] and E[psi] for 1/psi ~ inverse Gaussian iG(rho, 1).
struct IgReciprocalMoments {
  double mean_reciprocal;
  double mean;
};

namespace detail {

// Taylor coefficients of 1/Gamma(1+z) = sum_k c[k] z^k, |z| <= 1/2.
inline constexpr std::array<double, 15> kInvGammaTaylor = {
    1.0,
    0.57721566490153286,
    -0.65587807152025388,
    -0.042002635034095236,
    0.16653861138229149,
    -0.042197734555544337,
    -0.0096219715278769736,
    0.0072189432466630995,
    -0.0011651675918590651,
    -0.00021524167411149509,
    0.00012805028238811619,
    -0.000020134854780788239,
    -1.2504934821426707e-06,
    1.1330272319816959e-06,
    -2.0563384169776071e-07,
};

// Gamma1(mu) = [1/Gamma(1-mu) - 1/Gamma(1+mu)] / (2 mu), continuous at 0.
inline double temme_gamma1(double mu) {
  if (std::fabs(mu) < 0.15) {
    const double m2 = mu * mu;
    double g = 0.0;
    for (int j = 13; j >= 1; j -= 2) g = g * m2 + kInvGammaTaylor[j];
    return -g;
  }
  const double gp = 1.0 / std::tgamma(1.0 + mu);
  const double gm = 1.0 / std::tgamma(1.0 - mu);
  return (gm - gp) / (2.0 * mu);
}

// Gamma2(mu) = [1/Gamma(1-mu) + 1/Gamma(1+mu)] / 2.
inline double temme_gamma2(double mu) {
  if (std::fabs(mu) < 0.15) {
    const double m2 = mu * mu;
    double g = 0.0;
    for (int j = 14; j >= 0; j -= 2) g = g * m2 + kInvGammaTaylor[j];
    return g;
  }
  const double gp = 1.0 / std::tgamma(1.0 + mu);
  const double gm = 1.0 / std::tgamma(1.0 - mu);
  return 0.5 * (gm + gp);
}

// Temme's series for K_mu(x) and K_{mu+1}(x), |mu| <= 1/2, 0 < x <= 2.
// Returns unscaled values (no overflow risk in this range).
inline void temme_k_pair(double mu, double x, double& k_mu, double& k_mu1) {
  constexpr double eps = 1e-17;
  const double x2 = 0.5 * x;
  const double mu2 = mu * mu;
  const double pimu = std::numbers::pi * mu;
  const double fact = std::fabs(pimu) < 1e-12 ? 1.0 : pimu / std::sin(pimu);
  double d = -std::log(x2);
  double e = mu * d;
  const double fact2 = std::fabs(e) < 1e-12 ? 1.0 : std::sinh(e) / e;
  const double gam1 = temme_gamma1(mu);
  const double gam2 = temme_gamma2(mu);
  const double gampl = 1.0 / std::tgamma(1.0 + mu);
  const double gammi = 1.0 / std::tgamma(1.0 - mu);
  double ff = fact * (gam1 * std::cosh(e) + gam2 * fact2 * d);
  double sum = ff;
  e = std::exp(e);
  double p = 0.5 * e / gampl;
  double q = 0.5 / (e * gammi);
  double c = 1.0;
  d = x2 * x2;
  double sum1 = p;
  for (int i = 1; i <= 500; ++i) {
    ff = (i * ff + p + q) / (i * i - mu2);
    c *= d / i;
    p /= (i - mu);
    q /= (i + mu);
    const double del = c * ff;
    sum += del;
    const double del1 = c * (p - i * ff);
    sum1 += del1;
    if (std::fabs(del) < std::fabs(sum) * eps) break;
  }
  k_mu = sum;
  k_mu1 = sum1 * (2.0 / x);
}

// Steed/Thompson-Barnett continued fraction for x > 2, |mu| <= 1/2.
// Produces exp(x)-scaled values: k_mu = K_mu(x) e^x, k_mu1 = K_{mu+1}(x) e^x.
inline void cf2_k_pair(double mu, double x, double& k_mu, double& k_mu1) {
  constexpr double eps = 1e-16;
  const double mu2 = mu * mu;
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d;
  double delh = d;
  double q1 = 0.0;
  double q2 = 1.0;
  const double a1 = 0.25 - mu2;
  double q = a1;
  double c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  for (int i = 2; i <= 100000; ++i) {
    a -= 2.0 * (i - 1);
    c = -a * c / i;
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::fabs(dels / s) < eps) break;
  }
  h = a1 * h;
  k_mu = std::sqrt(std::numbers::pi / (2.0 * x)) / s;
  k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
}

// Polynomials u_k(t) of the large-order uniform asymptotic expansion,
// generated by u_{k+1} = t^2(1-t^2)/2 u_k' + 1/8 int_0^t (1-5 s^2) u_k(s) ds.
inline const std::vector<std::vector<double>>& debye_polys() {
  static const std::vector<std::vector<double>> polys = [] {
    constexpr int n_terms = 13;
    std::vector<std::vector<double>> u;
    u.push_back({1.0});
    for (int k = 0; k + 1 < n_terms; ++k) {
      const auto& cur = u.back();
      std::vector<double> next(cur.size() + 3, 0.0);
      for (std::size_t i = 0; i < cur.size(); ++i) {
        const double ci = cur[i];
        if (ci == 0.0) continue;
        // t^2 (1 - t^2)/2 * d/dt
        if (i >= 1) {
          next[i + 1] += 0.5 * static_cast<double>(i) * ci;
          next[i + 3] -= 0.5 * static_cast<double>(i) * ci;
        }
        // 1/8 * integral of (1 - 5 s^2) s^i
        next[i + 1] += ci / (8.0 * (i + 1));
        next[i + 3] -= 5.0 * ci / (8.0 * (i + 3));
      }
      u.push_back(std::move(next));
    }
    return u;
  }();
  return polys;
}

inline double polyval(const std::vector<double>& coeffs, double t) {
  double v = 0.0;
  for (std::size_t i = coeffs.size(); i-- > 0;) v = v * t + coeffs[i];
  return v;
}

// Uniform (Debye-type) asymptotic expansion of ln K_nu(x) for large nu.
inline double debye_log_k(double nu, double x) {
  const double z = x / nu;
  const double sq = std::hypot(1.0, z);
  const double t = 1.0 / sq;
  const double eta = sq + std::log(z / (1.0 + sq));
  const auto& u = debye_polys();
  double sum = 0.0;
  double sign = 1.0;
  double nu_pow = 1.0;
  for (const auto& poly : u) {
    sum += sign * polyval(poly, t) / nu_pow;
    sign = -sign;
    nu_pow *= nu;
  }
  return 0.5 * std::log(std::numbers::pi / (2.0 * nu)) - nu * eta -
         0.25 * std::log1p(z * z) + std::log(sum);
}

}  // namespace detail

// ln K_nu(x) for real order nu and x > 0, evaluated in log space so that
// neither the huge-order nor the large-argument regime over/underflows.
// K_{-nu} = K_nu is applied internally.
inline double log_bessel_k(double order, double argument) {
  if (!(argument > 0.0) || !std::isfinite(argument)) {
    throw std::domain_error("log_bessel_k: argument must be positive and finite");
  }
  if (!std::isfinite(order)) throw std::domain_error("log_bessel_k: order must be finite");
  const double nu = std::fabs(order);
  if (nu >= 50.0) return detail::debye_log_k(nu, argument);

  const int n = static_cast<int>(std::lround(nu));
  const double mu = nu - n;  // |mu| <= 1/2
  double k0, k1;
  double offset = 0.0;
  if (argument <= 2.0) {
    detail::temme_k_pair(mu, argument, k0, k1);
  } else {
    detail::cf2_k_pair(mu, argument, k0, k1);
    offset = -argument;
  }
  if (n == 0) return std::log(k0) + offset;
  // upward recurrence K_{m+1} = K_{m-1} + (2m/x) K_m with periodic rescaling
  constexpr double big = 1e250;
  constexpr double log_big = 575.6462732485114210;  // ln(1e250)
  for (int j = 1; j < n; ++j) {
    const double knext = k0 + (2.0 * (mu + j) / argument) * k1;
    k0 = k1;
    k1 = knext;
    if (k1 > big) {
      k0 /= big;
      k1 /= big;
      offset += log_big;
    }
  }
  return std::log(k1) + offset;
}

// K_{num}(x) / K_{den}(x), formed from log differences.
inline double bessel_k_ratio(double order_num, double order_den, double argument) {
  return std::exp(log_bessel_k(order_num, argument) - log_bessel_k(order_den, argument));
}

// Moments of giG(p, 1, chi): mean = sqrt(chi) K_{p+1}(sqrt(chi)) / K_p(sqrt(chi)),
// E[X^2] = chi K_{p+2}(sqrt(chi)) / K_p(sqrt(chi)).
inline GigMoments gig_moments(double order, double chi) {
  if (!(chi > 0.0) || !std::isfinite(chi)) {
    throw std::domain_error("gig_moments: chi must be positive and finite");
  }
  const double sx = std::sqrt(chi);
  const double l0 = log_bessel_k(order, sx);
  const double l1 = log_bessel_k(order + 1.0, sx);
  const double l2 = log_bessel_k(order + 2.0, sx);
  GigMoments m;
  m.mean = sx * std::exp(l1 - l0);
  m.second_moment = chi * std::exp(l2 - l0);
  // Turan's inequality guarantees E[X^2] >= E[X]^2; keep it true in floats too
  if (m.second_moment < m.mean * m.mean) m.second_moment = m.mean * m.mean;
  return m;
}

// E[X^{-2}] of giG(p, 1, chi) = K_{p-2}(sqrt(chi)) / (chi K_p(sqrt(chi))).
inline double gig_reciprocal_second_moment(double order, double chi) {
  if (!(chi > 0.0) || !std::isfinite(chi)) {
    throw std::domain_error("gig_reciprocal_second_moment: chi must be positive and finite");
  }
  const double sx = std::sqrt(chi);
  return std::exp(log_bessel_k(order - 2.0, sx) - log_bessel_k(order, sx)) / chi;
}

// For 1/psi ~ iG(rho, 1): E[1/psi] = rho, E[psi] = 1 + 1/rho.
inline IgReciprocalMoments ig_reciprocal_moments(double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho)) {
    throw std::domain_error("ig_reciprocal_moments: rho must be positive and finite");
  }
  return {rho, 1.0 + 1.0 / rho};
}

}  // namespace sarvb
