// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Heavier than the unit tests by design; the Monte Carlo
// studies here are desk-scale stand-ins for the full published runs.

#include "sarvb/cli.hpp"
#include "sarvb/model.hpp"
#include "sarvb/rng.hpp"
#include "sarvb/simulate.hpp"
#include "sarvb/spatial.hpp"

#include "oracles.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace {

using namespace sarvb;

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[criterion %2d] %s  %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

bool is_neighbor(int i, int j, int N) { return j == (i + 1) % N || j == (i + N - 1) % N; }
bool is_second_neighbor(int i, int j, int N) { return j == (i + 2) % N || j == (i + N - 2) % N; }

constexpr std::uint64_t kSeed = 20240601;

EstimatorConfig harness_config() {
  EstimatorConfig cfg;
  cfg.shared_first_stage = true;
  return cfg;
}

struct Table1Run {
  MCSummary summary;
  double support_error_rate = 0.0;  // mean per-replication error share
  std::string lambda_csv, beta_csv;
};

Table1Run run_table1_study(int T, int reps) {
  DgpSpec dgp;
  dgp.N = 30;
  dgp.T = T;
  double err_sum = 0.0;
  int observed = 0;
  const auto observer = [&](int, const SarEstimate& est, const SimTruth& truth) {
    int errors = 0;
    const int N = static_cast<int>(truth.lambda.rows());
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        if (i == j) continue;
        const bool truth_nz = truth.lambda(i, j) != 0.0;
        const bool est_nz = std::fabs(est.lambda(i, j)) > 0.1;
        if (truth_nz != est_nz) ++errors;
      }
    }
    err_sum += static_cast<double>(errors) / static_cast<double>(N * N - N);
    ++observed;
  };
  Table1Run out;
  out.summary = run_monte_carlo(dgp, harness_config(), reps, kSeed, 0, observer);
  out.support_error_rate = observed > 0 ? err_sum / observed : 1.0;
  out.lambda_csv = cli::mc_lambda_csv(out.summary);
  out.beta_csv = cli::mc_beta_csv(out.summary);
  return out;
}

void criterion_1_2_4(const Table1Run& run) {
  const MCSummary& s = run.summary;
  const int N = 30;
  double nb_mean_lo = 1e9, nb_mean_hi = -1e9, max_sd = 0.0, zero_mean = 0.0, zero_sd = 0.0;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      if (is_neighbor(i, j, N)) {
        nb_mean_lo = std::min(nb_mean_lo, s.lambda_mean(i, j));
        nb_mean_hi = std::max(nb_mean_hi, s.lambda_mean(i, j));
        max_sd = std::max(max_sd, s.lambda_sd(i, j));
      } else {
        zero_mean = std::max(zero_mean, std::fabs(s.lambda_mean(i, j)));
        zero_sd = std::max(zero_sd, s.lambda_sd(i, j));
      }
    }
  }
  const bool c1 = nb_mean_lo >= 0.28 && nb_mean_hi <= 0.32 && max_sd <= 0.04 &&
                  zero_mean <= 0.02 && zero_sd <= 0.04 && s.failures == 0 &&
                  s.mean_runtime_seconds <= 60.0;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "neighbor means [%.3f, %.3f] (target [0.28, 0.32]), sd<=%.3f, "
                "|zero mean|<=%.3f, zero sd<=%.3f, %.1f s/rep",
                nb_mean_lo, nb_mean_hi, max_sd, zero_mean, zero_sd, s.mean_runtime_seconds);
  report(1, c1, buf);

  const double beta_lo = s.beta_mean.minCoeff();
  const double beta_hi = s.beta_mean.maxCoeff();
  std::snprintf(buf, sizeof(buf), "beta means [%.3f, %.3f] (target [0.87, 0.93], paper 0.90)",
                beta_lo, beta_hi);
  report(2, beta_lo >= 0.87 && beta_hi <= 0.93, buf);

  std::snprintf(buf, sizeof(buf),
                "support error rate %.4f%% of off-diagonal positions (target < 1%%)",
                100.0 * run.support_error_rate);
  report(4, run.support_error_rate < 0.01, buf);
}

void criterion_3(int reps, const MCSummary& long_panel) {
  DgpSpec dgp;
  dgp.N = 30;
  dgp.T = 20;
  const MCSummary s = run_monte_carlo(dgp, harness_config(), reps, kSeed + 1, 0);
  const int N = 30;
  double nb_sum = 0.0, nb2_sum = 0.0;
  int nb_count = 0, nb2_count = 0;
  bool sd_shrinks = true;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      if (is_neighbor(i, j, N)) {
        nb_sum += s.lambda_mean(i, j);
        ++nb_count;
        // the paper's 0.02-vs-0.08 pattern: longer panels are strictly tighter
        if (long_panel.lambda_sd(i, j) >= s.lambda_sd(i, j)) sd_shrinks = false;
      } else if (is_second_neighbor(i, j, N)) {
        nb2_sum += s.lambda_mean(i, j);
        ++nb2_count;
      }
    }
  }
  const double nb = nb_sum / nb_count;
  const double nb2 = nb2_sum / nb2_count;
  const double beta = s.beta_mean.mean();
  const bool pass = nb >= 0.23 && nb <= 0.31 && nb2 >= 0.00 && nb2 <= 0.08 && beta >= 0.60 &&
                    beta <= 0.70 && s.failures == 0 && sd_shrinks;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "T=20: neighbor mean %.3f (target [0.23, 0.31]), second-neighbor %.3f "
                "(target [0.00, 0.08]), beta %.3f (target [0.60, 0.70]), "
                "sd(T=80) < sd(T=20) entrywise: %s",
                nb, nb2, beta, sd_shrinks ? "yes" : "no");
  report(3, pass, buf);
}

void criterion_5(int reps) {
  DgpSpec dgp;
  dgp.model = 2;
  dgp.N = 30;
  dgp.T = 80;
  const SimTruth truth = simulate(dgp, 0).truth;
  const MCSummary s = run_monte_carlo(dgp, harness_config(), reps, kSeed + 2, 0);
  double max_bias = 0.0;
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 30; ++j) {
      if (i == j || truth.lambda(i, j) == 0.0) continue;
      max_bias = std::max(max_bias, std::fabs(s.lambda_mean(i, j) - truth.lambda(i, j)));
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "model-2 nonzero-position |bias| <= %.4f (target <= 0.03), failures %d",
                max_bias, s.failures);
  report(5, max_bias <= 0.03 && s.failures == 0, buf);
}

void criterion_6() {
  // 20 orders x 10 arguments = 200 pairs for both log K and the giG moments
  std::vector<double> orders;
  for (int k = 0; k < 20; ++k) orders.push_back(-300.0 + 600.0 * k / 19.0 + 0.37);
  std::vector<double> args;
  for (int k = 0; k < 10; ++k) args.push_back(std::pow(10.0, -4.0 + 8.0 * k / 9.0));

  double worst_logk = 0.0, worst_gig = 0.0;
  for (double nu : orders) {
    for (double x : args) {
      const double want = oracles::log_bessel_k(nu, x);
      const double got = log_bessel_k(nu, x);
      worst_logk = std::max(worst_logk,
                            std::fabs(got - want) / std::max(1.0, std::fabs(want)));
      const auto gw = oracles::gig_moments(nu, x);
      const auto gg = gig_moments(nu, x);
      worst_gig = std::max(worst_gig, std::fabs(gg.mean - gw.mean) / gw.mean);
      worst_gig = std::max(worst_gig,
                           std::fabs(gg.second_moment - gw.second_moment) / gw.second_moment);
    }
  }

  // half-integer closed forms: ln K_{1/2} and the K_{3/2}/K_{1/2} recurrence
  double worst_half = 0.0;
  for (double x : {1e-6, 1e-3, 0.1, 1.0, 2.5, 10.0, 100.0, 1e3}) {
    const double closed = 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x;
    worst_half = std::max(worst_half, std::fabs(log_bessel_k(0.5, x) - closed) /
                                          std::max(1.0, std::fabs(closed)));
    const double ratio = bessel_k_ratio(1.5, 0.5, x);
    worst_half = std::max(worst_half, std::fabs(ratio - (1.0 + 1.0 / x)) / (1.0 + 1.0 / x));
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "quadrature grid: log K err %.2e, giG err %.2e (target 1e-8); "
                "half-integer err %.2e (target 1e-12)",
                worst_logk, worst_gig, worst_half);
  report(6, worst_logk <= 1e-8 && worst_gig <= 1e-8 && worst_half <= 1e-12, buf);
}

void criterion_7() {
  Rng rng(kSeed + 3);
  const auto random_matrix = [&](Eigen::Index r, Eigen::Index c) {
    MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.normal();
    }
    return m;
  };
  double worst_theta = 0.0, worst_gamma = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    // stage 2: theta against direct least squares
    const Eigen::Index T = 60, k = 8;
    const MatrixXd Z = random_matrix(T, k);
    const VectorXd y = random_matrix(T, 1);
    const auto [theta, cov] = update_theta(y, Z, 1.0, VectorXd::Constant(k, 1e-8));
    const VectorXd ls = Z.colPivHouseholderQr().solve(y);
    worst_theta = std::max(worst_theta, (theta - ls).cwiseAbs().maxCoeff() /
                                            std::max(1.0, ls.cwiseAbs().maxCoeff()));

    // stage 1: gamma against the GLS solution given omega
    const Eigen::Index n = 4, p = 3, Tg = 50;
    const MatrixXd X = random_matrix(Tg, p);
    const MatrixXd Y = random_matrix(Tg, n);
    MatrixXd A = random_matrix(n, n);
    const MatrixXd omega = A * A.transpose() + MatrixXd::Identity(n, n);
    const auto [gamma, gcov] = update_gamma(Y, X, omega, VectorXd::Constant(n * p, 1e-8));
    // GLS with a common design is per-column least squares
    const MatrixXd ols = (X.transpose() * X).ldlt().solve(X.transpose() * Y);
    for (Eigen::Index j = 0; j < n; ++j) {
      worst_gamma = std::max(worst_gamma,
                             (gamma.segment(j * p, p) - ols.col(j)).cwiseAbs().maxCoeff() /
                                 std::max(1.0, ols.col(j).cwiseAbs().maxCoeff()));
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "vague-prior equivalence: stage-2 err %.2e, stage-1 err %.2e (target 1e-6)",
                worst_theta, worst_gamma);
  report(7, worst_theta <= 1e-6 && worst_gamma <= 1e-6, buf);
}

void criterion_8() {
  const int n = 5, p = 2, T = 500;
  // tri-diagonal truth: diagonal 0.5, first off-diagonals 0.2, so the true
  // links sit well above the 0.1 threshold and the nulls well below it
  MatrixXd omega_true = 0.5 * MatrixXd::Identity(n, n);
  for (int i = 0; i + 1 < n; ++i) omega_true(i, i + 1) = omega_true(i + 1, i) = 0.2;
  const MatrixXd sigma_chol = MatrixXd(omega_true.inverse().llt().matrixL());

  int perfect = 0;
  bool all_pd = true;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(kSeed + 100 + static_cast<std::uint64_t>(seed));
    MatrixXd X(T, p), ups(p, n), E(T, n);
    for (int j = 0; j < p; ++j) {
      for (int t = 0; t < T; ++t) X(t, j) = rng.normal();
    }
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < p; ++i) ups(i, j) = rng.normal();
    }
    for (int t = 0; t < T; ++t) {
      VectorXd z(n);
      for (int j = 0; j < n; ++j) z[j] = rng.normal();
      E.row(t) = (sigma_chol * z).transpose();
    }
    const MatrixXd Y = X * ups + E;
    Stage1Config cfg;
    cfg.on_cycle = [&](int, const MatrixXd& om) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(om);
      if (es.eigenvalues().minCoeff() <= 0.0) all_pd = false;
    };
    const Stage1Result r = stage1_fit(Y, X, cfg);
    bool exact = true;
    for (int c = 0; c < n; ++c) {
      for (int rr = 0; rr < c; ++rr) {
        const bool truth_nz = omega_true(rr, c) != 0.0;
        const bool est_nz = std::fabs(r.precision.omega_bar(rr, c)) > 0.1;
        if (truth_nz != est_nz) exact = false;
      }
    }
    if (exact) ++perfect;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "tri-diagonal support exact in %d/20 seeds (target >= 18), PD every cycle: %s",
                perfect, all_pd ? "yes" : "no");
  report(8, perfect >= 18 && all_pd, buf);
}

void criterion_9() {
  Rng rng(kSeed + 4);
  double worst_irf = 0.0, worst_tail = 0.0;
  int built = 0;
  while (built < 10) {
    MatrixXd w1(2, 2), w2(2, 2);
    w1 << 0.0, 0.4 * rng.normal(), 0.4 * rng.normal(), 0.0;
    w2 << 0.0, 0.4 * rng.normal(), 0.4 * rng.normal(), 0.0;
    CouplingCoefficients c;
    c.c12 = VectorXd::Zero(2);
    c.c22 = VectorXd::Zero(2);
    c.c17 = VectorXd::Zero(2);
    c.c27 = VectorXd::Zero(2);
    for (int i = 0; i < 2; ++i) {
      c.c12[i] = 0.3 * rng.normal();
      c.c22[i] = 0.3 * rng.normal();
      c.c17[i] = 0.5 * rng.normal();
      c.c27[i] = 0.5 * rng.normal();
    }
    SarEstimate rate, spread;
    rate.lambda = 0.5 * w1;
    spread.lambda = 0.5 * w2;
    const SimultaneousSystem sys = assemble_system(rate, spread, c);
    if (sys.singular) continue;
    const MatrixXd M = sys.contemporaneous.partialPivLu().solve(sys.lag);
    const double rho = Eigen::EigenSolver<MatrixXd>(M).eigenvalues().cwiseAbs().maxCoeff();
    if (rho > 0.7) continue;
    ++built;

    VectorXd shock(4);
    shock << 1.0, -0.4, 0.2, 0.7;
    const MatrixXd got = impulse_response(sys, shock, 20);
    // explicit-inverse oracle
    const MatrixXd Binv = sys.contemporaneous.fullPivLu().inverse();
    MatrixXd Mh = MatrixXd::Identity(4, 4);
    for (int h = 0; h <= 20; ++h) {
      const VectorXd want = Mh * (Binv * shock);
      worst_irf = std::max(worst_irf, (got.row(h).transpose() - want).cwiseAbs().maxCoeff());
      Mh = (Binv * sys.lag) * Mh;
    }
    const double h60 = cumulative_response(sys, 0, 1, 60);
    const double h120 = cumulative_response(sys, 0, 1, 120);
    worst_tail = std::max(worst_tail, std::fabs(h120 - h60));
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "IRF vs direct inversion err %.2e (target 1e-10); horizon 60 vs 120 "
                "gap %.2e (target 1e-6)",
                worst_irf, worst_tail);
  report(9, worst_irf <= 1e-10 && worst_tail <= 1e-6, buf);
}

void criterion_10(const Table1Run& first, int reps) {
  const Table1Run second = run_table1_study(80, reps);
  const bool same = first.lambda_csv == second.lambda_csv && first.beta_csv == second.beta_csv;
  report(10, same,
         same ? "re-run with the same master seed is byte-identical"
              : "re-run differs from the first run");
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 100;
  int reps_model2 = 50;
  if (argc > 1) {
    reps = std::atoi(argv[1]);  // smoke-test hook
    reps_model2 = std::max(1, reps / 2);
  }

  criterion_6();
  criterion_7();
  criterion_9();
  criterion_8();

  const Table1Run table1 = run_table1_study(80, reps);
  criterion_1_2_4(table1);
  criterion_3(reps, table1.summary);
  criterion_5(reps_model2);
  criterion_10(table1, reps);

  if (g_failures == 0) {
    std::printf("all criteria passed\n");
  } else {
    std::printf("%d criteria failed\n", g_failures);
  }
  return g_failures == 0 ? 0 : 1;
}
