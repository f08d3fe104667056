#pragma once

#include "sarvb/common.hpp"
#include "sarvb/model.hpp"
#include "sarvb/rng.hpp"

#include <Eigen/LU>

#include <chrono>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

namespace sarvb {

// Row-normalized nonnegative adjacency with zero diagonal.
struct WeightMatrix {
  MatrixXd values;
};

// Circular two-neighbor adjacency; every nonzero entry is 1/2.
inline WeightMatrix make_ring_weights(int N) {
  if (N < 3) throw config_error("make_ring_weights: need at least three units");
  MatrixXd W = MatrixXd::Zero(N, N);
  for (int i = 0; i < N; ++i) {
    W(i, (i + 1) % N) = 0.5;
    W(i, (i + N - 1) % N) = 0.5;
  }
  return {std::move(W)};
}

struct SimTruth {
  MatrixXd lambda;
  VectorXd beta;
};

struct SimData {
  PanelData panel;
  SimTruth truth;
};

namespace detail {

inline std::vector<std::string> default_unit_labels(int N) {
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(N));
  char buf[16];
  for (int i = 1; i <= N; ++i) {
    std::snprintf(buf, sizeof(buf), "u%02d", i);
    labels.emplace_back(buf);
  }
  return labels;
}

inline std::vector<std::string> default_time_labels(int T) {
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(T));
  char buf[16];
  for (int t = 1; t <= T; ++t) {
    std::snprintf(buf, sizeof(buf), "t%d", t);
    labels.emplace_back(buf);
  }
  return labels;
}

inline SimData assemble_panel(const MatrixXd& lambda_true, double beta, double noise_scale,
                              int N, int T, std::uint64_t seed,
                              const VectorXd* group_noise = nullptr) {
  MatrixXd B = MatrixXd::Identity(N, N) - lambda_true;
  Eigen::PartialPivLU<MatrixXd> lu(B);
  if (std::fabs(lu.determinant()) < 1e-12) {
    throw config_error("simulate: I - Lambda is singular");
  }
  Rng rng(seed);
  MatrixXd Xm(T, N), Y(T, N);
  VectorXd x(N), u(N);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < N; ++i) x[i] = rng.normal();
    for (int i = 0; i < N; ++i) {
      const double scale = group_noise ? (*group_noise)[i] : noise_scale;
      u[i] = scale * rng.normal();
    }
    const VectorXd y = lu.solve(beta * x + u);
    Xm.row(t) = x.transpose();
    Y.row(t) = y.transpose();
  }
  SimData out;
  out.panel.Y = std::move(Y);
  out.panel.X_blocks.reserve(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) out.panel.X_blocks.push_back(Xm.col(i));
  out.panel.unit_labels = default_unit_labels(N);
  out.panel.time_labels = default_time_labels(T);
  out.truth.lambda = lambda_true;
  out.truth.beta = VectorXd::Constant(N, beta);
  return out;
}

}  // namespace detail

// y_t = (I - lambda W)^{-1} (beta x_t + u_t), x ~ N(0, I), u ~ noise * N(0, I).
inline SimData simulate_model1(int N, int T, double lambda_coef = 0.6, double beta = 0.9,
                               double noise_scale = 0.1, std::uint64_t seed = 0) {
  if (T < 1) throw config_error("simulate_model1: T must be positive");
  const WeightMatrix W = make_ring_weights(N);
  const MatrixXd lambda_true = lambda_coef * W.values;
  return detail::assemble_panel(lambda_true, beta, noise_scale, N, T, seed);
}

struct Model2Params {
  double cross_coupling = 0.5;  // own response to the other group's unit
  double own_spatial = 0.6;     // ring weight inside a group
  double cross_spatial = 0.4;   // ring weight across groups
  double beta = 0.9;
  double noise_scale_1 = 0.1;
  double noise_scale_2 = 0.1;
};

// Two-group simultaneous system: each half has its own ring, with identity
// plus ring coupling across the halves.
inline SimData simulate_model2(int N, int T, const Model2Params& params = {},
                               std::uint64_t seed = 0) {
  if (N % 2 != 0) throw config_error("simulate_model2: N must be even");
  const int h = N / 2;
  if (h < 3) throw config_error("simulate_model2: each group needs at least three units");
  const MatrixXd W1 = make_ring_weights(h).values;
  const MatrixXd W2 = make_ring_weights(h).values;
  MatrixXd A = MatrixXd::Zero(N, N);
  const MatrixXd I = MatrixXd::Identity(h, h);
  A.topLeftCorner(h, h) = params.own_spatial * W1;
  A.topRightCorner(h, h) = params.cross_coupling * I + params.cross_spatial * W2;
  A.bottomLeftCorner(h, h) = params.cross_coupling * I + params.cross_spatial * W1;
  A.bottomRightCorner(h, h) = params.own_spatial * W2;
  VectorXd group_noise(N);
  group_noise.head(h).setConstant(params.noise_scale_1);
  group_noise.tail(h).setConstant(params.noise_scale_2);
  return detail::assemble_panel(A, params.beta, 0.0, N, T, seed, &group_noise);
}

struct DgpSpec {
  int model = 1;
  int N = 30;
  int T = 80;
  double lambda_coef = 0.6;
  double beta_coef = 0.9;
  double noise_scale = 0.1;
  Model2Params model2;
};

inline SimData simulate(const DgpSpec& dgp, std::uint64_t seed) {
  if (dgp.model == 1) {
    return simulate_model1(dgp.N, dgp.T, dgp.lambda_coef, dgp.beta_coef, dgp.noise_scale, seed);
  }
  if (dgp.model == 2) return simulate_model2(dgp.N, dgp.T, dgp.model2, seed);
  throw config_error("simulate: unknown model " + std::to_string(dgp.model));
}

// Entrywise empirical means and standard deviations of the estimates across
// replications, plus failure accounting.
struct MCSummary {
  MatrixXd lambda_mean, lambda_sd;
  VectorXd beta_mean, beta_sd;
  int replications = 0;
  int failures = 0;
  int non_converged = 0;
  double mean_runtime_seconds = 0.0;
};

using ReplicationObserver =
    std::function<void(int replication, const SarEstimate&, const SimTruth&)>;

// Runs `replications` independent simulate/estimate pairs on stream seeds
// seed + r. Replications run on a worker pool; moments accumulate in
// replication order so results do not depend on the pool width.
inline MCSummary run_monte_carlo(const DgpSpec& dgp, const EstimatorConfig& config,
                                 int replications, std::uint64_t seed, unsigned threads = 0,
                                 const ReplicationObserver& observer = {}) {
  if (replications < 1) throw config_error("run_monte_carlo: need at least one replication");
  struct RepResult {
    MatrixXd lambda;
    VectorXd beta;
    bool failed = false;
    bool converged = true;
    double seconds = 0.0;
    SarEstimate estimate;
    SimTruth truth;
  };
  std::vector<RepResult> reps(static_cast<std::size_t>(replications));

  // estimator-internal pools are disabled; parallelism lives across reps
  EstimatorConfig rep_config = config;
  rep_config.threads = 1;

  parallel_for(static_cast<std::size_t>(replications), threads, [&](std::size_t r) {
    RepResult& res = reps[r];
    const auto start = std::chrono::steady_clock::now();
    try {
      SimData sim = simulate(dgp, seed + static_cast<std::uint64_t>(r));
      SarEstimate est = estimate_sar(sim.panel, rep_config);
      if (!est.lambda.allFinite() || !est.beta_tilde.allFinite()) {
        res.failed = true;
      } else {
        res.lambda = est.lambda;
        res.beta = est.beta_tilde;
        res.converged = est.all_converged();
        res.estimate = std::move(est);
        res.truth = std::move(sim.truth);
      }
    } catch (const std::exception&) {
      res.failed = true;
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });

  MCSummary out;
  out.replications = replications;
  int used = 0;
  double total_seconds = 0.0;
  MatrixXd lam_sum, lam_sumsq;
  VectorXd beta_sum, beta_sumsq;
  for (int r = 0; r < replications; ++r) {
    const RepResult& res = reps[static_cast<std::size_t>(r)];
    total_seconds += res.seconds;
    if (res.failed) {
      ++out.failures;
      continue;
    }
    if (!res.converged) ++out.non_converged;
    if (used == 0) {
      lam_sum = MatrixXd::Zero(res.lambda.rows(), res.lambda.cols());
      lam_sumsq = lam_sum;
      beta_sum = VectorXd::Zero(res.beta.size());
      beta_sumsq = beta_sum;
    }
    lam_sum += res.lambda;
    lam_sumsq += res.lambda.cwiseProduct(res.lambda);
    beta_sum += res.beta;
    beta_sumsq += res.beta.cwiseProduct(res.beta);
    if (observer) observer(r, res.estimate, res.truth);
    ++used;
  }
  if (used == 0) throw numerical_error("run_monte_carlo: all replications failed");
  const double n = static_cast<double>(used);
  out.lambda_mean = lam_sum / n;
  out.beta_mean = beta_sum / n;
  if (used > 1) {
    out.lambda_sd = ((lam_sumsq - n * out.lambda_mean.cwiseProduct(out.lambda_mean)) /
                     (n - 1.0)).cwiseMax(0.0).cwiseSqrt();
    out.beta_sd = ((beta_sumsq - n * out.beta_mean.cwiseProduct(out.beta_mean)) / (n - 1.0))
                      .cwiseMax(0.0).cwiseSqrt();
  } else {
    out.lambda_sd = MatrixXd::Zero(out.lambda_mean.rows(), out.lambda_mean.cols());
    out.beta_sd = VectorXd::Zero(out.beta_mean.size());
  }
  out.mean_runtime_seconds = total_seconds / static_cast<double>(replications);
  return out;
}

// Table-style report of the four corner blocks of lambda and the first/last
// entries of beta, each cell printed as "mean (sd)".
inline std::string corner_report(const MCSummary& summary, int corner_size = 5) {
  const Eigen::Index N = summary.lambda_mean.rows();
  if (corner_size < 1 || 2 * corner_size > N) {
    throw config_error("corner_report: corner size must fit twice into N");
  }
  const Eigen::Index c = corner_size;
  std::string text;
  char buf[64];
  const auto cell = [&](double mean, double sd) {
    std::snprintf(buf, sizeof(buf), "%6.2f (%4.2f)", mean, sd);
    text += buf;
  };
  std::snprintf(buf, sizeof(buf), "replications: %d  failures: %d\n", summary.replications,
                summary.failures);
  text += buf;
  text += "lambda corner blocks, mean (sd):\n";
  const auto block_rows = [&](Eigen::Index row0) {
    for (Eigen::Index r = row0; r < row0 + c; ++r) {
      for (Eigen::Index col = 0; col < c; ++col) cell(summary.lambda_mean(r, col),
                                                      summary.lambda_sd(r, col));
      text += "  |";
      for (Eigen::Index col = N - c; col < N; ++col) cell(summary.lambda_mean(r, col),
                                                          summary.lambda_sd(r, col));
      text += '\n';
    }
  };
  block_rows(0);
  text += "  ...\n";
  block_rows(N - c);
  text += "beta, first and last entries, mean (sd):\n";
  const Eigen::Index p = summary.beta_mean.size();
  const Eigen::Index bc = std::min<Eigen::Index>(c, p);
  for (Eigen::Index j = 0; j < bc; ++j) cell(summary.beta_mean[j], summary.beta_sd[j]);
  if (p > 2 * bc) text += "  ...";
  for (Eigen::Index j = p - bc; j < p; ++j) cell(summary.beta_mean[j], summary.beta_sd[j]);
  text += '\n';
  return text;
}

}  // namespace sarvb
