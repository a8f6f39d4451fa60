#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "bounds.hpp"
#include "core.hpp"
#include "rng.hpp"

namespace powerlab {

/// How the momentum term is scaled after each normalization.
///  - consistent: the previous iterate is rescaled by the last step's norm, so the
///    normalized iterates coincide with the unnormalized two-term recurrence
///    y_k = A y_{k-1} - beta y_{k-2}. This is the recurrence the convergence
///    bound describes and is the default.
///  - literal: q_k = normalize(A q_{k-1} - beta q_{k-2}) with the stored unit q_{k-2}.
enum class MomentumScaling { consistent, literal };

struct MomentumConfig {
  double beta = 0.0;
  MomentumScaling scaling = MomentumScaling::consistent;
};

enum class RhoMode { mu_diff, w_diff, fixed_j };

struct DMPowerConfig {
  double rho = 1e-3;
  RhoMode rho_mode = RhoMode::mu_diff;
  int fixed_j = 0;
  StopRule momentum_stop = StopRule::iterate(1e-9);
  int max_pre_iter = 100000;
  MomentumScaling scaling = MomentumScaling::consistent;

  void validate() const {
    detail::require(rho > 0.0 && rho < 1.0, "DMPowerConfig: rho must lie in (0, 1)");
    detail::require(max_pre_iter >= 1, "DMPowerConfig: max_pre_iter must be positive");
    if (rho_mode == RhoMode::fixed_j) detail::require(fixed_j >= 1, "DMPowerConfig: fixed J must be positive");
    momentum_stop.validate();
  }
};

namespace detail {

inline void notify(const SolveOptions& opts, Phase phase, int iteration, const Vector& q, double nu,
                   const Vector* w = nullptr, double mu = 0.0) {
  if (opts.observer) opts.observer(IterateEvent{phase, iteration, &q, nu, w, mu});
}

inline bool stop_met(const StopRule& stop, double distance) {
  return stop.kind != StopRule::Kind::max_iterations && distance <= stop.threshold;
}

struct MomentumRun {
  Vector q;
  double nu = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Runs the two-term recurrence from q_start with q_{-1} = 0. `aq` holds A*q_start.
inline MomentumRun momentum_iterations(const Matrix& a, Vector q, Vector aq, const MomentumConfig& cfg,
                                       const StopRule& stop, const SolveOptions& opts, Phase phase,
                                       std::vector<TrajectoryPoint>* trajectory) {
  Vector q_prev = Vector::Zero(q.size());
  double nu = q.dot(aq);
  double last_norm = 1.0;
  MomentumRun run;
  for (int k = 1; k <= stop.max_iter; ++k) {
    const double coeff = cfg.scaling == MomentumScaling::consistent ? cfg.beta / last_norm : cfg.beta;
    Vector z = aq - coeff * q_prev;
    last_norm = normalize_in_place(z);
    Vector az = a * z;
    const double nu_new = z.dot(az);
    const double dist = stop.distance(z, q, nu_new, nu);
    q_prev = std::move(q);
    q = std::move(z);
    aq = std::move(az);
    nu = nu_new;
    run.iterations = k;
    if (trajectory) trajectory->push_back({k, dist});
    notify(opts, phase, k, q, nu);
    if (stop_met(stop, dist)) {
      run.converged = true;
      break;
    }
  }
  if (stop.kind == StopRule::Kind::max_iterations) run.converged = true;
  run.q = std::move(q);
  run.nu = nu;
  return run;
}

/// Deflated update for the second vector: normalize((A - nu q q^T) w), given aw = A*w.
inline Vector deflated_step(const Vector& aw, const Vector& w, const Vector& q, double nu) {
  Vector x = aw - (nu * q.dot(w)) * q;
  normalize_in_place(x);
  return x;
}

inline bool pre_phase_exit(const DMPowerConfig& cfg, int j, double mu, double mu_prev, const Vector& w,
                           const Vector& w_prev) {
  switch (cfg.rho_mode) {
    case RhoMode::mu_diff:
      return j >= 2 && std::abs(mu - mu_prev) <= cfg.rho;
    case RhoMode::w_diff:
      return (w - w_prev).norm() <= cfg.rho;
    case RhoMode::fixed_j:
      return j >= cfg.fixed_j;
  }
  return false;
}

inline void check_start(const SymmetricMatrix& a, const UnitVector& v, const char* where) {
  require_same_dim(a.dim(), v.dim(), where);
}

}  // namespace detail

/// Vanilla power iteration q_k = normalize(A q_{k-1}).
inline SolveReport power_method(const SymmetricMatrix& a, const UnitVector& q0, const StopRule& stop,
                                const SolveOptions& opts = {}) {
  detail::check_start(a, q0, "power_method");
  stop.validate();
  const Matrix& m = a.matrix();
  SolveReport report;
  Vector q = q0.vector();
  Vector aq = m * q;
  double nu = q.dot(aq);
  for (int k = 1; k <= stop.max_iter; ++k) {
    Vector q_new = aq;
    detail::normalize_in_place(q_new);
    Vector aq_new = m * q_new;
    const double nu_new = q_new.dot(aq_new);
    const double dist = stop.distance(q_new, q, nu_new, nu);
    q = std::move(q_new);
    aq = std::move(aq_new);
    nu = nu_new;
    report.iterations_total = k;
    if (opts.record_trajectory) report.trajectory.push_back({k, dist});
    detail::notify(opts, Phase::single, k, q, nu);
    if (detail::stop_met(stop, dist)) {
      report.converged = true;
      break;
    }
  }
  if (stop.kind == StopRule::Kind::max_iterations) report.converged = true;
  report.iterations_momentum = report.iterations_total;
  report.estimate = EigenEstimate{UnitVector(q), nu};
  return report;
}

/// Power iteration with heavy-ball momentum, q_{-1} = 0.
inline SolveReport power_momentum(const SymmetricMatrix& a, const UnitVector& q0, const MomentumConfig& cfg,
                                  const StopRule& stop, const SolveOptions& opts = {}) {
  detail::check_start(a, q0, "power_momentum");
  detail::require(cfg.beta >= 0.0, "power_momentum: beta must be nonnegative");
  stop.validate();
  SolveReport report;
  const Vector& q = q0.vector();
  detail::MomentumRun run =
      detail::momentum_iterations(a.matrix(), q, a.matrix() * q, cfg, stop, opts, Phase::single,
                                  opts.record_trajectory ? &report.trajectory : nullptr);
  report.iterations_total = run.iterations;
  report.iterations_momentum = run.iterations;
  report.converged = run.converged;
  report.beta_used = cfg.beta;
  report.estimate = EigenEstimate{UnitVector(run.q), run.nu};
  return report;
}

/// Delayed momentum power method: a pre-momentum phase estimates the second
/// eigenvalue by inexact deflation alongside plain power steps, then momentum
/// with beta = mu^2 / 4 takes over from the current iterate.
inline SolveReport dmpower(const SymmetricMatrix& a, const UnitVector& q0, const UnitVector& w0,
                           const DMPowerConfig& cfg, const SolveOptions& opts = {}) {
  detail::check_start(a, q0, "dmpower");
  detail::check_start(a, w0, "dmpower");
  cfg.validate();
  const Matrix& m = a.matrix();
  SolveReport report;

  Vector q = q0.vector();
  Vector aq = m * q;
  Vector w = w0.vector();
  Vector aw = m * w;
  double mu = 0.0;
  bool pre_done = false;
  const int cap = cfg.rho_mode == RhoMode::fixed_j ? std::min(cfg.fixed_j, cfg.max_pre_iter) : cfg.max_pre_iter;
  int j = 0;
  while (j < cap) {
    ++j;
    detail::normalize_in_place(aq);
    q = std::move(aq);
    aq = m * q;
    const double nu = q.dot(aq);
    Vector w_new = detail::deflated_step(aw, w, q, nu);
    aw = m * w_new;
    const double mu_new = w_new.dot(aw);
    const bool exit = detail::pre_phase_exit(cfg, j, mu_new, mu, w_new, w);
    if (opts.record_trajectory) report.trajectory.push_back({j, std::abs(mu_new - mu)});
    w = std::move(w_new);
    mu = mu_new;
    detail::notify(opts, Phase::pre_momentum, j, q, nu, &w, mu);
    if (exit) {
      pre_done = true;
      break;
    }
  }

  const MomentumConfig momentum{mu * mu / 4.0, cfg.scaling};
  std::vector<TrajectoryPoint> tail;
  detail::MomentumRun run = detail::momentum_iterations(m, q, aq, momentum, cfg.momentum_stop, opts,
                                                        Phase::momentum,
                                                        opts.record_trajectory ? &tail : nullptr);
  for (const TrajectoryPoint& p : tail) report.trajectory.push_back({j + p.iteration, p.value});

  report.iterations_pre_momentum = j;
  report.iterations_momentum = run.iterations;
  report.iterations_total = j + run.iterations;
  report.lambda2_estimate = mu;
  report.beta_used = momentum.beta;
  report.converged = pre_done && run.converged;
  report.estimate = EigenEstimate{UnitVector(run.q), run.nu};
  return report;
}

struct SimultaneousReport {
  std::vector<EigenEstimate> estimates;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

/// Modified Gram-Schmidt in place; throws if a column collapses.
inline void orthonormalize_columns(Matrix& block) {
  for (Eigen::Index j = 0; j < block.cols(); ++j) {
    for (Eigen::Index i = 0; i < j; ++i) block.col(j) -= block.col(i).dot(block.col(j)) * block.col(i);
    Vector col = block.col(j);
    try {
      normalize_in_place(col);
    } catch (const AnnihilatedVector&) {
      throw AnnihilatedVector("simultaneous_iteration: block lost rank at column " + std::to_string(j));
    }
    block.col(j) = col;
  }
}

}  // namespace detail

/// Block power iteration with Gram-Schmidt re-orthonormalization. The stop rule
/// is applied to every column and the largest distance decides.
inline SimultaneousReport simultaneous_iteration(const SymmetricMatrix& a, const Matrix& start_block,
                                                 const StopRule& stop) {
  detail::require_same_dim(a.dim(), start_block.rows(), "simultaneous_iteration");
  detail::require(start_block.cols() >= 1 && start_block.cols() <= a.dim(),
                  "simultaneous_iteration: need 1 <= k <= d");
  stop.validate();
  const Matrix& m = a.matrix();
  const Eigen::Index k = start_block.cols();
  Matrix block = start_block;
  detail::orthonormalize_columns(block);
  Matrix ablock = m * block;
  Vector nu = (block.transpose() * ablock).diagonal();

  SimultaneousReport report;
  for (int it = 1; it <= stop.max_iter; ++it) {
    Matrix next = ablock;
    detail::orthonormalize_columns(next);
    Matrix anext = m * next;
    double dist = 0.0;
    Vector nu_new(k);
    for (Eigen::Index c = 0; c < k; ++c) {
      nu_new(c) = next.col(c).dot(anext.col(c));
      dist = std::max(dist, stop.distance(next.col(c), block.col(c), nu_new(c), nu(c)));
    }
    block = std::move(next);
    ablock = std::move(anext);
    nu = nu_new;
    report.iterations = it;
    if (detail::stop_met(stop, dist)) {
      report.converged = true;
      break;
    }
  }
  if (stop.kind == StopRule::Kind::max_iterations) report.converged = true;
  for (Eigen::Index c = 0; c < k; ++c) report.estimates.push_back({UnitVector(Vector(block.col(c))), nu(c)});
  return report;
}

/// Start block for simultaneous_iteration: `first` as column 0, Gaussian columns after it.
inline Matrix random_start_block(const UnitVector& first, int k, Rng& rng) {
  detail::require(k >= 1 && k <= first.dim(), "random_start_block: need 1 <= k <= d");
  Matrix block(first.dim(), k);
  block.col(0) = first.vector();
  for (int c = 1; c < k; ++c) block.col(c) = rng.normal_vector(first.dim());
  return block;
}

struct LanczosReport {
  EigenEstimate estimate;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  bool breakdown = false;
};

/// m-step Lanczos tridiagonalization; returns the top Ritz pair.
inline LanczosReport lanczos(const SymmetricMatrix& a, const UnitVector& q0, int m,
                             bool full_reorthogonalization = true, double residual_tol = 1e-8) {
  detail::check_start(a, q0, "lanczos");
  detail::require(m >= 1 && m <= a.dim(), "lanczos: need 1 <= m <= d");
  const Matrix& mat = a.matrix();
  const int d = a.dim();
  Matrix basis(d, m);
  std::vector<double> alpha;
  std::vector<double> beta;
  Vector q = q0.vector();
  const double scale = std::max(1.0, mat.lpNorm<Eigen::Infinity>());
  LanczosReport report;
  int steps = 0;
  for (int j = 0; j < m; ++j) {
    basis.col(j) = q;
    Vector z = mat * q;
    alpha.push_back(q.dot(z));
    z -= alpha.back() * q;
    if (j > 0) z -= beta.back() * basis.col(j - 1);
    if (full_reorthogonalization) {
      for (int pass = 0; pass < 2; ++pass) z -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * z);
    }
    steps = j + 1;
    if (j == m - 1) break;
    const double b = z.norm();
    if (b <= 1e-12 * scale) {
      report.breakdown = true;
      break;
    }
    beta.push_back(b);
    q = z / b;
  }

  Matrix t = Matrix::Zero(steps, steps);
  for (int i = 0; i < steps; ++i) {
    t(i, i) = alpha[i];
    if (i + 1 < steps) t(i, i + 1) = t(i + 1, i) = beta[i];
  }
  const EigenDecomposition ritz = oracle_eigh(SymmetricMatrix(t));
  Vector x = basis.leftCols(steps) * ritz.vectors.col(0);
  detail::normalize_in_place(x);
  const double theta = ritz.spectrum[0];
  report.residual = (mat * x - theta * x).norm();
  report.iterations = steps;
  report.converged = report.residual <= residual_tol * std::max(1.0, std::abs(theta));
  report.estimate = EigenEstimate{UnitVector(x), theta};
  return report;
}

}  // namespace powerlab
