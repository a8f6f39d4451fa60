#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "core.hpp"
#include "rng.hpp"
#include "solvers.hpp"

namespace powerlab {

/// Raised when a finite sample source runs dry in one-pass mode. Solvers attach
/// the report accumulated so far.
class StreamExhausted : public std::runtime_error {
 public:
  explicit StreamExhausted(const std::string& what) : std::runtime_error(what) {}
  StreamExhausted(const std::string& what, SolveReport partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}

  const std::optional<SolveReport>& partial_report() const { return partial_; }

 private:
  std::optional<SolveReport> partial_;
};

enum class EpochPolicy { reshuffle, one_pass };

/// Seeded source of sample vectors. Three kinds:
///  - a finite data matrix, visited in a shuffled order without replacement
///    within each epoch;
///  - a Gaussian sampler N(0, A);
///  - a zero-variance source whose batch estimate is always exactly A.
class SampleStream {
 public:
  static SampleStream from_matrix(Matrix x, std::uint64_t seed, EpochPolicy policy = EpochPolicy::reshuffle) {
    detail::require(x.rows() >= 1 && x.cols() >= 1, "SampleStream: empty data matrix");
    MatrixSource src{std::move(x), policy, std::mt19937_64(splitmix64(seed)), {}, 0};
    src.order.resize(src.x.rows());
    std::iota(src.order.begin(), src.order.end(), Eigen::Index{0});
    std::shuffle(src.order.begin(), src.order.end(), src.engine);
    return SampleStream(std::move(src));
  }

  static SampleStream gaussian(const SymmetricMatrix& covariance, std::uint64_t seed) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance.matrix());
    const Vector roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    GaussianSource src{covariance, eig.eigenvectors() * roots.asDiagonal(), Rng(seed)};
    return SampleStream(std::move(src));
  }

  static SampleStream constant(const SymmetricMatrix& a) { return SampleStream(ConstantSource{a}); }

  int dim() const {
    return std::visit(
        [](const auto& s) -> int {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, MatrixSource>) return static_cast<int>(s.x.cols());
          else return s.a.dim();
        },
        source_);
  }

  long long consumed() const { return consumed_; }

  /// Population covariance when the source knows it.
  std::optional<SymmetricMatrix> covariance() const {
    if (const auto* g = std::get_if<GaussianSource>(&source_)) return g->a;
    if (const auto* c = std::get_if<ConstantSource>(&source_)) return c->a;
    return std::nullopt;
  }

  /// Next n samples as rows of an n x d matrix.
  Matrix next_samples(int n) {
    detail::require(n >= 1, "SampleStream: batch size must be positive");
    Matrix out(n, dim());
    if (auto* m = std::get_if<MatrixSource>(&source_)) {
      for (int i = 0; i < n; ++i) {
        if (m->cursor == static_cast<Eigen::Index>(m->order.size())) {
          if (m->policy == EpochPolicy::one_pass) throw StreamExhausted("sample stream exhausted");
          std::shuffle(m->order.begin(), m->order.end(), m->engine);
          m->cursor = 0;
        }
        out.row(i) = m->x.row(m->order[m->cursor++]);
      }
    } else if (auto* g = std::get_if<GaussianSource>(&source_)) {
      for (int i = 0; i < n; ++i) out.row(i) = (g->factor * g->rng.normal_vector(dim())).transpose();
    } else {
      throw std::logic_error("SampleStream: a zero-variance source has no individual samples");
    }
    consumed_ += n;
    return out;
  }

  /// (1/n) sum of x x^T over the next n samples.
  SymmetricMatrix batch_estimate(int n) {
    detail::require(n >= 1, "SampleStream: batch size must be positive");
    if (const auto* c = std::get_if<ConstantSource>(&source_)) {
      consumed_ += n;
      return c->a;
    }
    if (auto* m = std::get_if<MatrixSource>(&source_);
        m && m->policy == EpochPolicy::one_pass &&
        m->cursor + n > static_cast<Eigen::Index>(m->order.size())) {
      throw StreamExhausted("sample stream exhausted");
    }
    const Matrix x = next_samples(n);
    return SymmetricMatrix::symmetrized(x.transpose() * x / double(n));
  }

 private:
  struct MatrixSource {
    Matrix x;
    EpochPolicy policy;
    std::mt19937_64 engine;
    std::vector<Eigen::Index> order;
    Eigen::Index cursor;
  };
  struct GaussianSource {
    SymmetricMatrix a;
    Matrix factor;  // factor * factor^T = a
    Rng rng;
  };
  struct ConstantSource {
    SymmetricMatrix a;
  };

  template <class S>
  explicit SampleStream(S source) : source_(std::move(source)) {}

  std::variant<MatrixSource, GaussianSource, ConstantSource> source_;
  long long consumed_ = 0;
};

/// Centers columns and divides everything by (global std) * sqrt(d).
inline Matrix standardize(const Matrix& x) {
  detail::require(x.rows() >= 2, "standardize: need at least two samples");
  Matrix centered = x.rowwise() - x.colwise().mean();
  const double sd = std::sqrt(centered.squaredNorm() / double(centered.size()));
  detail::require(sd > 0.0, "standardize: constant data");
  return centered / (sd * std::sqrt(double(x.cols())));
}

enum class OjaTimeIndex { samples, rounds };

struct StreamConfig {
  int batch_size = 500;
  int rounds = 50;          // total round budget, both phases included
  int max_pre_rounds = 0;   // cap on the pre-momentum phase; 0 means `rounds`
  double rho = 0.1;
  std::optional<double> beta;
  double oja_c = 27.0;
  OjaTimeIndex oja_index = OjaTimeIndex::samples;
  std::function<double(long long)> eta_schedule;  // overrides oja_c when set
  std::optional<double> eps;                      // optional iterate-distance exit
  MomentumScaling scaling = MomentumScaling::consistent;

  void validate() const {
    detail::require(batch_size >= 1, "StreamConfig: batch size must be positive");
    detail::require(rounds >= 1, "StreamConfig: rounds must be positive");
    detail::require(max_pre_rounds >= 0, "StreamConfig: max_pre_rounds must be nonnegative");
    detail::require(rho > 0.0, "StreamConfig: rho must be positive");
    if (eps) detail::require(*eps > 0.0, "StreamConfig: eps must be positive");
  }

  double eta(long long round, long long samples) const {
    const long long t = oja_index == OjaTimeIndex::samples ? samples : round;
    if (eta_schedule) return eta_schedule(t);
    return oja_c / double(t);
  }
};

namespace detail {

inline void check_stream(const SampleStream& stream, const UnitVector& v, const char* where) {
  require_same_dim(stream.dim(), v.dim(), where);
}

inline bool early_exit(const StreamConfig& cfg, const Vector& q, const Vector& q_prev) {
  return cfg.eps && (q - q_prev).norm() <= *cfg.eps;
}

template <class Body>
void run_rounds(SolveReport& report, const SampleStream& stream, Body&& body) {
  const long long start = stream.consumed();
  try {
    body();
  } catch (const StreamExhausted& e) {
    report.samples_consumed = stream.consumed() - start;
    throw StreamExhausted(e.what(), report);
  }
  report.samples_consumed = stream.consumed() - start;
}

}  // namespace detail

/// Per round: fresh batch estimate, q = normalize(Ahat q), nu = q^T Ahat q.
inline SolveReport stochastic_power(SampleStream& stream, const UnitVector& q0, const StreamConfig& cfg,
                                    const SolveOptions& opts = {}) {
  detail::check_stream(stream, q0, "stochastic_power");
  cfg.validate();
  SolveReport report;
  Vector q = q0.vector();
  double nu = 0.0;
  detail::run_rounds(report, stream, [&] {
    for (int t = 1; t <= cfg.rounds; ++t) {
      const SymmetricMatrix a = stream.batch_estimate(cfg.batch_size);
      Vector q_new = a.matrix() * q;
      detail::normalize_in_place(q_new);
      nu = q_new.dot(a.matrix() * q_new);
      const bool done = detail::early_exit(cfg, q_new, q);
      q = std::move(q_new);
      report.iterations_total = report.iterations_momentum = t;
      report.estimate = EigenEstimate{UnitVector(q), nu};
      detail::notify(opts, Phase::single, t, q, nu);
      if (done) {
        report.converged = true;
        return;
      }
    }
    report.converged = !cfg.eps;
  });
  return report;
}

namespace detail {

inline void stream_momentum_rounds(SampleStream& stream, Vector& q, double& nu, double beta, int rounds,
                                   const StreamConfig& cfg, const SolveOptions& opts, Phase phase,
                                   int iteration_offset, SolveReport& report, bool& converged) {
  Vector q_prev = Vector::Zero(q.size());
  double last_norm = 1.0;
  converged = !cfg.eps;
  for (int t = 1; t <= rounds; ++t) {
    const SymmetricMatrix a = stream.batch_estimate(cfg.batch_size);
    const double coeff = cfg.scaling == MomentumScaling::consistent ? beta / last_norm : beta;
    Vector z = a.matrix() * q - coeff * q_prev;
    last_norm = normalize_in_place(z);
    nu = z.dot(a.matrix() * z);
    const bool done = early_exit(cfg, z, q);
    q_prev = std::move(q);
    q = std::move(z);
    report.iterations_momentum = t;
    report.iterations_total = iteration_offset + t;
    report.estimate = EigenEstimate{UnitVector(q), nu};
    notify(opts, phase, t, q, nu);
    if (done) {
      converged = true;
      return;
    }
  }
}

}  // namespace detail

/// Momentum recurrence with a fresh batch estimate every round.
inline SolveReport minibatch_power_momentum(SampleStream& stream, const UnitVector& q0, const StreamConfig& cfg,
                                            const SolveOptions& opts = {}) {
  detail::check_stream(stream, q0, "minibatch_power_momentum");
  cfg.validate();
  detail::require(cfg.beta.has_value(), "minibatch_power_momentum: beta is required");
  detail::require(*cfg.beta >= 0.0, "minibatch_power_momentum: beta must be nonnegative");
  SolveReport report;
  report.beta_used = *cfg.beta;
  Vector q = q0.vector();
  double nu = 0.0;
  detail::run_rounds(report, stream, [&] {
    detail::stream_momentum_rounds(stream, q, nu, *cfg.beta, cfg.rounds, cfg, opts, Phase::single, 0, report,
                                   report.converged);
  });
  return report;
}

/// Oja's rule on batch estimates: q = normalize(q + eta_t Ahat q).
inline SolveReport oja(SampleStream& stream, const UnitVector& q0, const StreamConfig& cfg,
                       const SolveOptions& opts = {}) {
  detail::check_stream(stream, q0, "oja");
  cfg.validate();
  SolveReport report;
  Vector q = q0.vector();
  long long samples = 0;
  detail::run_rounds(report, stream, [&] {
    for (int t = 1; t <= cfg.rounds; ++t) {
      const SymmetricMatrix a = stream.batch_estimate(cfg.batch_size);
      samples += cfg.batch_size;
      const double eta = cfg.eta(t, samples);
      Vector q_new = q + eta * (a.matrix() * q);
      detail::normalize_in_place(q_new);
      const double nu = q_new.dot(a.matrix() * q_new);
      const bool done = detail::early_exit(cfg, q_new, q);
      q = std::move(q_new);
      report.iterations_total = report.iterations_momentum = t;
      report.estimate = EigenEstimate{UnitVector(q), nu};
      detail::notify(opts, Phase::single, t, q, nu);
      if (done) {
        report.converged = true;
        return;
      }
    }
    report.converged = !cfg.eps;
  });
  return report;
}

/// Streaming delayed momentum: the deflation-based pre-momentum phase runs on
/// fresh batch estimates until successive second-eigenvalue estimates differ by
/// at most rho, then the remaining round budget runs mini-batch momentum with
/// beta = mu^2 / 4.
inline SolveReport dmstream(SampleStream& stream, const UnitVector& q0, const UnitVector& w0, const StreamConfig& cfg,
                            const SolveOptions& opts = {}) {
  detail::check_stream(stream, q0, "dmstream");
  detail::check_stream(stream, w0, "dmstream");
  cfg.validate();
  SolveReport report;
  Vector q = q0.vector();
  Vector w = w0.vector();
  double mu = 0.0;
  double nu = 0.0;
  const int cap = std::min(cfg.rounds, cfg.max_pre_rounds > 0 ? cfg.max_pre_rounds : cfg.rounds);
  detail::run_rounds(report, stream, [&] {
    int j = 0;
    bool pre_done = false;
    while (j < cap) {
      ++j;
      const SymmetricMatrix a = stream.batch_estimate(cfg.batch_size);
      Vector q_new = a.matrix() * q;
      detail::normalize_in_place(q_new);
      q = std::move(q_new);
      nu = q.dot(a.matrix() * q);
      Vector w_new = detail::deflated_step(a.matrix() * w, w, q, nu);
      const double mu_new = w_new.dot(a.matrix() * w_new);
      const bool exit = j >= 2 && std::abs(mu_new - mu) <= cfg.rho;
      w = std::move(w_new);
      mu = mu_new;
      report.iterations_pre_momentum = report.iterations_total = j;
      report.lambda2_estimate = mu;
      report.estimate = EigenEstimate{UnitVector(q), nu};
      detail::notify(opts, Phase::pre_momentum, j, q, nu, &w, mu);
      if (exit) {
        pre_done = true;
        break;
      }
    }
    const double beta = mu * mu / 4.0;
    report.beta_used = beta;
    bool momentum_converged = false;
    detail::stream_momentum_rounds(stream, q, nu, beta, cfg.rounds - j, cfg, opts, Phase::momentum, j, report,
                                   momentum_converged);
    report.converged = pre_done && momentum_converged;
  });
  return report;
}

/// log10(1 - ||X q|| / ||X v1||) for an n x d data matrix X (rows are samples).
inline double log_error_metric(const Matrix& x, const UnitVector& q, const UnitVector& v1) {
  detail::require_same_dim(x.cols(), q.dim(), "log_error_metric");
  detail::require_same_dim(x.cols(), v1.dim(), "log_error_metric");
  const double top = (x * v1.vector()).norm();
  if (!(top > 0.0)) throw std::invalid_argument("log_error_metric: data has no energy along v1");
  const double gap = 1.0 - (x * q.vector()).norm() / top;
  return std::log10(std::max(gap, 1e-300));
}

/// Monte-Carlo estimate of ||E[(Ahat - A) kron (Ahat - A)]||_2 over independent batches.
/// A is the source's population covariance when known, else the mean of the drawn batches.
inline double empirical_variance_norm(SampleStream& stream, int n, int trials) {
  const int d = stream.dim();
  if (d > 30) {
    throw std::invalid_argument(
        "empirical_variance_norm: d > 30 makes the d^2 x d^2 tensor impractical; the variance shrinks "
        "like 1/batch size, so increase the batch size instead");
  }
  detail::require(n >= 1 && trials >= 1, "empirical_variance_norm: n and trials must be positive");
  std::vector<Matrix> batches;
  batches.reserve(trials);
  for (int t = 0; t < trials; ++t) batches.push_back(stream.batch_estimate(n).matrix());
  Matrix mean;
  if (auto cov = stream.covariance()) {
    mean = cov->matrix();
  } else {
    mean = Matrix::Zero(d, d);
    for (const Matrix& b : batches) mean += b;
    mean /= double(trials);
  }
  const int dd = d * d;
  Matrix tensor = Matrix::Zero(dd, dd);
  for (const Matrix& b : batches) {
    const Matrix e = b - mean;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        if (e(i, j) != 0.0) tensor.block(i * d, j * d, d, d) += e(i, j) * e;
  }
  tensor /= double(trials);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (tensor + tensor.transpose()), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace powerlab
