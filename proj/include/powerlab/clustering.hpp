#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "rng.hpp"
#include "solvers.hpp"

namespace powerlab {

struct PointSet {
  Matrix points;  // n x 2
  std::optional<std::vector<int>> labels;

  int size() const { return static_cast<int>(points.rows()); }
};

struct Similarity {
  enum class Kind { gaussian, l2_distance };

  Kind kind = Kind::gaussian;
  double sigma = 0.0;           // Gaussian bandwidth; <= 0 selects sigma_fraction * median distance
  double sigma_fraction = 0.11;  // used only when sigma <= 0

  static Similarity gaussian(double sigma) { return {Kind::gaussian, sigma, 0.11}; }
  static Similarity gaussian_median_fraction(double fraction) { return {Kind::gaussian, 0.0, fraction}; }
  static Similarity l2_distance() { return {Kind::l2_distance, 0.0, 0.11}; }
};

inline Matrix pairwise_distances(const Matrix& points) {
  const Eigen::Index n = points.rows();
  Matrix dist(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    dist(j, j) = 0.0;
    for (Eigen::Index i = j + 1; i < n; ++i) dist(i, j) = dist(j, i) = (points.row(i) - points.row(j)).norm();
  }
  return dist;
}

inline double median_pairwise_distance(const Matrix& points) {
  const Eigen::Index n = points.rows();
  detail::require(n >= 2, "median_pairwise_distance: need two points");
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j + 1; i < n; ++i) d.push_back((points.row(i) - points.row(j)).norm());
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (d.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(d.begin(), mid);
  return 0.5 * (lower + upper);
}

/// Symmetric affinity matrix: Gaussian kernel (unit diagonal) or raw pairwise
/// Euclidean distance (zero diagonal).
inline SymmetricMatrix affinity(const PointSet& set, const Similarity& similarity) {
  detail::require(set.size() >= 2, "affinity: need at least two points");
  detail::require(set.points.cols() == 2, "affinity: points must be two-dimensional");
  Matrix a = pairwise_distances(set.points);
  if (similarity.kind == Similarity::Kind::gaussian) {
    double sigma = similarity.sigma;
    if (sigma <= 0.0) {
      detail::require(similarity.sigma_fraction > 0.0, "affinity: sigma fraction must be positive");
      sigma = similarity.sigma_fraction * median_pairwise_distance(set.points);
    }
    detail::require(sigma > 0.0, "affinity: Gaussian bandwidth must be positive");
    a = (-a.array().square() / (2.0 * sigma * sigma)).exp().matrix();
  }
  return SymmetricMatrix(std::move(a));
}

namespace detail {

inline Vector row_sums_checked(const SymmetricMatrix& a) {
  const Vector sums = a.matrix().rowwise().sum();
  for (Eigen::Index i = 0; i < sums.size(); ++i) {
    if (!(sums(i) > 0.0)) {
      throw std::invalid_argument("normalize_affinity: point " + std::to_string(i) + " has zero total affinity");
    }
  }
  return sums;
}

}  // namespace detail

/// Row-stochastic W = D^{-1} A.
inline Matrix normalize_affinity(const SymmetricMatrix& a) {
  const Vector sums = detail::row_sums_checked(a);
  return sums.cwiseInverse().asDiagonal() * a.matrix();
}

/// D^{-1/2} A D^{-1/2}: symmetric and similar to D^{-1} A.
struct NormalizedAffinity {
  SymmetricMatrix matrix;
  Vector inv_sqrt_degree;
};

inline NormalizedAffinity symmetric_normalize(const SymmetricMatrix& a) {
  const Vector scale = detail::row_sums_checked(a).cwiseSqrt().cwiseInverse();
  return {SymmetricMatrix::symmetrized(scale.asDiagonal() * a.matrix() * scale.asDiagonal()), scale};
}

/// W - (W v)(W v)^T / (v^T W v).
inline SymmetricMatrix schur_deflate(const SymmetricMatrix& w, const UnitVector& v) {
  detail::require_same_dim(w.dim(), v.dim(), "schur_deflate");
  const Vector wv = w.matrix() * v.vector();
  const double denom = v.vector().dot(wv);
  if (std::abs(denom) < 1e-14) throw std::invalid_argument("schur_deflate: v^T W v is numerically zero");
  return SymmetricMatrix::symmetrized(w.matrix() - wv * wv.transpose() / denom);
}

struct KMeansResult {
  std::vector<int> labels;
  double inertia = 0.0;
  int rounds = 0;
};

/// Lloyd's algorithm from a k-means++ start. Deterministic for a given seed.
inline KMeansResult kmeans(const Matrix& embedding, int k, std::uint64_t seed, int max_rounds = 300,
                           double tol = 1e-8) {
  const Eigen::Index n = embedding.rows();
  detail::require(k >= 1, "kmeans: k must be positive");
  detail::require(n >= k, "kmeans: need at least k points");
  Rng rng(seed);

  Matrix centers(k, embedding.cols());
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(n, 0);
  Eigen::Index first = static_cast<Eigen::Index>(rng.uniform() * double(n));
  first = std::min(first, n - 1);
  centers.row(0) = embedding.row(first);
  chosen[first] = 1;
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], (embedding.row(i) - centers.row(c - 1)).squaredNorm());
      total += nearest[i];
    }
    Eigen::Index pick = -1;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= nearest[i];
        if (target < 0.0 && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {
        for (Eigen::Index i = n - 1; i >= 0; --i)
          if (nearest[i] > 0.0) {
            pick = i;
            break;
          }
      }
    } else {
      for (Eigen::Index i = 0; i < n; ++i)
        if (!chosen[i]) {
          pick = i;
          break;
        }
    }
    centers.row(c) = embedding.row(pick);
    chosen[pick] = 1;
  }

  KMeansResult result;
  result.labels.assign(n, 0);
  std::vector<double> dist(n, 0.0);
  for (int round = 1; round <= max_rounds; ++round) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d2 = (embedding.row(i) - centers.row(c)).squaredNorm();
        if (d2 < best) {
          best = d2;
          result.labels[i] = c;
        }
      }
      dist[i] = best;
    }
    Matrix next = Matrix::Zero(k, embedding.cols());
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(result.labels[i]) += embedding.row(i);
      ++counts[result.labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        next.row(c) /= double(counts[c]);
        continue;
      }
      // Empty cluster: move it to the point farthest from its current center.
      const auto far = std::max_element(dist.begin(), dist.end()) - dist.begin();
      next.row(c) = embedding.row(far);
      dist[far] = 0.0;
    }
    double movement = 0.0;
    for (int c = 0; c < k; ++c) movement = std::max(movement, (next.row(c) - centers.row(c)).norm());
    centers = std::move(next);
    result.rounds = round;
    if (movement <= tol) break;
  }
  result.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double d2 = (embedding.row(i) - centers.row(c)).squaredNorm();
      if (d2 < best) {
        best = d2;
        result.labels[i] = c;
      }
    }
    result.inertia += best;
  }
  return result;
}

/// Fraction of points labelled correctly under the best relabelling of clusters.
inline double clustering_accuracy(const std::vector<int>& labels, const std::vector<int>& truth) {
  detail::require(labels.size() == truth.size() && !labels.empty(), "clustering_accuracy: size mismatch");
  int k = 0;
  for (int l : labels) k = std::max(k, l + 1);
  for (int t : truth) k = std::max(k, t + 1);
  detail::require(k <= 8, "clustering_accuracy: too many clusters for exhaustive relabelling");
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += perm[labels[i]] == truth[i];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return double(best) / double(labels.size());
}

struct DpicSolver {
  enum class Kind { power, power_momentum, dmpower };

  Kind kind = Kind::dmpower;
  std::optional<double> beta;  // power_momentum; empty selects lambda2^2/4 of the matrix being solved
  double rho = 1e-3;           // dmpower
  RhoMode rho_mode = RhoMode::w_diff;

  static DpicSolver power() { return {Kind::power, std::nullopt, 1e-3, RhoMode::w_diff}; }
  static DpicSolver momentum(std::optional<double> beta = std::nullopt) {
    return {Kind::power_momentum, beta, 1e-3, RhoMode::w_diff};
  }
  static DpicSolver dm(double rho, RhoMode mode = RhoMode::w_diff) { return {Kind::dmpower, std::nullopt, rho, mode}; }
};

struct DpicOptions {
  Similarity similarity;
  int max_iter = 100000;
  MomentumScaling scaling = MomentumScaling::consistent;
};

struct ClusterResult {
  std::vector<int> labels;
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  int solver_iterations = 0;
  bool converged = true;
};

namespace detail {

inline SolveReport dpic_extract(const SymmetricMatrix& s, const DpicSolver& solver, double eps, Rng& rng,
                                const DpicOptions& opts) {
  const UnitVector q0 = random_unit_vector(s.dim(), rng);
  const StopRule stop = StopRule::iterate(eps, opts.max_iter);
  switch (solver.kind) {
    case DpicSolver::Kind::power:
      return power_method(s, q0, stop);
    case DpicSolver::Kind::power_momentum: {
      double beta = 0.0;
      if (solver.beta) {
        beta = *solver.beta;
      } else {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(s.matrix(), Eigen::EigenvaluesOnly);
        const double second = eig.eigenvalues()(s.dim() - 2);
        beta = second * second / 4.0;
      }
      return power_momentum(s, q0, MomentumConfig{beta, opts.scaling}, stop);
    }
    case DpicSolver::Kind::dmpower: {
      const UnitVector w0 = random_unit_vector(s.dim(), rng);
      DMPowerConfig cfg;
      cfg.rho = solver.rho;
      cfg.rho_mode = solver.rho_mode;
      cfg.momentum_stop = stop;
      cfg.max_pre_iter = opts.max_iter;
      cfg.scaling = opts.scaling;
      return dmpower(s, q0, w0, cfg);
    }
  }
  throw std::logic_error("dpic: unknown solver");
}

}  // namespace detail

/// Deflation-based power iteration clustering into two groups: the top two
/// eigenvectors of the normalized affinity (the second after Schur deflation)
/// form the embedding handed to k-means.
inline ClusterResult dpic(const PointSet& set, const DpicSolver& solver, double eps, std::uint64_t seed,
                          const DpicOptions& opts = {}) {
  detail::require(set.size() >= 2, "dpic: need at least two points");
  detail::require(eps > 0.0, "dpic: eps must be positive");
  const NormalizedAffinity norm = symmetric_normalize(affinity(set, opts.similarity));
  Rng rng(derive_seed(seed, {0xd91c}));

  ClusterResult result;
  const SolveReport first = detail::dpic_extract(norm.matrix, solver, eps, rng, opts);
  const SymmetricMatrix deflated = schur_deflate(norm.matrix, first.estimate.vector);
  const SolveReport second = detail::dpic_extract(deflated, solver, eps, rng, opts);
  result.solver_iterations = first.iterations_total + second.iterations_total;
  result.converged = first.converged && second.converged;

  Matrix embedding(set.size(), 2);
  embedding.col(0) = norm.inv_sqrt_degree.cwiseProduct(first.estimate.vector.vector());
  embedding.col(1) = norm.inv_sqrt_degree.cwiseProduct(second.estimate.vector.vector());
  result.labels = kmeans(embedding, 2, derive_seed(seed, {0x4b3a})).labels;
  if (set.labels) result.accuracy = clustering_accuracy(result.labels, *set.labels);
  return result;
}

/// Two concentric noisy circles: label 0 on radius 1, label 1 on radius `factor`.
inline PointSet make_circles(int n, double factor, double noise_sd, std::uint64_t seed) {
  detail::require(n >= 2 && n % 2 == 0, "make_circles: n must be even and at least 2");
  detail::require(factor > 0.0 && factor < 1.0, "make_circles: factor must lie in (0, 1)");
  detail::require(noise_sd >= 0.0, "make_circles: noise must be nonnegative");
  Rng rng(seed);
  PointSet set;
  set.points.resize(n, 2);
  set.labels = std::vector<int>(n);
  for (int i = 0; i < n; ++i) {
    const int label = i < n / 2 ? 0 : 1;
    const double radius = label == 0 ? 1.0 : factor;
    const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
    set.points(i, 0) = radius * std::cos(t) + noise_sd * rng.normal();
    set.points(i, 1) = radius * std::sin(t) + noise_sd * rng.normal();
    (*set.labels)[i] = label;
  }
  return set;
}

/// Two interleaved half circles; the second is flipped and shifted by (1, 0.5).
inline PointSet make_moons(int n, double noise_sd, std::uint64_t seed) {
  detail::require(n >= 2 && n % 2 == 0, "make_moons: n must be even and at least 2");
  detail::require(noise_sd >= 0.0, "make_moons: noise must be nonnegative");
  Rng rng(seed);
  PointSet set;
  set.points.resize(n, 2);
  set.labels = std::vector<int>(n);
  for (int i = 0; i < n; ++i) {
    const int label = i < n / 2 ? 0 : 1;
    const double t = rng.uniform(0.0, std::numbers::pi);
    const double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
    const double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
    set.points(i, 0) = x + noise_sd * rng.normal();
    set.points(i, 1) = y + noise_sd * rng.normal();
    (*set.labels)[i] = label;
  }
  return set;
}

}  // namespace powerlab
