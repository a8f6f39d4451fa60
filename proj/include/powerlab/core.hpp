#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace powerlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown when a normalization step meets a vector whose norm has underflowed.
class AnnihilatedVector : public std::runtime_error {
 public:
  explicit AnnihilatedVector(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr double kMinNorm = 1e-300;
inline constexpr double kSymmetryTol = 1e-12;

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

inline void require_same_dim(Eigen::Index a, Eigen::Index b, const char* where) {
  if (a != b) {
    throw std::invalid_argument(std::string(where) + ": dimension mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

/// Normalizes in place and returns the norm it divided by.
inline double normalize_in_place(Vector& v) {
  const double norm = v.norm();
  if (!(norm >= kMinNorm)) {
    throw AnnihilatedVector("vector annihilated during normalization (norm " + std::to_string(norm) +
                            ")");
  }
  v /= norm;
  return norm;
}

}  // namespace detail

/// Dense symmetric operand. Symmetry is checked once at construction.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;

  explicit SymmetricMatrix(Matrix entries) : a_(std::move(entries)) {
    detail::require(a_.rows() == a_.cols(), "SymmetricMatrix: matrix must be square");
    detail::require(a_.rows() >= 1, "SymmetricMatrix: dimension must be positive");
    for (Eigen::Index j = 0; j < a_.cols(); ++j) {
      for (Eigen::Index i = j + 1; i < a_.rows(); ++i) {
        const double scale = std::max({1.0, std::abs(a_(i, j)), std::abs(a_(j, i))});
        if (!(std::abs(a_(i, j) - a_(j, i)) <= kSymmetryTol * scale)) {
          throw std::invalid_argument("SymmetricMatrix: entries (" + std::to_string(i) + "," +
                                      std::to_string(j) + ") break symmetry");
        }
      }
    }
  }

  /// Averages the input with its transpose before the symmetry check.
  static SymmetricMatrix symmetrized(const Matrix& m) {
    detail::require(m.rows() == m.cols(), "SymmetricMatrix: matrix must be square");
    return SymmetricMatrix(Matrix(0.5 * (m + m.transpose())));
  }

  static SymmetricMatrix identity(int d) { return SymmetricMatrix(Matrix::Identity(d, d)); }

  static SymmetricMatrix diagonal(const Vector& values) {
    return SymmetricMatrix(Matrix(values.asDiagonal()));
  }

  int dim() const { return static_cast<int>(a_.rows()); }
  const Matrix& matrix() const { return a_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return a_(i, j); }

  Vector apply(const Vector& x) const {
    detail::require_same_dim(a_.cols(), x.size(), "SymmetricMatrix::apply");
    return a_ * x;
  }

 private:
  Matrix a_;
};

/// A vector of unit 2-norm. Construction normalizes.
class UnitVector {
 public:
  UnitVector() = default;

  explicit UnitVector(Vector v) : v_(std::move(v)) {
    detail::require(v_.size() >= 1, "UnitVector: dimension must be positive");
    detail::normalize_in_place(v_);
  }

  static UnitVector basis(int d, int i) {
    detail::require(i >= 0 && i < d, "UnitVector::basis: index out of range");
    return UnitVector(Vector::Unit(d, i));
  }

  int dim() const { return static_cast<int>(v_.size()); }
  const Vector& vector() const { return v_; }
  double operator[](Eigen::Index i) const { return v_(i); }
  UnitVector operator-() const {
    UnitVector out;
    out.v_ = -v_;
    return out;
  }

 private:
  Vector v_;
};

struct EigenEstimate {
  UnitVector vector;
  double value = 0.0;
};

/// Ordered eigenvalue list, largest first.
struct Spectrum {
  std::vector<double> values;

  int dim() const { return static_cast<int>(values.size()); }
  double operator[](std::size_t i) const { return values.at(i); }

  Vector as_vector() const {
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  }

  bool is_descending() const {
    return std::is_sorted(values.begin(), values.end(), std::greater<>());
  }

  /// Throws unless the values are descending and nonnegative.
  void validate() const {
    detail::require(!values.empty(), "Spectrum: empty");
    detail::require(is_descending(), "Spectrum: values must be in descending order");
    detail::require(values.back() >= 0.0, "Spectrum: values must be nonnegative");
  }

  /// Additionally requires 1 >= l1 > l2 > l3, needed by the deflation-based solvers.
  void validate_strict_gaps() const {
    validate();
    detail::require(values.size() >= 3, "Spectrum: need at least three values");
    detail::require(values[0] <= 1.0, "Spectrum: leading value must be at most 1");
    detail::require(values[0] > values[1] && values[1] > values[2],
                    "Spectrum: need strict gaps l1 > l2 > l3");
  }

  double gap12() const { return values.at(0) - values.at(1); }
  double gap23() const { return values.at(1) - values.at(2); }
};

struct StopRule {
  enum class Kind { iterate_distance, rayleigh_distance, sine_squared, max_iterations };

  Kind kind = Kind::iterate_distance;
  double threshold = 1e-9;
  int max_iter = 100000;
  Vector reference;  // used by sine_squared only

  static StopRule iterate(double eps, int max_iter = 100000) {
    return make(Kind::iterate_distance, eps, max_iter);
  }
  static StopRule rayleigh(double eps, int max_iter = 100000) {
    return make(Kind::rayleigh_distance, eps, max_iter);
  }
  static StopRule sine_squared(const UnitVector& reference, double eps, int max_iter = 100000) {
    StopRule rule = make(Kind::sine_squared, eps, max_iter);
    rule.reference = reference.vector();
    return rule;
  }
  static StopRule iterations(int count) { return make(Kind::max_iterations, 1.0, count); }

  void validate() const {
    detail::require(threshold > 0.0, "StopRule: threshold must be positive");
    detail::require(max_iter >= 1, "StopRule: max_iter must be at least 1");
    if (kind == Kind::sine_squared) {
      detail::require(reference.size() > 0, "StopRule: sine-squared rule needs a reference vector");
    }
  }

  /// The quantity compared against the threshold for one step.
  double distance(const Vector& q, const Vector& q_prev, double nu, double nu_prev) const {
    switch (kind) {
      case Kind::iterate_distance:
        return (q - q_prev).norm();
      case Kind::rayleigh_distance:
        return std::abs(nu - nu_prev);
      case Kind::sine_squared: {
        const double c = q.dot(reference);
        return std::max(0.0, 1.0 - c * c);
      }
      case Kind::max_iterations:
        return std::numeric_limits<double>::infinity();
    }
    return std::numeric_limits<double>::infinity();
  }

 private:
  static StopRule make(Kind kind, double threshold, int max_iter) {
    StopRule rule;
    rule.kind = kind;
    rule.threshold = threshold;
    rule.max_iter = max_iter;
    rule.validate();
    return rule;
  }
};

struct TrajectoryPoint {
  int iteration = 0;
  double value = 0.0;
};

struct SolveReport {
  int iterations_total = 0;
  int iterations_pre_momentum = 0;
  int iterations_momentum = 0;
  EigenEstimate estimate;
  std::optional<double> lambda2_estimate;
  std::optional<double> beta_used;
  std::vector<TrajectoryPoint> trajectory;
  bool converged = false;
  long long samples_consumed = 0;
};

enum class Phase { single, pre_momentum, momentum };

/// Snapshot handed to an observer after every iteration. The w/mu fields are
/// only meaningful during a pre-momentum phase.
struct IterateEvent {
  Phase phase = Phase::single;
  int iteration = 0;
  const Vector* q = nullptr;
  double nu = 0.0;
  const Vector* w = nullptr;
  double mu = 0.0;
};

using Observer = std::function<void(const IterateEvent&)>;

struct SolveOptions {
  Observer observer;
  bool record_trajectory = false;  // stores the stop-rule distance per iteration
};

inline double rayleigh_quotient(const SymmetricMatrix& a, const Vector& q) {
  detail::require_same_dim(a.dim(), q.size(), "rayleigh_quotient");
  return q.dot(a.matrix() * q);
}

inline double rayleigh_quotient(const SymmetricMatrix& a, const UnitVector& q) {
  return rayleigh_quotient(a, q.vector());
}

inline double sin2_error(const Vector& q, const Vector& v) {
  detail::require_same_dim(q.size(), v.size(), "sin2_error");
  const double c = q.dot(v);
  return std::clamp(1.0 - c * c, 0.0, 1.0);
}

inline double sin2_error(const UnitVector& q, const UnitVector& v) {
  return sin2_error(q.vector(), v.vector());
}

struct EigenDecomposition {
  Spectrum spectrum;
  Matrix vectors;  // column i pairs with spectrum.values[i]

  UnitVector vector(int i) const { return UnitVector(Vector(vectors.col(i))); }
};

/// Cyclic Jacobi eigendecomposition. Independent of every iterative solver in
/// this library; used as ground truth.
inline EigenDecomposition oracle_eigh(const SymmetricMatrix& a, double off_tol = 1e-13,
                                      int max_sweeps = 100) {
  const int n = a.dim();
  Matrix m = a.matrix();
  Matrix v = Matrix::Identity(n, n);
  const double scale = std::max(1.0, m.norm());

  auto off_norm = [&] {
    double s = 0.0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if (i != j) s += m(i, j) * m(i, j);
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < max_sweeps && off_norm() > off_tol * scale; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (apq == 0.0) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double mkp = m(k, p);
          const double mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (int k = 0; k < n; ++k) {
          const double mpk = m(p, k);
          const double mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return m(i, i) > m(j, j); });

  EigenDecomposition out;
  out.spectrum.values.resize(n);
  out.vectors.resize(n, n);
  for (int k = 0; k < n; ++k) {
    out.spectrum.values[k] = m(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

/// Spectral norm of l1*v1*v1^T - nu*q*q^T, evaluated on the plane spanned by v1 and q.
inline double perturbation_norm(double lambda1, const Vector& v1, double nu, const Vector& q) {
  detail::require_same_dim(v1.size(), q.size(), "perturbation_norm");
  const double c = v1.dot(q);
  const double s = (q - c * v1).norm();
  const double a = lambda1 - nu * c * c;
  const double b = -nu * c * s;
  const double d = -nu * s * s;
  const double mean = 0.5 * (a + d);
  const double radius = std::hypot(0.5 * (a - d), b);
  return std::max(std::abs(mean + radius), std::abs(mean - radius));
}

inline double perturbation_norm(const SymmetricMatrix& a, double nu, const UnitVector& q) {
  detail::require_same_dim(a.dim(), q.dim(), "perturbation_norm");
  const EigenDecomposition eig = oracle_eigh(a);
  return perturbation_norm(eig.spectrum[0], eig.vectors.col(0), nu, q.vector());
}

/// Noise-magnitude conditions under which a noisy power iteration keeps converging.
inline bool hardt_price_check(double g_norm, double g_proj_norm, double gap, double eps, double tau,
                              int d) {
  detail::require(gap > 0.0, "hardt_price_check: gap must be positive");
  detail::require(eps > 0.0 && eps < 0.5, "hardt_price_check: eps must lie in (0, 1/2)");
  detail::require(tau > 1.0, "hardt_price_check: tau must exceed 1");
  detail::require(d >= 1, "hardt_price_check: d must be positive");
  return 5.0 * g_norm <= eps * gap && 5.0 * g_proj_norm <= gap / (tau * std::sqrt(double(d)));
}

}  // namespace powerlab
