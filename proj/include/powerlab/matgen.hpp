#pragma once

#include <cstdint>
#include <locale>
#include <sstream>
#include <string>

#include "core.hpp"
#include "rng.hpp"

namespace powerlab {

/// Covariance instance with a prescribed spectrum. The eigenvectors are known
/// from the construction: column i of `eigenvectors` pairs with spectrum[i].
struct GeneratedInstance {
  Matrix data;  // n x d, covariance = data^T data / n
  SymmetricMatrix covariance;
  Spectrum spectrum;
  Matrix eigenvectors;
  std::uint64_t seed = 0;

  int dim() const { return covariance.dim(); }
  UnitVector top_vector() const { return UnitVector(Vector(eigenvectors.col(0))); }
};

/// Haar-distributed matrix with orthonormal columns (QR of a Gaussian matrix,
/// with the signs of R's diagonal folded into Q).
inline Matrix haar_orthogonal(int rows, int cols, Rng& rng) {
  detail::require(cols >= 1, "haar_orthogonal: cols must be positive");
  detail::require(rows >= cols, "haar_orthogonal: rows must be at least cols");
  const Matrix g = rng.normal_matrix(rows, cols);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  const Matrix& r = qr.matrixQR();
  for (int j = 0; j < cols; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

inline Matrix haar_orthogonal(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  return haar_orthogonal(rows, cols, rng);
}

/// X = sqrt(n) U diag(sqrt(l)) V^T, so that X^T X / n = V diag(l) V^T exactly.
inline GeneratedInstance synth_covariance(const Spectrum& spectrum, int n_samples, std::uint64_t seed) {
  spectrum.validate();
  const int d = spectrum.dim();
  detail::require(n_samples >= d, "synth_covariance: n_samples must be at least d");
  Rng rng(seed);
  const Matrix u = haar_orthogonal(n_samples, d, rng);
  const Matrix v = haar_orthogonal(d, d, rng);
  const Vector sigma = spectrum.as_vector().cwiseSqrt();

  GeneratedInstance out;
  out.data = std::sqrt(double(n_samples)) * u * sigma.asDiagonal() * v.transpose();
  out.covariance =
      SymmetricMatrix::symmetrized(out.data.transpose() * out.data / double(n_samples));
  out.spectrum = spectrum;
  out.eigenvectors = v;
  out.seed = seed;
  return out;
}

/// (top, top - gap, top - 2 gap, ..., top - 2 gap): the two leading gaps equal `gap`
/// and the rest of the spectrum is flat.
inline Spectrum stepped_spectrum(int d, double gap, double top = 1.0) {
  detail::require(d >= 3, "stepped_spectrum: d must be at least 3");
  detail::require(gap > 0.0 && top - 2.0 * gap >= 0.0, "stepped_spectrum: invalid gap");
  Spectrum s;
  s.values.assign(d, top - 2.0 * gap);
  s.values[0] = top;
  s.values[1] = top - gap;
  return s;
}

/// Leading gaps of 0.1 followed by a linearly decaying tail from `tail_top`
/// down to `tail_bottom`; a stand-in for real data whose spectrum falls off.
inline Spectrum decaying_spectrum(int d, double gap = 0.1, double tail_top = 0.7,
                                  double tail_bottom = 0.05) {
  detail::require(d >= 4, "decaying_spectrum: d must be at least 4");
  Spectrum s;
  s.values = {1.0, 1.0 - gap, 1.0 - 2.0 * gap};
  const int tail = d - 3;
  for (int i = 0; i < tail; ++i) {
    const double t = tail == 1 ? 0.0 : double(i) / double(tail - 1);
    s.values.push_back(tail_top + t * (tail_bottom - tail_top));
  }
  s.validate();
  return s;
}

inline Spectrum scaled_to_unit_trace(Spectrum s) {
  double total = 0.0;
  for (double v : s.values) total += v;
  detail::require(total > 0.0, "scaled_to_unit_trace: zero spectrum");
  for (double& v : s.values) v /= total;
  return s;
}

/// Parses a spectrum description:
///   step:<d>:<gap>          stepped_spectrum
///   decay:<d>               decaying_spectrum
///   list:<v1>,<v2>,...      explicit values
/// A trailing ":unit-trace" rescales to unit trace.
inline Spectrum parse_spectrum(const std::string& text) {
  std::string body = text;
  bool unit_trace = false;
  const std::string suffix = ":unit-trace";
  if (body.size() > suffix.size() && body.compare(body.size() - suffix.size(), suffix.size(), suffix) == 0) {
    unit_trace = true;
    body.resize(body.size() - suffix.size());
  }
  std::vector<std::string> parts;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  auto number = [&](const std::string& s) {
    std::istringstream in(s);
    in.imbue(std::locale::classic());
    double x = 0.0;
    if (!(in >> x) || !in.eof()) throw std::invalid_argument("spectrum: bad number '" + s + "' in '" + text + "'");
    return x;
  };
  Spectrum s;
  if (parts.size() == 3 && parts[0] == "step") {
    s = stepped_spectrum(static_cast<int>(number(parts[1])), number(parts[2]));
  } else if (parts.size() == 2 && parts[0] == "decay") {
    s = decaying_spectrum(static_cast<int>(number(parts[1])));
  } else if (parts.size() == 2 && parts[0] == "list") {
    std::stringstream vs(parts[1]);
    while (std::getline(vs, item, ',')) s.values.push_back(number(item));
    s.validate();
  } else {
    throw std::invalid_argument("spectrum: unrecognized description '" + text + "'");
  }
  return unit_trace ? scaled_to_unit_trace(std::move(s)) : s;
}

}  // namespace powerlab
