#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "core.hpp"

namespace powerlab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Folds a base seed and a path of indices (cell, trial, stream id, ...) into one seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t next_u64() { return engine_(); }

  Vector normal_vector(int d) {
    Vector v(d);
    for (int i = 0; i < d; ++i) v(i) = normal();
    return v;
  }

  Matrix normal_matrix(int rows, int cols) {
    Matrix m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Uniform draw from the unit sphere in R^d.
inline UnitVector random_unit_vector(int d, Rng& rng) { return UnitVector(rng.normal_vector(d)); }

inline UnitVector random_unit_vector(int d, std::uint64_t seed) {
  Rng rng(seed);
  return random_unit_vector(d, rng);
}

}  // namespace powerlab
