#include <gtest/gtest.h>

#include <cmath>

#include "powerlab/core.hpp"
#include "powerlab/matgen.hpp"
#include "powerlab/rng.hpp"
#include "test_support.hpp"

using namespace powerlab;

TEST(SymmetricMatrixTest, RejectsAsymmetricInput) {
  Matrix m(2, 2);
  m << 1.0, 2.0, 2.0 + 1e-6, 1.0;
  EXPECT_THROW(SymmetricMatrix{m}, std::invalid_argument);
}

TEST(SymmetricMatrixTest, AcceptsRoundoffAsymmetry) {
  Matrix m(2, 2);
  m << 1.0, 2.0, 2.0 + 1e-13, 1.0;
  EXPECT_NO_THROW(SymmetricMatrix{m});
}

TEST(SymmetricMatrixTest, RejectsNonSquare) { EXPECT_THROW(SymmetricMatrix{Matrix(2, 3)}, std::invalid_argument); }

TEST(UnitVectorTest, NormalizesOnConstruction) {
  Vector v(3);
  v << 3.0, 4.0, 0.0;
  UnitVector u(v);
  EXPECT_NEAR(u.vector().norm(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(u[0], 0.6);
}

TEST(UnitVectorTest, ZeroVectorIsAnnihilated) { EXPECT_THROW(UnitVector(Vector::Zero(4)), AnnihilatedVector); }

TEST(UnitVectorTest, NormStaysUnitOverManyRandomVectors) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Vector v = rng.normal_vector(1 + i % 17) * std::pow(10.0, (i % 21) - 10);
    EXPECT_NEAR(UnitVector(v).vector().norm(), 1.0, 1e-12);
  }
}

TEST(RayleighQuotientTest, IdentityGivesOne) {
  Rng rng(1);
  EXPECT_NEAR(rayleigh_quotient(SymmetricMatrix::identity(3), random_unit_vector(3, rng)), 1.0, 1e-15);
}

TEST(RayleighQuotientTest, EigenvectorGivesEigenvalue) {
  Vector diag(2);
  diag << 2.0, 1.0;
  EXPECT_DOUBLE_EQ(rayleigh_quotient(SymmetricMatrix::diagonal(diag), UnitVector::basis(2, 0)), 2.0);
}

TEST(RayleighQuotientTest, ConvexCombinationOfEigenvalues) {
  Vector diag(2);
  diag << 1.0, 0.9;
  Vector q(2);
  q << 1.0, 1.0;
  EXPECT_NEAR(rayleigh_quotient(SymmetricMatrix::diagonal(diag), UnitVector(q)), 0.95, 1e-15);
}

TEST(RayleighQuotientTest, DimensionMismatchThrows) {
  EXPECT_THROW(rayleigh_quotient(SymmetricMatrix::identity(3), UnitVector::basis(2, 0)), std::invalid_argument);
}

TEST(RayleighQuotientTest, StaysWithinSpectrumRange) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const SymmetricMatrix a = testing_support::random_symmetric(6, rng);
    const EigenDecomposition eig = oracle_eigh(a);
    for (int i = 0; i < 10; ++i) {
      const double r = rayleigh_quotient(a, random_unit_vector(6, rng));
      EXPECT_LE(r, eig.spectrum.values.front() + 1e-10);
      EXPECT_GE(r, eig.spectrum.values.back() - 1e-10);
    }
  }
}

TEST(RayleighQuotientTest, QuadraticAccuracyOnDiagonalMatrix) {
  Vector diag(5);
  diag << 1.0, 0.9, 0.7, 0.4, 0.1;
  const SymmetricMatrix a = SymmetricMatrix::diagonal(diag);
  Rng rng(5);
  for (int j = 0; j < 5; ++j) {
    double spread = 0.0;
    for (int i = 0; i < 5; ++i) spread = std::max(spread, std::abs(diag(j) - diag(i)));
    for (double scale : {1e-1, 1e-2, 1e-3, 1e-4}) {
      Vector w = Vector::Unit(5, j) + scale * rng.normal_vector(5);
      const UnitVector u(w);
      const double s = sin2_error(u, UnitVector::basis(5, j));
      EXPECT_LE(std::abs(rayleigh_quotient(a, u) - diag(j)), spread * s + 1e-10);
    }
  }
}

TEST(Sin2ErrorTest, BasicAngles) {
  Vector a(2), b(2);
  a << 1.0, 0.0;
  b << 1.0, 1.0;
  EXPECT_DOUBLE_EQ(sin2_error(UnitVector(a), UnitVector(a)), 0.0);
  EXPECT_DOUBLE_EQ(sin2_error(UnitVector::basis(2, 0), UnitVector::basis(2, 1)), 1.0);
  EXPECT_NEAR(sin2_error(UnitVector(a), UnitVector(b)), 0.5, 1e-15);
}

TEST(Sin2ErrorTest, SymmetricAndSignInvariantExactly) {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const UnitVector q = random_unit_vector(7, rng);
    const UnitVector v = random_unit_vector(7, rng);
    const double s = sin2_error(q, v);
    EXPECT_EQ(s, sin2_error(-q, v));
    EXPECT_EQ(s, sin2_error(v, q));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Sin2ErrorTest, DimensionMismatchThrows) {
  EXPECT_THROW(sin2_error(UnitVector::basis(2, 0), UnitVector::basis(3, 0)), std::invalid_argument);
}

TEST(OracleEighTest, DiagonalMatrix) {
  Vector diag(3);
  diag << 1.0, 3.0, 2.0;
  const EigenDecomposition eig = oracle_eigh(SymmetricMatrix::diagonal(diag));
  EXPECT_EQ(eig.spectrum.values, (std::vector<double>{3.0, 2.0, 1.0}));
  EXPECT_NEAR(std::abs(eig.vectors(1, 0)), 1.0, 1e-15);
  EXPECT_NEAR(std::abs(eig.vectors(2, 1)), 1.0, 1e-15);
  EXPECT_NEAR(std::abs(eig.vectors(0, 2)), 1.0, 1e-15);
}

TEST(OracleEighTest, RankOneProjector) {
  Rng rng(4);
  const UnitVector v = random_unit_vector(6, rng);
  const EigenDecomposition eig = oracle_eigh(SymmetricMatrix::symmetrized(v.vector() * v.vector().transpose()));
  EXPECT_NEAR(eig.spectrum[0], 1.0, 1e-12);
  for (int i = 1; i < 6; ++i) EXPECT_NEAR(eig.spectrum[i], 0.0, 1e-12);
  EXPECT_NEAR(sin2_error(eig.vector(0), v), 0.0, 1e-12);
}

TEST(OracleEighTest, OrthonormalAndReconstructsRandomMatrices) {
  Rng rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + trial % 12;
    const SymmetricMatrix a = testing_support::random_symmetric(n, rng);
    const EigenDecomposition eig = oracle_eigh(a);
    EXPECT_TRUE(eig.spectrum.is_descending());
    const Matrix gram = eig.vectors.transpose() * eig.vectors;
    EXPECT_LE((gram - Matrix::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10);
    const Matrix rebuilt = eig.vectors * eig.spectrum.as_vector().asDiagonal() * eig.vectors.transpose();
    EXPECT_LE((rebuilt - a.matrix()).norm(), 1e-9 * a.matrix().norm());
  }
}

TEST(OracleEighTest, AgreesWithEigenSelfAdjointSolver) {
  Rng rng(22);
  for (int trial = 0; trial < 30; ++trial) {
    const SymmetricMatrix a = testing_support::random_symmetric(9, rng);
    const EigenDecomposition eig = oracle_eigh(a);
    Eigen::SelfAdjointEigenSolver<Matrix> ref(a.matrix());
    for (int i = 0; i < 9; ++i) EXPECT_NEAR(eig.spectrum[i], ref.eigenvalues()(8 - i), 1e-10);
  }
}

TEST(OracleEighTest, RedecompositionIsStable) {
  Rng rng(23);
  const SymmetricMatrix a = testing_support::random_symmetric(10, rng);
  const EigenDecomposition first = oracle_eigh(a);
  const Matrix rebuilt = first.vectors * first.spectrum.as_vector().asDiagonal() * first.vectors.transpose();
  const EigenDecomposition second = oracle_eigh(SymmetricMatrix::symmetrized(rebuilt));
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(first.spectrum[i], second.spectrum[i], 1e-8);
}

TEST(OracleEighTest, RecoversMatgenSpectrum) {
  const Spectrum s = stepped_spectrum(10, 0.1);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GeneratedInstance inst = synth_covariance(s, 1000, seed);
    const EigenDecomposition eig = oracle_eigh(inst.covariance);
    for (int i = 0; i < 10; ++i) EXPECT_NEAR(eig.spectrum[i], s[i], 1e-8);
  }
}

TEST(OracleEighTest, RejectsAsymmetricInputAtConstruction) {
  Matrix m = Matrix::Zero(3, 3);
  m(0, 1) = 1.0;
  EXPECT_THROW(oracle_eigh(SymmetricMatrix{m}), std::invalid_argument);
}

TEST(PerturbationNormTest, ExactPairGivesZero) {
  Vector diag(3);
  diag << 2.0, 1.0, 0.5;
  EXPECT_NEAR(perturbation_norm(SymmetricMatrix::diagonal(diag), 2.0, UnitVector::basis(3, 0)), 0.0, 1e-15);
}

TEST(PerturbationNormTest, OrthogonalEstimateGivesLambdaOne) {
  Vector diag(3);
  diag << 2.0, 1.0, 0.5;
  EXPECT_NEAR(perturbation_norm(SymmetricMatrix::diagonal(diag), 2.0, UnitVector::basis(3, 2)), 2.0, 1e-14);
}

TEST(PerturbationNormTest, MatchesDenseSpectralNorm) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const UnitVector v1 = random_unit_vector(6, rng);
    const UnitVector q = random_unit_vector(6, rng);
    const double lambda1 = rng.uniform(0.1, 2.0);
    const double nu = rng.uniform(0.1, 2.0);
    const Matrix diff = lambda1 * v1.vector() * v1.vector().transpose() - nu * q.vector() * q.vector().transpose();
    const EigenDecomposition eig = oracle_eigh(SymmetricMatrix::symmetrized(diff));
    const double dense = std::max(std::abs(eig.spectrum.values.front()), std::abs(eig.spectrum.values.back()));
    EXPECT_NEAR(perturbation_norm(lambda1, v1.vector(), nu, q.vector()), dense, 1e-12);
  }
}

TEST(PerturbationNormTest, DecaysAtEigenvalueRatioAlongPowerIterates) {
  const Spectrum s = stepped_spectrum(10, 0.1);
  const GeneratedInstance inst = synth_covariance(s, 500, 77);
  const Vector v1 = inst.eigenvectors.col(0);
  Rng rng(78);
  Vector q = random_unit_vector(10, rng).vector();
  std::vector<double> g;
  for (int k = 0; k < 60; ++k) {
    q = inst.covariance.matrix() * q;
    q.normalize();
    g.push_back(perturbation_norm(s[0], v1, rayleigh_quotient(inst.covariance, q), q));
  }
  const double ratio = std::pow(g[59] / g[29], 1.0 / 30.0);
  EXPECT_NEAR(ratio, s[1] / s[0], 0.01);
}

TEST(HardtPriceCheckTest, ZeroNoisePasses) { EXPECT_TRUE(hardt_price_check(0.0, 0.0, 0.1, 0.1, 2.0, 10)); }

TEST(HardtPriceCheckTest, NoiseEqualToGapFails) { EXPECT_FALSE(hardt_price_check(0.1, 0.0, 0.1, 0.4, 2.0, 10)); }

TEST(HardtPriceCheckTest, WorkedExample) {
  // 5 * 5e-4 = 2.5e-3 <= 0.4 * 0.01 = 4e-3 and 5 * 1e-5 = 5e-5 <= 0.01 / (2 * 10) = 5e-4.
  EXPECT_TRUE(hardt_price_check(5e-4, 1e-5, 0.01, 0.4, 2.0, 100));
  // Projected condition alone broken: 5 * 1.01e-4 = 5.05e-4 exceeds 5e-4.
  EXPECT_FALSE(hardt_price_check(5e-4, 1.01e-4, 0.01, 0.4, 2.0, 100));
}

TEST(HardtPriceCheckTest, InvalidArgumentsThrow) {
  EXPECT_THROW(hardt_price_check(0.0, 0.0, 0.0, 0.1, 2.0, 10), std::invalid_argument);
  EXPECT_THROW(hardt_price_check(0.0, 0.0, -1.0, 0.1, 2.0, 10), std::invalid_argument);
  EXPECT_THROW(hardt_price_check(0.0, 0.0, 0.1, 0.6, 2.0, 10), std::invalid_argument);
  EXPECT_THROW(hardt_price_check(0.0, 0.0, 0.1, 0.1, 1.0, 10), std::invalid_argument);
}

TEST(StopRuleTest, ValidatesFields) {
  EXPECT_THROW(StopRule::iterate(0.0), std::invalid_argument);
  EXPECT_THROW(StopRule::iterate(1e-3, 0), std::invalid_argument);
  EXPECT_NO_THROW(StopRule::rayleigh(1e-3, 1));
}

TEST(RngTest, DerivedSeedsDifferAndRepeat) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(2, {2, 3}));
}
