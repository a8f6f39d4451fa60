#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "powerlab/clustering.hpp"
#include "powerlab/matgen.hpp"
#include "test_support.hpp"

using namespace powerlab;

namespace {

PointSet points_of(std::initializer_list<std::pair<double, double>> xy) {
  PointSet set;
  set.points.resize(static_cast<Eigen::Index>(xy.size()), 2);
  Eigen::Index i = 0;
  for (const auto& [x, y] : xy) {
    set.points(i, 0) = x;
    set.points(i, 1) = y;
    ++i;
  }
  return set;
}

std::vector<double> sorted_real_eigenvalues(const Matrix& m) {
  Eigen::EigenSolver<Matrix> eig(m, false);
  std::vector<double> out;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) out.push_back(eig.eigenvalues()(i).real());
  std::sort(out.begin(), out.end());
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(AffinityTest, IdenticalPointsHaveUnitGaussianAffinity) {
  const SymmetricMatrix a = affinity(points_of({{0.5, 0.5}, {0.5, 0.5}}), Similarity::gaussian(1.0));
  EXPECT_DOUBLE_EQ(a.matrix()(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(a.matrix()(0, 0), 1.0);
}

TEST(AffinityTest, L2KindIsRawDistance) {
  const SymmetricMatrix a = affinity(points_of({{0.0, 0.0}, {2.0, 0.0}}), Similarity::l2_distance());
  EXPECT_DOUBLE_EQ(a.matrix()(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(a.matrix()(1, 1), 0.0);
}

TEST(AffinityTest, DuplicatePointsAllowedForL2) {
  const SymmetricMatrix a = affinity(points_of({{1.0, 1.0}, {1.0, 1.0}, {0.0, 0.0}}), Similarity::l2_distance());
  EXPECT_EQ(a.matrix()(0, 1), 0.0);
}

TEST(AffinityTest, CollinearGaussianEntries) {
  const SymmetricMatrix a = affinity(points_of({{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}}), Similarity::gaussian(1.0));
  EXPECT_NEAR(a.matrix()(0, 1), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(a.matrix()(0, 2), std::exp(-2.0), 1e-15);
  EXPECT_NEAR(a.matrix()(1, 2), std::exp(-0.5), 1e-15);
}

TEST(AffinityTest, MedianFractionBandwidth) {
  // Distances 1, 1, 2: median 1, so sigma = 0.5.
  const PointSet set = points_of({{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}});
  const SymmetricMatrix a = affinity(set, Similarity::gaussian_median_fraction(0.5));
  EXPECT_NEAR(a.matrix()(0, 1), std::exp(-1.0 / (2.0 * 0.25)), 1e-15);
  EXPECT_DOUBLE_EQ(median_pairwise_distance(set.points), 1.0);
}

TEST(AffinityTest, OutputIsSymmetric) {
  const PointSet set = make_moons(40, 0.1, 3);
  for (const Similarity& s : {Similarity{}, Similarity::l2_distance()}) {
    const Matrix a = affinity(set, s).matrix();
    EXPECT_EQ((a - a.transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(NormalizeAffinityTest, AllOnesGivesUniformRows) {
  const Matrix w = normalize_affinity(SymmetricMatrix(Matrix::Ones(3, 3)));
  EXPECT_LE((w.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-15);
}

TEST(NormalizeAffinityTest, RowsSumToOne) {
  const PointSet set = make_circles(60, 0.5, 0.05, 4);
  const Matrix w = normalize_affinity(affinity(set, Similarity{}));
  EXPECT_LE((w.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(NormalizeAffinityTest, IsolatedPointIsNamed) {
  Matrix a = Matrix::Identity(3, 3);
  a(1, 1) = 0.0;
  try {
    normalize_affinity(SymmetricMatrix(a));
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("point 1"), std::string::npos);
  }
}

TEST(NormalizeAffinityTest, SymmetricFormSharesSpectrum) {
  Rng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix g = rng.normal_matrix(6, 6).cwiseAbs();
    const SymmetricMatrix a = SymmetricMatrix::symmetrized(0.5 * (g + g.transpose()));
    const std::vector<double> w = sorted_real_eigenvalues(normalize_affinity(a));
    const EigenDecomposition s = oracle_eigh(symmetric_normalize(a).matrix);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(w[i], s.spectrum[5 - i], 1e-10);
  }
}

TEST(SchurDeflateTest, ExactEigenvectorIsHotelling) {
  Vector d(2);
  d << 2.0, 1.0;
  const SymmetricMatrix w = schur_deflate(SymmetricMatrix::diagonal(d), UnitVector::basis(2, 0));
  Matrix expected = Matrix::Zero(2, 2);
  expected(1, 1) = 1.0;
  EXPECT_LE((w.matrix() - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SchurDeflateTest, ReplacesEigenvalueWithZero) {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const SymmetricMatrix w = testing_support::random_symmetric(8, rng);
    const EigenDecomposition eig = oracle_eigh(w);
    const SymmetricMatrix deflated = schur_deflate(w, eig.vector(0));
    std::vector<double> expected = eig.spectrum.values;
    expected[0] = 0.0;
    std::sort(expected.begin(), expected.end(), std::greater<>());
    const EigenDecomposition after = oracle_eigh(deflated);
    for (int i = 0; i < 8; ++i) EXPECT_NEAR(after.spectrum[i], expected[i], 1e-8);
    EXPECT_LE(deflated.apply(eig.vector(0).vector()).norm(), 1e-10);
  }
}

TEST(SchurDeflateTest, ApproximateVectorLeavesSecondEigenvalueOnTop) {
  Spectrum s;
  s.values = {1.0, 0.9, 0.8, 0.6, 0.4, 0.2};
  const GeneratedInstance inst = synth_covariance(s, 60, 2);
  const Vector v = std::sqrt(1.0 - 1e-6) * inst.eigenvectors.col(0) + 1e-3 * inst.eigenvectors.col(3);
  const UnitVector approx(v);
  ASSERT_NEAR(sin2_error(approx.vector(), inst.eigenvectors.col(0)), 1e-6, 1e-12);
  EXPECT_NEAR(oracle_eigh(schur_deflate(inst.covariance, approx)).spectrum[0], 0.9, 1e-3);
}

TEST(SchurDeflateTest, RejectsNullDirection) {
  Vector d(2);
  d << 1.0, 0.0;
  EXPECT_THROW(schur_deflate(SymmetricMatrix::diagonal(d), UnitVector::basis(2, 1)), std::invalid_argument);
}

TEST(KMeansTest, SeparatedBlobsSplitPerfectly) {
  Matrix emb(8, 1);
  emb << 0.0, 0.1, -0.1, 0.05, 10.0, 10.1, 9.9, 10.05;
  const KMeansResult r = kmeans(emb, 2, 1);
  for (int i = 1; i < 4; ++i) EXPECT_EQ(r.labels[i], r.labels[0]);
  for (int i = 5; i < 8; ++i) EXPECT_EQ(r.labels[i], r.labels[4]);
  EXPECT_NE(r.labels[0], r.labels[4]);
}

TEST(KMeansTest, OneClusterPerPoint) {
  Matrix emb(4, 2);
  emb << 0, 0, 1, 0, 0, 1, 5, 5;
  const KMeansResult r = kmeans(emb, 4, 3);
  EXPECT_EQ(r.inertia, 0.0);
  std::vector<int> labels = r.labels;
  std::sort(labels.begin(), labels.end());
  EXPECT_EQ(labels, (std::vector<int>{0, 1, 2, 3}));
}

TEST(KMeansTest, SeededRunIsReproducible) {
  Rng rng(2);
  const Matrix emb = rng.normal_matrix(200, 2);
  const KMeansResult a = kmeans(emb, 3, 17);
  const KMeansResult b = kmeans(emb, 3, 17);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.inertia, b.inertia);
}

TEST(KMeansTest, RejectsTooFewPoints) {
  EXPECT_THROW(kmeans(Matrix::Zero(2, 1), 3, 1), std::invalid_argument);
}

TEST(AccuracyTest, FlippedLabelsScoreTheSame) {
  const std::vector<int> truth{0, 0, 1, 1, 1, 0};
  const std::vector<int> labels{1, 0, 0, 0, 1, 1};
  std::vector<int> flipped = labels;
  for (int& l : flipped) l = 1 - l;
  EXPECT_DOUBLE_EQ(clustering_accuracy(labels, truth), clustering_accuracy(flipped, truth));
  EXPECT_DOUBLE_EQ(clustering_accuracy(labels, truth), 4.0 / 6.0);
}

TEST(AccuracyTest, MaxOfMatchAndComplementForTwoClusters) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> labels(30);
    std::vector<int> truth(30);
    int match = 0;
    for (int i = 0; i < 30; ++i) {
      labels[i] = rng.uniform(0.0, 1.0) < 0.5;
      truth[i] = rng.uniform(0.0, 1.0) < 0.5;
      match += labels[i] == truth[i];
    }
    EXPECT_DOUBLE_EQ(clustering_accuracy(labels, truth), std::max(match, 30 - match) / 30.0);
  }
}

TEST(DatasetTest, NoiselessOuterCircleHasUnitRadius) {
  const PointSet set = make_circles(100, 0.5, 0.0, 1);
  for (int i = 0; i < 100; ++i) {
    const double r = set.points.row(i).norm();
    EXPECT_NEAR(r, (*set.labels)[i] == 0 ? 1.0 : 0.5, 1e-14);
  }
}

TEST(DatasetTest, BalancedClasses) {
  const PointSet circles = make_circles(1000, 0.5, 0.05, 1);
  const PointSet moons = make_moons(500, 0.05, 1);
  EXPECT_EQ(circles.size(), 1000);
  EXPECT_EQ(moons.size(), 500);
  EXPECT_EQ(std::count(circles.labels->begin(), circles.labels->end(), 1), 500);
  EXPECT_EQ(std::count(moons.labels->begin(), moons.labels->end(), 1), 250);
}

TEST(DatasetTest, RejectsBadFactor) {
  EXPECT_THROW(make_circles(10, 1.0, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(make_circles(10, 0.0, 0.0, 1), std::invalid_argument);
}

TEST(DpicTest, SeparatedBlobsAreRecovered) {
  PointSet set;
  set.points.resize(40, 2);
  set.labels = std::vector<int>(40);
  Rng rng(6);
  for (int i = 0; i < 40; ++i) {
    const int label = i % 2;
    set.points(i, 0) = 5.0 * label + 0.2 * rng.normal();
    set.points(i, 1) = 0.2 * rng.normal();
    (*set.labels)[i] = label;
  }
  DpicOptions opts;
  opts.similarity = Similarity::gaussian(1.0);
  for (const DpicSolver& solver : {DpicSolver::power(), DpicSolver::momentum(), DpicSolver::dm(1e-3)}) {
    const ClusterResult r = dpic(set, solver, 1e-8, 2, opts);
    EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
    EXPECT_GT(r.solver_iterations, 0);
  }
}

TEST(DpicTest, SameSeedSameLabels) {
  const PointSet set = make_moons(100, 0.05, 2);
  const ClusterResult a = dpic(set, DpicSolver::dm(1e-3), 1e-6, 9);
  const ClusterResult b = dpic(set, DpicSolver::dm(1e-3), 1e-6, 9);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.solver_iterations, b.solver_iterations);
}

TEST(DpicTest, IterationCapFlagsResultButStillClusters) {
  const PointSet set = make_circles(100, 0.5, 0.05, 3);
  DpicOptions opts;
  opts.max_iter = 3;
  const ClusterResult r = dpic(set, DpicSolver::power(), 1e-12, 1, opts);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.labels.size(), 100u);
  EXPECT_EQ(r.solver_iterations, 6);
}

TEST(DpicTest, AccuracyImprovesAsToleranceTightens) {
  std::vector<double> loose;
  std::vector<double> mid;
  std::vector<double> tight;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PointSet set = make_circles(300, 0.5, 0.05, seed);
    loose.push_back(dpic(set, DpicSolver::dm(std::cbrt(1e-2)), 1e-2, seed).accuracy);
    mid.push_back(dpic(set, DpicSolver::dm(std::cbrt(1e-4)), 1e-4, seed).accuracy);
    tight.push_back(dpic(set, DpicSolver::dm(std::cbrt(1e-8)), 1e-8, seed).accuracy);
  }
  EXPECT_GE(median(tight), median(mid));
  EXPECT_GE(median(mid), median(loose));
}
