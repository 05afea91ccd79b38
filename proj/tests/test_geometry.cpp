#include "isorobust/geometry.hpp"
#include "isorobust/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace isorobust;
using Mat = Transform3<double>;
using Vec = Vector3<double>;

namespace {

constexpr double kPi = std::numbers::pi;

// Hand-written single-axis rotations; independent of the Eigen AngleAxis path.
Mat rx(double t) {
  Mat m;
  m << 1, 0, 0, 0, std::cos(t), -std::sin(t), 0, std::sin(t), std::cos(t);
  return m;
}
Mat ry(double t) {
  Mat m;
  m << std::cos(t), 0, std::sin(t), 0, 1, 0, -std::sin(t), 0, std::cos(t);
  return m;
}
Mat rz(double t) {
  Mat m;
  m << std::cos(t), -std::sin(t), 0, std::sin(t), std::cos(t), 0, 0, 0, 1;
  return m;
}

Mat random_matrix(Rng& rng, double spread = 1.0) {
  Mat a;
  for (int i = 0; i < 9; ++i) a(i / 3, i % 3) = uniform(rng, -spread, spread);
  return a;
}

EulerAngles<double> random_angles(Rng& rng) {
  return {uniform(rng, -kPi, kPi), uniform(rng, -kPi, kPi), uniform(rng, -kPi, kPi)};
}

ReflectionAxis<double> random_axis(Rng& rng) {
  return {uniform(rng, -kPi, kPi), uniform(rng, 0.0, kPi)};
}

double inf_norm(const Mat& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Euler, ZeroAnglesGiveIdentity) {
  EXPECT_TRUE(euler_to_rotation(EulerAngles<double>{}).isApprox(Mat::Identity(), 0.0));
}

TEST(Euler, QuarterTurnAboutX) {
  Mat expected;
  expected << 1, 0, 0, 0, 0, -1, 0, 1, 0;
  EXPECT_LE(inf_norm(euler_to_rotation(EulerAngles<double>{kPi / 2, 0, 0}) - expected), 1e-15);
}

TEST(Euler, OrderIsXThenYThenZ) {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto e = random_angles(rng);
    const Mat oracle = rx(e.x) * ry(e.y) * rz(e.z);
    EXPECT_LE(inf_norm(euler_to_rotation(e) - oracle), 1e-14);
  }
}

TEST(Euler, SampledRotationsLieInSO3) {
  Rng rng(12);
  for (int i = 0; i < 10000; ++i) {
    const Mat r = euler_to_rotation(random_angles(rng));
    ASSERT_LE(inf_norm(r.transpose() * r - Mat::Identity()), 1e-9);
    ASSERT_NEAR(r.determinant(), 1.0, 1e-9);
  }
}

TEST(Euler, FloatInstantiation) {
  const auto r = euler_to_rotation(EulerAngles<float>{0.3f, -1.2f, 2.0f});
  EXPECT_TRUE(is_orthogonal<float>(r, 1e-5f));
}

TEST(ReflectionAxisType, NormalHasUnitLength) {
  Rng rng(13);
  for (int i = 0; i < 1000; ++i) EXPECT_NEAR(random_axis(rng).normal().norm(), 1.0, 1e-12);
}

TEST(Householder, PolarZeroReflectsAcrossXYPlane) {
  const Mat p = householder_reflection(ReflectionAxis<double>{0.0, 0.0});
  EXPECT_LE(inf_norm(p - Vec(1, 1, -1).asDiagonal().toDenseMatrix()), 1e-15);
}

TEST(Householder, XAxisNormal) {
  const Mat p = householder_reflection(ReflectionAxis<double>{0.0, kPi / 2});
  EXPECT_LE(inf_norm(p - Vec(-1, 1, 1).asDiagonal().toDenseMatrix()), 1e-15);
}

TEST(Householder, SymmetricInvolutionWithNegativeDeterminant) {
  Rng rng(14);
  for (int i = 0; i < 10000; ++i) {
    const auto axis = random_axis(rng);
    const Mat p = householder_reflection(axis);
    ASSERT_LE(inf_norm(p - p.transpose()), 1e-15);
    ASSERT_LE(inf_norm(p * p - Mat::Identity()), 1e-9);
    ASSERT_NEAR(p.determinant(), -1.0, 1e-9);
    ASSERT_LE((p * axis.normal() + axis.normal()).norm(), 1e-12);
  }
}

TEST(Householder, MatchesVectorFormula) {
  Rng rng(15);
  for (int i = 0; i < 100; ++i) {
    const auto axis = random_axis(rng);
    const Vec v = axis.normal();
    const Vec x(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    EXPECT_LE((householder_reflection(axis) * x - (x - 2.0 * v.dot(x) * v)).norm(), 1e-14);
  }
}

TEST(Compose, IdentityIsNeutral) {
  Rng rng(16);
  const Mat a = random_matrix(rng);
  EXPECT_EQ(compose<double>(Mat::Identity(), a), a);
}

TEST(Compose, SameReflectionTwiceIsIdentity) {
  const Mat p = householder_reflection(ReflectionAxis<double>{0.7, 1.1});
  EXPECT_LE(inf_norm(compose(p, p) - Mat::Identity()), 1e-14);
}

TEST(Compose, TwoDistinctReflectionsMakeARotation) {
  const Mat p = householder_reflection(ReflectionAxis<double>{0.7, 1.1});
  const Mat q = householder_reflection(ReflectionAxis<double>{-2.0, 0.4});
  EXPECT_NEAR(compose(p, q).determinant(), 1.0, 1e-12);
}

TEST(Isometry, PreservesDistances) {
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const Mat a = i % 2 ? euler_to_rotation(random_angles(rng))
                        : householder_reflection(random_axis(rng));
    const Vec x(uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5));
    const Vec y(uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5));
    EXPECT_LE(std::abs((a * x - a * y).norm() - (x - y).norm()), 1e-9);
  }
}

TEST(IsOrthogonal, Examples) {
  EXPECT_TRUE(is_orthogonal(euler_to_rotation(EulerAngles<double>{1, 2, 3}), 1e-9));
  EXPECT_FALSE(is_orthogonal<double>(Vec(1.1, 1, 1).asDiagonal().toDenseMatrix(), 1e-9));
  EXPECT_TRUE(is_orthogonal<double>(Mat::Identity(), 0.0));
}

TEST(SymmetricEigen, AgreesWithEigenSolver) {
  Rng rng(18);
  for (int i = 0; i < 500; ++i) {
    const Mat b = random_matrix(rng, 2.0);
    const Mat m = b + b.transpose();
    const auto ours = symmetric_eigen3<double>(m);
    Vec sorted = ours.values;
    std::sort(sorted.data(), sorted.data() + 3);
    const Eigen::SelfAdjointEigenSolver<Mat> ref(m);
    EXPECT_LE((sorted - ref.eigenvalues()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE(inf_norm(m * ours.vectors - ours.vectors * ours.values.asDiagonal()), 1e-10);
    EXPECT_LE(inf_norm(ours.vectors.transpose() * ours.vectors - Mat::Identity()), 1e-12);
  }
}

TEST(Penalty, Examples) {
  EXPECT_NEAR(spectral_norm_penalty<double>(Vec(1.1, 1, 1).asDiagonal().toDenseMatrix()), 0.21,
              1e-12);
  EXPECT_NEAR(spectral_norm_penalty<double>(2.0 * Mat::Identity()), 3.0, 1e-12);
  EXPECT_NEAR(spectral_norm_penalty<double>(Vec(0.5, 1, 1).asDiagonal().toDenseMatrix()), 0.75,
              1e-12);
}

TEST(Penalty, VanishesOnIsometries) {
  Rng rng(19);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_LE(spectral_norm_penalty(euler_to_rotation(random_angles(rng))), 1e-9);
    EXPECT_LE(spectral_norm_penalty(householder_reflection(random_axis(rng))), 1e-9);
  }
}

TEST(Penalty, EqualsSupOfSquaredNormDistortion) {
  Rng rng(20);
  for (int i = 0; i < 200; ++i) {
    const Mat a = random_matrix(rng);
    const double sigma = spectral_norm_penalty(a);
    // The sup is attained at the dominant eigenvector.
    const Vec v = penalty_dominant_eigenpair(a).vector;
    EXPECT_NEAR(std::abs((a * v).squaredNorm() - 1.0), sigma, 1e-9);
    double sup = 0.0;
    for (int s = 0; s < 1000; ++s) {
      Vec x(standard_normal(rng), standard_normal(rng), standard_normal(rng));
      x.normalize();
      const double d = std::abs((a * x).squaredNorm() - 1.0);
      ASSERT_LE(d, sigma + 1e-9);
      sup = std::max(sup, d);
    }
    EXPECT_GE(sup, 0.9 * sigma);
  }
}

TEST(PenaltyGrad, DiagonalExample) {
  const Mat g = spectral_norm_penalty_grad<double>(Vec(1.1, 1, 1).asDiagonal().toDenseMatrix());
  EXPECT_LE(inf_norm(g - Vec(2.2, 0, 0).asDiagonal().toDenseMatrix()), 1e-12);
}

TEST(PenaltyGrad, ShrinkingDirectionFlipsSign) {
  // lambda = 0.25 - 1 < 0 dominates, so the gradient points toward growing A.
  const Mat g = spectral_norm_penalty_grad<double>(Vec(0.5, 1, 1).asDiagonal().toDenseMatrix());
  EXPECT_LE(inf_norm(g - Vec(-1.0, 0, 0).asDiagonal().toDenseMatrix()), 1e-12);
}

TEST(PenaltyGrad, MatchesCentralDifferences) {
  Rng rng(21);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const Mat a = random_matrix(rng);
    if (penalty_dominant_eigenpair(a).gap < 1e-3) continue;
    ++checked;
    const Mat g = spectral_norm_penalty_grad(a);
    const double h = 1e-6;
    for (int e = 0; e < 9; ++e) {
      Mat up = a, down = a;
      up(e / 3, e % 3) += h;
      down(e / 3, e % 3) -= h;
      const double fd = (spectral_norm_penalty(up) - spectral_norm_penalty(down)) / (2 * h);
      ASSERT_LE(std::abs(fd - g(e / 3, e % 3)), 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
  EXPECT_GE(checked, 900);
}

TEST(PenaltyGrad, IdentityIsDegenerate) {
  EXPECT_THROW(spectral_norm_penalty_grad<double>(Mat::Identity()), DegenerateSpectrum);
  const auto sub = spectral_norm_penalty_subgradient<double>(Mat::Identity());
  EXPECT_TRUE(sub.degenerate);
  EXPECT_TRUE(sub.gradient.isZero(0.0));
}

TEST(PenaltyGrad, TiedDominantEigenvaluesAreFlagged) {
  const Mat a = Vec(1.1, 1.1, 1).asDiagonal();
  EXPECT_THROW(spectral_norm_penalty_grad(a), DegenerateSpectrum);
  const auto sub = spectral_norm_penalty_subgradient(a);
  EXPECT_TRUE(sub.degenerate);
  // Any dominant eigenvector gives a valid subgradient of norm 2 * 1.1.
  EXPECT_NEAR(sub.gradient.norm(), 2.2, 1e-12);
}
