#ifndef ISOROBUST_GEOMETRY_HPP
#define ISOROBUST_GEOMETRY_HPP

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace isorobust {

/// A 3x3 linear map. Acts on a point as A p and on a cloud (rows = points) as P A^T.
template <typename Scalar>
using Transform3 = Eigen::Matrix<Scalar, 3, 3>;

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
struct EulerAngles {
  Scalar x{0};
  Scalar y{0};
  Scalar z{0};
};

/// Unit normal of a reflection plane in spherical coordinates.
template <typename Scalar>
struct ReflectionAxis {
  Scalar azimuth{0};
  Scalar polar{0};

  Vector3<Scalar> normal() const {
    using std::cos;
    using std::sin;
    return {sin(polar) * cos(azimuth), sin(polar) * sin(azimuth), cos(polar)};
  }
};

class DegenerateSpectrum : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixed-axis rotation R = R_x(x) R_y(y) R_z(z).
template <typename Scalar>
Transform3<Scalar> euler_to_rotation(const EulerAngles<Scalar>& angles) {
  using AngleAxis = Eigen::AngleAxis<Scalar>;
  using Vec = Vector3<Scalar>;
  return (AngleAxis(angles.x, Vec::UnitX()) * AngleAxis(angles.y, Vec::UnitY()) *
          AngleAxis(angles.z, Vec::UnitZ()))
      .toRotationMatrix();
}

/// Householder matrix I - 2 v v^T for the plane with unit normal v.
template <typename Scalar>
Transform3<Scalar> householder_reflection(const ReflectionAxis<Scalar>& axis) {
  const Vector3<Scalar> v = axis.normal();
  return Transform3<Scalar>::Identity() - Scalar(2) * v * v.transpose();
}

template <typename Scalar>
Transform3<Scalar> compose(const Transform3<Scalar>& a, const Transform3<Scalar>& b) {
  return a * b;
}

template <typename Scalar>
bool is_orthogonal(const Transform3<Scalar>& a, Scalar tol) {
  return (a.transpose() * a - Transform3<Scalar>::Identity()).cwiseAbs().maxCoeff() <= tol;
}

/// Eigen-decomposition of a symmetric 3x3 matrix; vectors are stored column-wise.
template <typename Scalar>
struct SymmetricEigen3 {
  Vector3<Scalar> values;
  Transform3<Scalar> vectors;
};

/// Cyclic Jacobi sweeps until every off-diagonal entry is below `threshold`
/// (scaled by max(1, |M|_F)).
template <typename Scalar>
SymmetricEigen3<Scalar> symmetric_eigen3(const Transform3<Scalar>& m,
                                         Scalar threshold = Scalar(1e-12),
                                         int max_sweeps = 64) {
  using std::abs;
  using std::sqrt;
  Transform3<Scalar> a = Scalar(0.5) * (m + m.transpose());
  Transform3<Scalar> v = Transform3<Scalar>::Identity();
  const Scalar limit = threshold * std::max(Scalar(1), a.norm());

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    const Scalar off = std::max({abs(a(0, 1)), abs(a(0, 2)), abs(a(1, 2))});
    if (off <= limit) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (a(p, q) == Scalar(0)) continue;
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * a(p, q));
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) /
                         (abs(theta) + sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / sqrt(t * t + Scalar(1));
        const Scalar s = t * c;
        Transform3<Scalar> rot = Transform3<Scalar>::Identity();
        rot(p, p) = c;
        rot(q, q) = c;
        rot(p, q) = s;
        rot(q, p) = -s;
        a = rot.transpose() * a * rot;
        a(p, q) = a(q, p) = Scalar(0);
        v = v * rot;
      }
    }
  }
  return {a.diagonal(), v};
}

/// Dominant (largest |lambda|) eigenpair of A^T A - I and its separation from the runner-up.
template <typename Scalar>
struct DominantEigenpair {
  Scalar value;
  Vector3<Scalar> vector;
  Scalar gap;
};

template <typename Scalar>
DominantEigenpair<Scalar> penalty_dominant_eigenpair(const Transform3<Scalar>& a) {
  const Transform3<Scalar> m = a.transpose() * a - Transform3<Scalar>::Identity();
  const auto eig = symmetric_eigen3<Scalar>(m);
  const Vector3<Scalar> mags = eig.values.cwiseAbs();
  int top = 0;
  for (int i = 1; i < 3; ++i)
    if (mags(i) > mags(top)) top = i;
  Scalar runner_up = Scalar(0);
  for (int i = 0; i < 3; ++i)
    if (i != top) runner_up = std::max(runner_up, mags(i));
  return {eig.values(top), eig.vectors.col(top), mags(top) - runner_up};
}

/// sigma(A^T A - I): zero exactly on the orthogonal group, otherwise the
/// worst-case relative change of squared length under A.
template <typename Scalar>
Scalar spectral_norm_penalty(const Transform3<Scalar>& a) {
  using std::abs;
  return abs(penalty_dominant_eigenpair(a).value);
}

template <typename Scalar>
struct PenaltyGradient {
  Transform3<Scalar> gradient;
  bool degenerate;
};

/// Gradient of the spectral-norm penalty, or a subgradient when the dominant
/// eigenvalue is not simple. At an orthogonal A (all eigenvalues within `tol` of
/// zero) the penalty attains its minimum and the zero subgradient is returned.
template <typename Scalar>
PenaltyGradient<Scalar> spectral_norm_penalty_subgradient(const Transform3<Scalar>& a,
                                                          Scalar tol = Scalar(1e-8)) {
  using std::abs;
  const auto dom = penalty_dominant_eigenpair(a);
  if (abs(dom.value) <= tol) return {Transform3<Scalar>::Zero(), true};
  const Scalar sign = dom.value > 0 ? Scalar(1) : Scalar(-1);
  return {Scalar(2) * sign * (a * dom.vector) * dom.vector.transpose(), dom.gap <= tol};
}

/// Analytic gradient 2 sign(lambda) (A v) v^T of the penalty.
/// Throws DegenerateSpectrum when the dominant eigenvalue is tied within `tol`.
template <typename Scalar>
Transform3<Scalar> spectral_norm_penalty_grad(const Transform3<Scalar>& a,
                                              Scalar tol = Scalar(1e-8)) {
  const auto result = spectral_norm_penalty_subgradient(a, tol);
  if (result.degenerate)
    throw DegenerateSpectrum("dominant eigenvalue of A^T A - I is not simple");
  return result.gradient;
}

}  // namespace isorobust

#endif  // ISOROBUST_GEOMETRY_HPP
