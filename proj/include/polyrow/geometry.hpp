#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "polyrow/error.hpp"

namespace polyrow {

/// Highest polynomial degree any curve may carry.
inline constexpr int kMaxDegree = 5;
/// Degree used when a caller does not choose one.
inline constexpr int kDefaultDegree = 2;
/// Consecutive points closer than this in both coordinates are merged.
inline constexpr double kDuplicateTolerance = 1e-9;

/// A point in normalized image space: u grows right, v grows down, both in
/// [0, 1] for raw annotations.
template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;

/// Ordered annotation points, one point per row of the matrix (u, v).
template <typename Scalar>
using Polyline = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;

/// Dense column of per-point parameters or polynomial coefficients.
template <typename Scalar>
using Coeffs = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// A parametric row u = U(lambda), v = V(lambda), lambda in [0, 1].
///
/// Coefficients are stored in ascending powers. Both axes always carry the
/// same number of coefficients; the constructor zero-pads the shorter one and
/// lifts constant curves to degree 1.
template <typename Scalar>
class PolyCurve {
 public:
  using Vector = Coeffs<Scalar>;

  PolyCurve() : u_(Vector::Zero(2)), v_(Vector::Zero(2)) {}

  PolyCurve(Vector u, Vector v) {
    if (u.size() == 0 || v.size() == 0) {
      throw ParameterError("PolyCurve needs at least one coefficient per axis");
    }
    const Eigen::Index dim = std::max<Eigen::Index>({u.size(), v.size(), 2});
    if (dim > kMaxDegree + 1) {
      throw ParameterError("PolyCurve degree " + std::to_string(dim - 1) +
                           " exceeds maximum " + std::to_string(kMaxDegree));
    }
    if (!u.allFinite() || !v.allFinite()) {
      throw ParameterError("PolyCurve coefficients must be finite");
    }
    u_ = pad(u, dim);
    v_ = pad(v, dim);
  }

  PolyCurve(std::initializer_list<Scalar> u, std::initializer_list<Scalar> v)
      : PolyCurve(from_list(u), from_list(v)) {}

  const Vector& u() const noexcept { return u_; }
  const Vector& v() const noexcept { return v_; }
  int degree() const noexcept { return static_cast<int>(u_.size()) - 1; }
  Eigen::Index dim() const noexcept { return u_.size(); }

  /// Same curve expressed with `dim` coefficients per axis.
  PolyCurve padded(Eigen::Index dim) const {
    if (dim < u_.size()) {
      throw ParameterError("cannot pad a curve to a lower dimension");
    }
    return PolyCurve(pad(u_, dim), pad(v_, dim));
  }

  Point2<Scalar> operator()(Scalar lambda) const {
    return {horner(u_, lambda), horner(v_, lambda)};
  }

  friend bool operator==(const PolyCurve& a, const PolyCurve& b) {
    return a.u_ == b.u_ && a.v_ == b.v_;
  }

  static Scalar horner(const Vector& c, Scalar x) {
    Scalar acc = c(c.size() - 1);
    for (Eigen::Index i = c.size() - 2; i >= 0; --i) acc = acc * x + c(i);
    return acc;
  }

  static Vector pad(const Vector& c, Eigen::Index dim) {
    Vector out = Vector::Zero(dim);
    out.head(c.size()) = c;
    return out;
  }

 private:
  static Vector from_list(std::initializer_list<Scalar> values) {
    Vector out(static_cast<Eigen::Index>(values.size()));
    std::copy(values.begin(), values.end(), out.data());
    return out;
  }

  Vector u_;
  Vector v_;
};

/// Result of a least-squares curve fit.
template <typename Scalar>
struct CurveFit {
  PolyCurve<Scalar> curve;
  /// sqrt of the summed squared residuals over both axes.
  Scalar residual;
};

using Point2d = Point2<double>;
using Polylined = Polyline<double>;
using Coeffsd = Coeffs<double>;
using PolyCurved = PolyCurve<double>;
using CurveFitd = CurveFit<double>;

/// Stable sort by v, then drop consecutive near-duplicates.
///
/// Throws DegenerateError when fewer than two distinct points remain.
template <typename Scalar>
Polyline<Scalar> sort_by_v(const Polyline<Scalar>& polyline) {
  const Eigen::Index n = polyline.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return polyline(a, 1) < polyline(b, 1);
  });

  std::vector<Eigen::Index> kept;
  kept.reserve(order.size());
  for (Eigen::Index idx : order) {
    if (!kept.empty()) {
      const auto prev = polyline.row(kept.back());
      const auto cur = polyline.row(idx);
      if (std::abs(cur(0) - prev(0)) < kDuplicateTolerance &&
          std::abs(cur(1) - prev(1)) < kDuplicateTolerance) {
        continue;
      }
    }
    kept.push_back(idx);
  }
  if (kept.size() < 2) {
    throw DegenerateError("polyline has fewer than 2 distinct points");
  }

  Polyline<Scalar> out(static_cast<Eigen::Index>(kept.size()), 2);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = polyline.row(kept[i]);
  }
  return out;
}

/// Normalized cumulative chord length of each vertex: 0 at the first point,
/// 1 at the last, strictly increasing in between.
template <typename Scalar>
Coeffs<Scalar> chord_lambda(const Polyline<Scalar>& polyline) {
  const Eigen::Index n = polyline.rows();
  if (n < 2) throw DegenerateError("chord_lambda needs at least 2 points");

  const Coeffs<Scalar> chords =
      (polyline.bottomRows(n - 1) - polyline.topRows(n - 1)).rowwise().norm();
  if ((chords.array() <= Scalar(0)).any()) {
    throw DegenerateError("polyline contains a zero-length chord");
  }

  Coeffs<Scalar> lambdas(n);
  lambdas(0) = Scalar(0);
  for (Eigen::Index i = 1; i < n; ++i) lambdas(i) = lambdas(i - 1) + chords(i - 1);
  const Scalar total = lambdas(n - 1);
  if (!(total > Scalar(0)) || !std::isfinite(static_cast<double>(total))) {
    throw DegenerateError("polyline has zero total length");
  }
  lambdas /= total;
  return lambdas;
}

template <typename Scalar>
Point2<Scalar> eval_curve(const PolyCurve<Scalar>& curve, Scalar lambda) {
  return curve(lambda);
}

/// `count` points at lambda = 0, 1/(count-1), ..., 1.
template <typename Scalar>
Polyline<Scalar> sample_equidistant(const PolyCurve<Scalar>& curve, int count) {
  if (count < 2) throw ParameterError("sample_equidistant needs at least 2 samples");
  Polyline<Scalar> out(count, 2);
  for (int i = 0; i < count; ++i) {
    const Scalar lambda = Scalar(i) / Scalar(count - 1);
    out.row(i) = curve(lambda).transpose();
  }
  return out;
}

/// Ascending-power Vandermonde matrix, one row per lambda.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> vandermonde(const Coeffs<Scalar>& lambdas,
                                                                  int degree) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(lambdas.size(), degree + 1);
  out.col(0).setOnes();
  for (int j = 1; j <= degree; ++j) out.col(j) = out.col(j - 1).cwiseProduct(lambdas);
  return out;
}

/// Independent least-squares fits of u(lambda) and v(lambda) at the given
/// parameters, solved by column-pivoting Householder QR.
template <typename Scalar>
CurveFit<Scalar> fit_points(const Polyline<Scalar>& points, const Coeffs<Scalar>& lambdas,
                            int degree = kDefaultDegree) {
  if (degree < 1 || degree > kMaxDegree) {
    throw ParameterError("fit degree must be in [1, " + std::to_string(kMaxDegree) + "]");
  }
  if (lambdas.size() != points.rows()) {
    throw ParameterError("lambda count does not match point count");
  }
  if (points.rows() < degree + 1) {
    throw ParameterError("insufficient points: degree " + std::to_string(degree) + " needs " +
                         std::to_string(degree + 1) + ", got " + std::to_string(points.rows()));
  }
  const auto design = vandermonde(lambdas, degree);
  const Eigen::ColPivHouseholderQR<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> qr(
      design);
  if (qr.rank() < degree + 1) {
    throw DegenerateError("rank-deficient Vandermonde matrix (repeated lambda values)");
  }
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 2> coeffs = qr.solve(points);
  const Scalar residual = (design * coeffs - points).norm();
  return {PolyCurve<Scalar>(coeffs.col(0), coeffs.col(1)), residual};
}

/// Chord-length parameterization followed by fit_points. The polyline is
/// expected in canonical (sort_by_v) order.
template <typename Scalar>
CurveFit<Scalar> fit_polyline(const Polyline<Scalar>& polyline, int degree = kDefaultDegree) {
  if (polyline.rows() < degree + 1) {
    throw ParameterError("insufficient points: degree " + std::to_string(degree) + " needs " +
                         std::to_string(degree + 1) + ", got " +
                         std::to_string(polyline.rows()));
  }
  return fit_points(polyline, chord_lambda(polyline), degree);
}

}  // namespace polyrow
