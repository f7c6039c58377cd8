#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "polyrow/error.hpp"
#include "polyrow/geometry.hpp"

namespace polyrow {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Lower clamp on confidences fed to binary cross-entropy.
inline constexpr double kConfidenceEpsilon = 1e-7;

/// A candidate row with its detection confidence in [0, 1].
template <typename Scalar>
struct Prediction {
  PolyCurve<Scalar> curve;
  Scalar confidence;
};

/// Per-pair loss split into its geometric and classification parts.
template <typename Scalar>
struct PairLoss {
  Scalar poly;
  Scalar cls;
  Scalar total;
};

/// Gradient of a loss with respect to the u and v coefficient vectors.
template <typename Scalar>
struct CoeffGradient {
  Coeffs<Scalar> du;
  Coeffs<Scalar> dv;
};

using Predictiond = Prediction<double>;
using PairLossd = PairLoss<double>;
using CoeffGradientd = CoeffGradient<double>;

/// Gram matrix of the monomials 1, lambda, ..., lambda^(dim-1) on [0, 1]:
/// A(i, j) = 1 / (i + j + 1). Built once per scalar type and cached.
template <typename Scalar>
const Matrix<Scalar>& hilbert_matrix(int dim) {
  if (dim < 1 || dim > kMaxDegree + 1) {
    throw ParameterError("hilbert_matrix dimension must be in [1, " +
                         std::to_string(kMaxDegree + 1) + "], got " + std::to_string(dim));
  }
  static const std::array<Matrix<Scalar>, kMaxDegree + 1> cache = [] {
    std::array<Matrix<Scalar>, kMaxDegree + 1> out;
    for (int d = 1; d <= kMaxDegree + 1; ++d) {
      Matrix<Scalar> a(d, d);
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) a(i, j) = Scalar(1) / Scalar(i + j + 1);
      }
      out[static_cast<std::size_t>(d - 1)] = std::move(a);
    }
    return out;
  }();
  return cache[static_cast<std::size_t>(dim - 1)];
}

namespace detail {

template <typename Scalar>
std::pair<PolyCurve<Scalar>, PolyCurve<Scalar>> common_dim(const PolyCurve<Scalar>& a,
                                                          const PolyCurve<Scalar>& b) {
  const Eigen::Index dim = std::max(a.dim(), b.dim());
  return {a.padded(dim), b.padded(dim)};
}

}  // namespace detail

/// Integral over lambda in [0, 1] of the squared distance between two
/// parametric curves, in closed form:
///   E_u^T A E_u + E_v^T A E_v,  E = pred - target,  A = hilbert_matrix.
/// Curves of different degree are compared after zero-padding.
template <typename Scalar>
Scalar poly_opt_loss(const PolyCurve<Scalar>& pred, const PolyCurve<Scalar>& target) {
  const auto [p, t] = detail::common_dim(pred, target);
  const Matrix<Scalar>& a = hilbert_matrix<Scalar>(static_cast<int>(p.dim()));
  const Coeffs<Scalar> eu = p.u() - t.u();
  const Coeffs<Scalar> ev = p.v() - t.v();
  return eu.dot(a * eu) + ev.dot(a * ev);
}

/// d(poly_opt_loss)/d(pred coefficients) = 2 A E per axis.
template <typename Scalar>
CoeffGradient<Scalar> poly_opt_loss_grad(const PolyCurve<Scalar>& pred,
                                         const PolyCurve<Scalar>& target) {
  const auto [p, t] = detail::common_dim(pred, target);
  const Matrix<Scalar>& a = hilbert_matrix<Scalar>(static_cast<int>(p.dim()));
  return {Scalar(2) * (a * (p.u() - t.u())), Scalar(2) * (a * (p.v() - t.v()))};
}

/// Root-mean-square Euclidean distance between the curve evaluated at each
/// label's lambda and the label point itself.
template <typename Scalar>
Scalar regression_loss(const PolyCurve<Scalar>& pred, const Polyline<Scalar>& target,
                       const Coeffs<Scalar>& lambdas) {
  if (target.rows() == 0) throw ParameterError("regression_loss on an empty polyline");
  if (lambdas.size() != target.rows()) {
    throw ParameterError("lambda count does not match target point count");
  }
  Scalar sum = 0;
  for (Eigen::Index i = 0; i < target.rows(); ++i) {
    sum += (pred(lambdas(i)) - target.row(i).transpose()).squaredNorm();
  }
  return std::sqrt(sum / Scalar(target.rows()));
}

/// Gradient of regression_loss with respect to the prediction coefficients.
/// Zero at an exact interpolant, where the RMS is not differentiable.
template <typename Scalar>
CoeffGradient<Scalar> regression_loss_grad(const PolyCurve<Scalar>& pred,
                                           const Polyline<Scalar>& target,
                                           const Coeffs<Scalar>& lambdas) {
  const Scalar rms = regression_loss(pred, target, lambdas);
  const auto design = vandermonde(lambdas, pred.degree());
  CoeffGradient<Scalar> g{Coeffs<Scalar>::Zero(pred.dim()), Coeffs<Scalar>::Zero(pred.dim())};
  if (rms == Scalar(0)) return g;
  const Scalar scale = Scalar(1) / (Scalar(target.rows()) * rms);
  g.du = scale * (design.transpose() * (design * pred.u() - target.col(0)));
  g.dv = scale * (design.transpose() * (design * pred.v() - target.col(1)));
  return g;
}

/// RMS over coefficients of pred - target (both axes).
template <typename Scalar>
Scalar coeff_rms_loss(const PolyCurve<Scalar>& pred, const PolyCurve<Scalar>& target) {
  const auto [p, t] = detail::common_dim(pred, target);
  const Scalar sq = (p.u() - t.u()).squaredNorm() + (p.v() - t.v()).squaredNorm();
  return std::sqrt(sq / Scalar(2 * p.dim()));
}

template <typename Scalar>
CoeffGradient<Scalar> coeff_rms_loss_grad(const PolyCurve<Scalar>& pred,
                                          const PolyCurve<Scalar>& target) {
  const auto [p, t] = detail::common_dim(pred, target);
  const Scalar rms = coeff_rms_loss(p, t);
  if (rms == Scalar(0)) {
    return {Coeffs<Scalar>::Zero(p.dim()), Coeffs<Scalar>::Zero(p.dim())};
  }
  const Scalar scale = Scalar(1) / (Scalar(2 * p.dim()) * rms);
  return {scale * (p.u() - t.u()), scale * (p.v() - t.v())};
}

/// Binary cross-entropy of a single confidence against a match flag.
template <typename Scalar>
Scalar cls_loss(Scalar confidence, bool is_match) {
  const Scalar eps = Scalar(kConfidenceEpsilon);
  const Scalar c = std::clamp(confidence, eps, Scalar(1) - eps);
  return is_match ? -std::log(c) : -std::log(Scalar(1) - c);
}

/// Geometric energy plus classification loss for a prediction treated as a
/// match of `target`.
template <typename Scalar>
PairLoss<Scalar> pair_cost(const Prediction<Scalar>& pred, const PolyCurve<Scalar>& target,
                           bool is_match = true) {
  const Scalar poly = poly_opt_loss(pred.curve, target);
  const Scalar cls = cls_loss(pred.confidence, is_match);
  return {poly, cls, poly + cls};
}

}  // namespace polyrow
