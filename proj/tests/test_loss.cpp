#include <doctest.h>

#include <cmath>
#include <functional>

#include "polyrow/loss.hpp"
#include "support.hpp"

using namespace polyrow;
using polyrow::test::points;

namespace {

// Central differences of f over the stacked (u, v) coefficients of `at`.
CoeffGradientd numeric_grad(const std::function<double(const PolyCurved&)>& f,
                            const PolyCurved& at, double step) {
  CoeffGradientd g{Coeffsd::Zero(at.dim()), Coeffsd::Zero(at.dim())};
  for (int axis = 0; axis < 2; ++axis) {
    for (int i = 0; i < at.dim(); ++i) {
      Coeffsd u = at.u(), v = at.v();
      Coeffsd& c = axis == 0 ? u : v;
      c(i) += step;
      const double plus = f(PolyCurved(u, v));
      c(i) -= 2 * step;
      const double minus = f(PolyCurved(u, v));
      (axis == 0 ? g.du : g.dv)(i) = (plus - minus) / (2 * step);
    }
  }
  return g;
}

double relative_error(const CoeffGradientd& a, const CoeffGradientd& b) {
  const double diff = std::sqrt((a.du - b.du).squaredNorm() + (a.dv - b.dv).squaredNorm());
  const double scale = std::sqrt(b.du.squaredNorm() + b.dv.squaredNorm());
  return diff / std::max(scale, 1e-12);
}

PolyCurved error_curve(std::initializer_list<double> eu, std::initializer_list<double> ev) {
  return PolyCurved(eu, ev);
}

}  // namespace

TEST_SUITE("loss") {

TEST_CASE("hilbert_matrix examples") {
  CHECK(hilbert_matrix<double>(1)(0, 0) == 1.0);
  const auto& a2 = hilbert_matrix<double>(2);
  CHECK(a2(0, 1) == 0.5);
  CHECK(a2(1, 1) == 1.0 / 3.0);
  const auto& a3 = hilbert_matrix<double>(3);
  CHECK(a3(0, 2) == 1.0 / 3.0);
  CHECK(a3(1, 2) == 0.25);
  CHECK(a3(2, 2) == 0.2);
  CHECK_THROWS_AS(hilbert_matrix<double>(0), ParameterError);
  CHECK_THROWS_AS(hilbert_matrix<double>(7), ParameterError);
}

TEST_CASE("hilbert_matrix is symmetric positive definite and the monomial Gram matrix") {
  for (int d = 1; d <= kMaxDegree + 1; ++d) {
    const auto& a = hilbert_matrix<double>(d);
    CHECK(a == a.transpose());
    CHECK(Eigen::LLT<Eigen::MatrixXd>(a).info() == Eigen::Success);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        const PolyCurved pi(Coeffsd::Unit(d, i), Coeffsd::Zero(d));
        const PolyCurved pj(Coeffsd::Unit(d, j), Coeffsd::Zero(d));
        // <l^i, l^j> via the polarisation identity on the trapezoid oracle.
        const PolyCurved sum(pi.u() + pj.u(), Coeffsd::Zero(d));
        const PolyCurved zero(Coeffsd::Zero(d), Coeffsd::Zero(d));
        const double gram = 0.5 * (test::trapezoid_sq_distance(sum, zero, 20000) -
                                   test::trapezoid_sq_distance(pi, zero, 20000) -
                                   test::trapezoid_sq_distance(pj, zero, 20000));
        CHECK(std::abs(gram - a(i, j)) < 1e-7);
      }
    }
  }
}

TEST_CASE("poly_opt_loss examples") {
  const PolyCurved zero({0, 0, 0}, {0, 0, 0});
  const PolyCurved c({0.1, 0.4, 0.2}, {0.0, 1.0, -0.1});
  CHECK(poly_opt_loss(c, c) == 0.0);
  CHECK(poly_opt_loss(error_curve({1, 0, 0}, {0, 0, 0}), zero) == doctest::Approx(1.0));
  CHECK(poly_opt_loss(error_curve({0, 1, 0}, {0, 1, 0}), zero) == doctest::Approx(2.0 / 3.0));
  CHECK(std::abs(test::trapezoid_sq_distance(error_curve({1, 0, 0}, {0, 0, 0}), zero, 100000) -
                 1.0) < 1e-8);
  CHECK(std::abs(test::trapezoid_sq_distance(error_curve({0, 1, 0}, {0, 1, 0}), zero, 100000) -
                 2.0 / 3.0) < 1e-8);
}

TEST_CASE("poly_opt_loss pads mixed degrees") {
  const PolyCurved lin({0.2, 0.1}, {0, 1});
  const PolyCurved quad({0.2, 0.1, 0.0}, {0, 1, 0});
  CHECK(poly_opt_loss(lin, quad) == 0.0);
  const PolyCurved cubic({0.2, 0.1, 0.0, 0.3}, {0, 1, 0, 0});
  CHECK(std::abs(poly_opt_loss(lin, cubic) - test::trapezoid_sq_distance(lin, cubic, 100000)) <
        1e-8);
}

TEST_CASE("poly_opt_loss properties on random pairs") {
  for (int trial = 0; trial < 300; ++trial) {
    const int k = test::uniform_int(1, 3);
    const PolyCurved p = test::random_curve(k);
    const PolyCurved t = test::random_curve(k);
    const double l = poly_opt_loss(p, t);
    CHECK(l > 0.0);
    CHECK(l == poly_opt_loss(t, p));
    const double c = test::uniform(-2, 2);
    Coeffsd pu = p.u(), tu = t.u();
    pu(0) += c;
    tu(0) += c;
    CHECK(std::abs(poly_opt_loss(PolyCurved(pu, p.v()), PolyCurved(tu, t.v())) - l) <
          1e-12 * (1 + l));
    CHECK(poly_opt_loss(p, p) == 0.0);
  }
}

TEST_CASE("poly_opt_loss_grad examples and finite differences") {
  const PolyCurved zero2({0, 0}, {0, 0});
  const CoeffGradientd g = poly_opt_loss_grad(error_curve({1, 0}, {0, 0}), zero2);
  CHECK(g.du(0) == doctest::Approx(2.0));
  CHECK(g.du(1) == doctest::Approx(1.0));
  CHECK(g.dv.isZero());

  const PolyCurved c({0.1, 0.4, 0.2}, {0.0, 1.0, -0.1});
  const CoeffGradientd same = poly_opt_loss_grad(c, c);
  CHECK(same.du.isZero());
  CHECK(same.dv.isZero());

  for (int trial = 0; trial < 100; ++trial) {
    const PolyCurved p = test::random_curve(2);
    const PolyCurved t = test::random_curve(2);
    const auto f = [&](const PolyCurved& x) { return poly_opt_loss(x, t); };
    CHECK(relative_error(poly_opt_loss_grad(p, t), numeric_grad(f, p, 1e-5)) < 1e-6);
  }
}

TEST_CASE("regression_loss examples") {
  const Polylined pts = points({{0.1, 0.1}, {0.3, 0.3}, {0.9, 0.9}});
  CHECK(regression_loss(PolyCurved({0, 1}, {0, 1}), pts, pts.col(0).eval()) == 0.0);
  CHECK(regression_loss(PolyCurved({0.0}, {0.0}), points({{0.3, 0.4}}),
                        Coeffsd(Coeffsd::Zero(1))) == doctest::Approx(0.5));
  CHECK(regression_loss(PolyCurved({0, 1}, {0, 1}), points({{0, 0.1}, {1, 0.9}}),
                        (Coeffsd(2) << 0, 1).finished()) == doctest::Approx(0.1));
  CHECK_THROWS_AS(regression_loss(PolyCurved({0, 1}, {0, 1}), Polylined(0, 2), Coeffsd(0)),
                  ParameterError);
  CHECK_THROWS_AS(regression_loss(PolyCurved({0, 1}, {0, 1}), pts, Coeffsd(Coeffsd::Zero(2))),
                  ParameterError);
}

TEST_CASE("regression gradients match finite differences") {
  for (int trial = 0; trial < 100; ++trial) {
    const int n = test::uniform_int(4, 12);
    Polylined pts(n, 2);
    for (int i = 0; i < n; ++i) pts.row(i) << test::uniform(0, 1), test::uniform(0, 1);
    pts = sort_by_v(pts);
    const Coeffsd l = chord_lambda(pts);
    const PolyCurved p = test::random_curve(2);
    const auto f = [&](const PolyCurved& x) { return regression_loss(x, pts, l); };
    CHECK(relative_error(regression_loss_grad(p, pts, l), numeric_grad(f, p, 1e-5)) < 1e-6);

    const PolyCurved t = test::random_curve(2);
    const auto g = [&](const PolyCurved& x) { return coeff_rms_loss(x, t); };
    CHECK(relative_error(coeff_rms_loss_grad(p, t), numeric_grad(g, p, 1e-5)) < 1e-6);
  }
}

TEST_CASE("regression gradient vanishes at an exact fit") {
  const PolyCurved c({0.2, 0.3}, {0.1, 0.8});
  const Coeffsd l = Coeffsd::LinSpaced(5, 0, 1);
  const Polylined pts = sample_equidistant(c, 5);
  const CoeffGradientd g = regression_loss_grad(c, pts, l);
  CHECK(g.du.isZero());
  CHECK(g.dv.isZero());
}

TEST_CASE("cls_loss examples") {
  CHECK(cls_loss(1.0 - 1e-7, true) == doctest::Approx(1e-7).epsilon(1e-3));
  CHECK(cls_loss(0.5, true) == doctest::Approx(std::log(2.0)));
  CHECK(cls_loss(0.5, false) == doctest::Approx(std::log(2.0)));
  CHECK(cls_loss(0.9, false) == doctest::Approx(-std::log(0.1)));
  CHECK(std::isfinite(cls_loss(0.0, true)));
  CHECK(std::isfinite(cls_loss(1.0, false)));
  CHECK(cls_loss(0.0, true) == doctest::Approx(-std::log(1e-7)));
}

TEST_CASE("pair_cost examples") {
  const PolyCurved t({0.3, 0.1, 0.0}, {0.0, 1.0, 0.0});
  const PairLossd exact = pair_cost(Predictiond{t, 1.0}, t);
  CHECK(exact.total < 1e-6);
  const PairLossd half = pair_cost(Predictiond{t, 0.5}, t);
  CHECK(half.total == doctest::Approx(std::log(2.0)));
  const PolyCurved off({1.3, 0.1, 0.0}, {0.0, 1.0, 0.0});
  const PairLossd shifted = pair_cost(Predictiond{off, 0.5}, t);
  CHECK(shifted.poly == doctest::Approx(1.0));
  CHECK(shifted.total == doctest::Approx(1.0 + std::log(2.0)));
  CHECK(shifted.total == shifted.poly + shifted.cls);
}

}  // TEST_SUITE
