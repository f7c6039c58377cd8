// Acceptance gate: one PASS/FAIL line per criterion. Tolerances and time
// limits are fixed here and must not be tuned to the results.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

#include "polyrow/cli.hpp"
#include "polyrow/data.hpp"
#include "polyrow/matching.hpp"
#include "polyrow/metrics.hpp"
#include "polyrow/optim.hpp"
#include "support.hpp"

using namespace polyrow;
namespace t = polyrow::test;

namespace {

constexpr double kLossOracleTol = 1e-8;
constexpr double kGradTol = 1e-6;
constexpr double kFdStep = 1e-5;
constexpr double kRecoveryTol = 1e-9;
constexpr double kRotationTol = 1e-12;
constexpr double kCrossModuleTol = 1e-4;
constexpr double kCleanMpdTol = 1e-3;
constexpr double kCleanApMin = 0.95;
constexpr double kWinShareMin = 0.8;

struct Outcome {
  bool pass;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int failures = 0;

void report(int id, const std::string& name, double limit_s,
            const std::function<Outcome()>& criterion) {
  const Stopwatch clock;
  Outcome o;
  try {
    o = criterion();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double elapsed = clock.seconds();
  const bool in_time = limit_s <= 0.0 || elapsed < limit_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  const std::string limit = limit_s > 0.0 ? fmt::format(" (limit {:.0f} s)", limit_s) : "";
  fmt::print("{} [{}] {}: {}; {:.2f} s{}\n", pass ? "PASS" : "FAIL", id, name, o.detail, elapsed,
             limit);
  std::fflush(stdout);
}

PolyCurved curve_of_degree(int k) {
  return PolyCurved(t::random_coeffs(k + 1), t::random_coeffs(k + 1));
}

CoeffGradientd numeric_grad(const std::function<double(const PolyCurved&)>& f,
                            const PolyCurved& at) {
  CoeffGradientd g{Coeffsd::Zero(at.dim()), Coeffsd::Zero(at.dim())};
  for (int axis = 0; axis < 2; ++axis) {
    for (int i = 0; i < at.dim(); ++i) {
      Coeffsd u = at.u(), v = at.v();
      Coeffsd& c = axis == 0 ? u : v;
      c(i) += kFdStep;
      const double plus = f(PolyCurved(u, v));
      c(i) -= 2 * kFdStep;
      const double minus = f(PolyCurved(u, v));
      (axis == 0 ? g.du : g.dv)(i) = (plus - minus) / (2 * kFdStep);
    }
  }
  return g;
}

double relative_error(const CoeffGradientd& a, const CoeffGradientd& b) {
  const double diff = std::sqrt((a.du - b.du).squaredNorm() + (a.dv - b.dv).squaredNorm());
  const double scale = std::sqrt(b.du.squaredNorm() + b.dv.squaredNorm());
  return diff / std::max(scale, 1e-12);
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome analytic_loss_oracle() {
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int k = t::uniform_int(1, 3);
    const PolyCurved p = curve_of_degree(k);
    const PolyCurved q = curve_of_degree(t::uniform_int(1, 3));
    worst = std::max(worst, std::abs(poly_opt_loss(p, q) - t::trapezoid_sq_distance(p, q, 100000)));
  }
  return {worst < kLossOracleTol,
          fmt::format("1000 pairs, max |analytic - trapezoid| = {:.3e} (tol {:.0e})", worst,
                      kLossOracleTol)};
}

Outcome gradient_check() {
  double worst_poly = 0.0, worst_reg = 0.0;
  for (int i = 0; i < 200; ++i) {
    const PolyCurved p = curve_of_degree(2);
    const PolyCurved q = curve_of_degree(2);
    worst_poly = std::max(
        worst_poly, relative_error(poly_opt_loss_grad(p, q),
                                   numeric_grad([&](const PolyCurved& x) {
                                     return poly_opt_loss(x, q);
                                   }, p)));

    const int n = t::uniform_int(4, 12);
    Polylined pts(n, 2);
    for (int j = 0; j < n; ++j) pts.row(j) << t::uniform(0, 1), t::uniform(0, 1);
    pts = sort_by_v(pts);
    const Coeffsd l = chord_lambda(pts);
    worst_reg = std::max(
        worst_reg, relative_error(regression_loss_grad(p, pts, l),
                                  numeric_grad([&](const PolyCurved& x) {
                                    return regression_loss(x, pts, l);
                                  }, p)));
  }
  return {worst_poly < kGradTol && worst_reg < kGradTol,
          fmt::format("200 pairs, max rel err poly_opt {:.3e}, regression {:.3e} (tol {:.0e})",
                      worst_poly, worst_reg, kGradTol)};
}

Outcome hungarian_oracle() {
  int cost_mismatch = 0, pair_mismatch = 0;
  for (int i = 0; i < 500; ++i) {
    const int n = t::uniform_int(1, 6);
    const int m = t::uniform_int(n, 8);
    Eigen::MatrixXd e(n, m);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < m; ++c) {
        e(r, c) = i % 2 == 0 ? t::uniform_int(0, 3) : t::uniform(0.0, 10.0);
      }
    }
    const CostMatrix cost(e);
    const Assignment h = hungarian(cost);
    const Assignment b = brute_force_match(cost);
    if (h.total_cost != b.total_cost) ++cost_mismatch;
    if (h.pairs != b.pairs) ++pair_mismatch;
  }
  return {cost_mismatch == 0 && pair_mismatch == 0,
          fmt::format("500 matrices (half with integer ties), cost mismatches {}, pair mismatches {}",
                      cost_mismatch, pair_mismatch)};
}

Outcome metric_fixed_points() {
  SynthConfig config;
  config.n_images = 50;
  const SyntheticDataset data = generate_synthetic(config);
  std::vector<ImageEval> self, empty;
  std::size_t targets = 0;
  for (const auto& image : data.clean) {
    std::vector<Predictiond> preds;
    for (const auto& row : image.rows) preds.push_back({fit_polyline(row, kDefaultDegree).curve, 1.0});
    self.push_back(make_image_eval(image, preds, kDefaultDegree));
    empty.push_back(make_image_eval(image, {}, kDefaultDegree));
    targets += image.rows.size();
  }
  const MetricReport s = evaluate(self);
  const MetricReport z = evaluate(empty);
  double expected_empty = 0.0;
  for (const auto& image : data.clean) expected_empty += 2.0 * image.rows.size();
  expected_empty /= static_cast<double>(data.clean.size());
  const bool ok = s.mpd == 0.0 && s.lpd == 0.0 && s.tusimple_f1 == 1.0 &&
                  z.mpd == expected_empty && z.tusimple_fnr == 1.0;
  return {ok, fmt::format("self: mpd {} lpd {} f1 {} ({} ego-skipped); empty: mpd {} (expect {} = "
                          "2 x {} targets / 50 images) fnr {}",
                          s.mpd, s.lpd, s.tusimple_f1, s.n_ego_skipped, z.mpd, expected_empty,
                          targets, z.tusimple_fnr)};
}

Outcome loss_study_direction() {
  StudyConfig study;
  for (std::uint64_t s = 1; s <= 20; ++s) study.seeds.push_back(s);

  SynthConfig noisy_config;  // 50 images, sigma 0.02, dropout 0.2, outlier 0.1
  const StudyReport noisy = run_loss_study(generate_synthetic(noisy_config), study);
  const auto ns = noisy.summaries();
  int wins = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    if (noisy.records[i].mpd < noisy.records[20 + i].mpd) ++wins;
  }
  const double share = wins / 20.0;

  SynthConfig zero = noisy_config;
  zero.noise_sigma = 0.0;
  zero.dropout_prob = 0.0;
  zero.outlier_prob = 0.0;
  const auto cs = run_loss_study(generate_synthetic(zero), study).summaries();

  const bool direction = ns[0].mpd_mean < ns[1].mpd_mean && share >= kWinShareMin;
  bool clean_ok = true;
  for (const auto& s : cs) clean_ok = clean_ok && s.mpd_mean < kCleanMpdTol && s.ap_mean > kCleanApMin;
  return {direction && clean_ok,
          fmt::format("noisy mean mpd poly_opt {:.4f} vs regression {:.4f}, poly_opt wins {}/20 "
                      "(need {:.0f}%); zero-noise poly_opt mpd {:.2e} ap {:.3f}, regression mpd "
                      "{:.2e} ap {:.3f} (need mpd < {:.0e}, ap > {})",
                      ns[0].mpd_mean, ns[1].mpd_mean, wins, 100 * kWinShareMin, cs[0].mpd_mean,
                      cs[0].ap_mean, cs[1].mpd_mean, cs[1].ap_mean, kCleanMpdTol, kCleanApMin)};
}

Outcome parameterization_invariants() {
  int bad_bounds = 0, bad_rotation = 0, bad_recovery = 0, bad_axis = 0;
  for (int i = 0; i < 10000; ++i) {
    const int n = t::uniform_int(3, 20);
    Polylined p(n, 2);
    for (int j = 0; j < n; ++j) p.row(j) << t::uniform(0, 1), t::uniform(0, 1);
    p = sort_by_v(p);
    const Coeffsd l = chord_lambda(p);
    bool ok = l(0) == 0.0 && l(l.size() - 1) == 1.0;
    for (Eigen::Index j = 1; j < l.size(); ++j) ok = ok && l(j) > l(j - 1);
    if (!ok) ++bad_bounds;

    const Eigen::Matrix2d r = Eigen::Rotation2Dd(t::uniform(-M_PI, M_PI)).toRotationMatrix();
    const Polylined rotated = (p * r.transpose()).rowwise() + Eigen::RowVector2d(0.3, -0.2);
    if ((chord_lambda(rotated) - l).cwiseAbs().maxCoeff() > kRotationTol) ++bad_rotation;

    const int k = t::uniform_int(1, std::min(3, static_cast<int>(l.size()) - 1));
    const PolyCurved truth = curve_of_degree(k);
    Polylined data(l.size(), 2);
    for (Eigen::Index j = 0; j < l.size(); ++j) data.row(j) = truth(l(j)).transpose();
    const PolyCurved fit = fit_points(data, l, k).curve;
    if ((fit.u() - truth.u()).cwiseAbs().maxCoeff() > kRecoveryTol ||
        (fit.v() - truth.v()).cwiseAbs().maxCoeff() > kRecoveryTol) {
      ++bad_recovery;
    }

    Polylined vertical(n, 2), horizontal(n, 2);
    const double c = t::uniform(0.05, 0.95);
    for (int j = 0; j < n; ++j) {
      vertical.row(j) << c, (j + t::uniform(0.1, 0.9)) / n;
      horizontal.row(j) << (j + t::uniform(0.1, 0.9)) / n, c;
    }
    try {
      const int kk = std::min(kDefaultDegree, n - 1);
      if (fit_polyline(vertical, kk).residual > kRecoveryTol ||
          fit_polyline(sort_by_v(horizontal), kk).residual > kRecoveryTol) {
        ++bad_axis;
      }
    } catch (const Error&) {
      ++bad_axis;
    }
  }
  const bool ok = bad_bounds + bad_rotation + bad_recovery + bad_axis == 0;
  return {ok, fmt::format("10000 polylines; failures: bounds/monotone {}, rotation {}, "
                          "recovery@{:.0e} {}, vertical/horizontal {}",
                          bad_bounds, bad_rotation, kRecoveryTol, bad_recovery, bad_axis)};
}

Outcome cross_module_consistency() {
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const PolyCurved target = curve_of_degree(2);
    const PolyCurved pred(target.u() + t::random_coeffs(3, -0.2, 0.2),
                          target.v() + t::random_coeffs(3, -0.2, 0.2));
    worst = std::max(worst, std::abs(curve_distance(pred, target) - poly_opt_loss(pred, target)));
  }
  return {worst < kCrossModuleTol,
          fmt::format("100 degree-2 pairs, max |101-sample MPD - analytic| = {:.3e} (tol {:.0e})",
                      worst, kCrossModuleTol)};
}

Outcome determinism() {
  const auto root = t::scratch_dir("acceptance_determinism");
  std::ostringstream sink;
  for (const char* run : {"a", "b"}) {
    const auto dir = root / run;
    const std::vector<std::string> synth{"synth", "--n-images", "10", "--seed", "5", "--out",
                                         (dir / "synth").string()};
    const std::vector<std::string> study{"loss-study", (dir / "synth").string(), "--seeds", "2",
                                         "--iters", "300", "--seed", "5", "--out",
                                         (dir / "study").string()};
    if (run_cli(synth, sink, sink) != kExitOk || run_cli(study, sink, sink) != kExitOk) {
      return {false, "pipeline run failed: " + sink.str()};
    }
  }
  int differing = 0;
  const char* files[] = {"synth/clean.jsonl", "synth/noisy.jsonl", "synth/config.json",
                         "study/study.json", "study/study.csv"};
  for (const char* f : files) {
    const std::string a = slurp(root / "a" / f);
    if (a.empty() || a != slurp(root / "b" / f)) ++differing;
  }
  return {differing == 0, fmt::format("5 artifacts compared, {} differ", differing)};
}

}  // namespace

int main() {
  report(1, "analytic loss oracle", 10, analytic_loss_oracle);
  report(2, "gradient check", 5, gradient_check);
  report(3, "hungarian oracle", 10, hungarian_oracle);
  report(4, "metric fixed points", 10, metric_fixed_points);
  report(5, "loss-study direction", 300, loss_study_direction);
  report(6, "parameterization invariants", 30, parameterization_invariants);
  report(7, "cross-module consistency", 5, cross_module_consistency);
  report(8, "determinism", 0, determinism);
  fmt::print("{} of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
