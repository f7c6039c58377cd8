#include "polyrow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include <fmt/format.h>

#include "polyrow/matching.hpp"

namespace polyrow {

namespace {

// Cells scanned for sign changes when solving V(lambda) = v.
constexpr int kRootGrid = 64;
// Dense grid used for nearest-point queries; a multiple of the LPD sample
// spacing so target sample lambdas land exactly on grid nodes.
constexpr int kNearestGridRefine = 10;
constexpr int kNearestGrid = (kLpdSamples - 1) * kNearestGridRefine;

Coeffsd derivative(const Coeffsd& c) {
  if (c.size() <= 1) return Coeffsd::Zero(1);
  Coeffsd d(c.size() - 1);
  for (Eigen::Index i = 1; i < c.size(); ++i) d(i - 1) = static_cast<double>(i) * c(i);
  return d;
}

double horner(const Coeffsd& c, double x) { return PolyCurved::horner(c, x); }

// All roots of the polynomial `c` minus `level` in [0, 1] that show up as a
// sign change (or exact zero) on the scan grid.
std::vector<double> roots_in_unit(const Coeffsd& c, double level) {
  std::vector<double> roots;
  auto f = [&](double x) { return horner(c, x) - level; };
  double x0 = 0.0;
  double f0 = f(x0);
  if (f0 == 0.0) roots.push_back(x0);
  for (int k = 1; k <= kRootGrid; ++k) {
    const double x1 = static_cast<double>(k) / kRootGrid;
    const double f1 = f(x1);
    if (f1 == 0.0) {
      roots.push_back(x1);
    } else if (f0 != 0.0 && (f0 < 0.0) != (f1 < 0.0)) {
      double lo = x0, hi = x1, flo = f0;
      for (int it = 0; it < 100 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fm = f(mid);
        if (fm == 0.0) {
          lo = hi = mid;
          break;
        }
        if ((fm < 0.0) == (flo < 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      roots.push_back(0.5 * (lo + hi));
    }
    x0 = x1;
    f0 = f1;
  }
  return roots;
}

double squared_distance(const PolyCurved& a, const PolyCurved& b, double lambda) {
  return (a(lambda) - b(lambda)).squaredNorm();
}

}  // namespace

std::vector<Predictiond> ImageEval::positives() const {
  std::vector<Predictiond> out;
  for (const auto& p : predictions) {
    if (p.confidence >= confidence_threshold) out.push_back(p);
  }
  return out;
}

double curve_distance(const PolyCurved& a, const PolyCurved& b) {
  constexpr double kStep = 1.0 / (kMpdSamples - 1);
  double sum = 0.0;
  for (int s = 0; s < kMpdSamples; ++s) {
    const double f = squared_distance(a, b, static_cast<double>(s) * kStep);
    sum += (s == 0 || s == kMpdSamples - 1) ? 0.5 * f : f;
  }
  return sum * kStep;
}

double mean_poly_distance(const ImageEval& image, MpdMatching matching) {
  const std::vector<Predictiond> preds = image.positives();
  const std::size_t nt = image.targets.size();
  const std::size_t np = preds.size();

  Eigen::MatrixXd cost(static_cast<Eigen::Index>(nt), static_cast<Eigen::Index>(np));
  for (std::size_t t = 0; t < nt; ++t) {
    for (std::size_t p = 0; p < np; ++p) {
      cost(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(p)) =
          curve_distance(image.targets[t], preds[p].curve);
    }
  }

  double matched_cost = 0.0;
  std::size_t matched = 0;
  if (nt > 0 && np > 0) {
    if (matching == MpdMatching::Greedy) {
      std::vector<std::tuple<double, std::size_t, std::size_t>> order;
      order.reserve(nt * np);
      for (std::size_t t = 0; t < nt; ++t) {
        for (std::size_t p = 0; p < np; ++p) {
          order.emplace_back(cost(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(p)),
                             t, p);
        }
      }
      std::sort(order.begin(), order.end());
      std::vector<char> used_t(nt, 0), used_p(np, 0);
      for (const auto& [c, t, p] : order) {
        if (used_t[t] || used_p[p]) continue;
        used_t[t] = used_p[p] = 1;
        matched_cost += c;
        ++matched;
      }
    } else {
      const Eigen::MatrixXd oriented = nt <= np ? cost : Eigen::MatrixXd(cost.transpose());
      const Assignment a = hungarian(CostMatrix(oriented));
      matched_cost = a.total_cost;
      matched = a.pairs.size();
    }
  }
  const std::size_t misses = (nt - matched) + (np - matched);
  return matched_cost + kMissPenalty * static_cast<double>(misses);
}

double mean_poly_distance(std::span<const ImageEval> images, MpdMatching matching) {
  if (images.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& image : images) sum += mean_poly_distance(image, matching);
  return sum / static_cast<double>(images.size());
}

std::optional<double> lambda_at_v(const PolyCurved& curve, double v) {
  const std::vector<double> roots = roots_in_unit(curve.v(), v);
  if (roots.empty()) return std::nullopt;
  const Coeffsd dv = derivative(curve.v());
  double best = roots.front();
  double best_slope = std::abs(horner(dv, best));
  for (double r : roots) {
    const double slope = std::abs(horner(dv, r));
    if (slope > best_slope) {
      best = r;
      best_slope = slope;
    }
  }
  return best;
}

double row_accuracy(const PolyCurved& pred, const Polylined& label_points, double width,
                    double height, double tau_px) {
  if (label_points.rows() == 0) return 0.0;
  const double v_start = horner(pred.v(), 0.0);
  const double v_end = horner(pred.v(), 1.0);
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < label_points.rows(); ++i) {
    const double x_true = label_points(i, 0) * width;
    const double v_true = label_points(i, 1);
    std::optional<double> lambda = lambda_at_v(pred, v_true);
    if (!lambda) {
      const double d_start = std::abs(v_start - v_true) * height;
      const double d_end = std::abs(v_end - v_true) * height;
      if (std::min(d_start, d_end) <= kEndpointSnapPx) lambda = d_start <= d_end ? 0.0 : 1.0;
    }
    if (!lambda) continue;
    const double x_pred = horner(pred.u(), *lambda) * width;
    if (std::abs(x_pred - x_true) < tau_px) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(label_points.rows());
}

TuSimpleCounts tusimple_image(const ImageEval& image, const TuSimpleOptions& options) {
  if (image.target_points.size() != image.targets.size()) {
    throw ParameterError("ImageEval target_points must parallel targets");
  }
  const std::vector<Predictiond> preds = image.positives();
  const std::size_t nt = image.targets.size();
  const std::size_t np = preds.size();

  std::vector<std::tuple<double, std::size_t, std::size_t>> order;
  order.reserve(nt * np);
  for (std::size_t t = 0; t < nt; ++t) {
    for (std::size_t p = 0; p < np; ++p) {
      const double acc = row_accuracy(preds[p].curve, image.target_points[t], image.width,
                                      image.height, options.tau_px);
      if (acc > 0.0) order.emplace_back(-acc, t, p);
    }
  }
  std::sort(order.begin(), order.end());

  TuSimpleCounts counts;
  counts.predictions = np;
  counts.targets = nt;
  std::vector<char> used_t(nt, 0), used_p(np, 0);
  for (const auto& [neg_acc, t, p] : order) {
    if (used_t[t] || used_p[p]) continue;
    used_t[t] = used_p[p] = 1;
    counts.acc_sum += -neg_acc;
    if (-neg_acc >= options.epsilon) ++counts.true_positives;
  }
  return counts;
}

double f1_from_rates(double fpr, double fnr) {
  const double precision = 1.0 - fpr;
  const double recall = 1.0 - fnr;
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

TuSimpleResult tusimple(std::span<const ImageEval> images, const TuSimpleOptions& options) {
  TuSimpleResult result;
  if (images.empty()) return result;

  std::size_t tp = 0, preds = 0, targets = 0, images_with_targets = 0;
  double acc_sum = 0.0, fpr_sum = 0.0, fnr_sum = 0.0, acc_mean_sum = 0.0;
  for (const auto& image : images) {
    const TuSimpleCounts c = tusimple_image(image, options);
    tp += c.true_positives;
    preds += c.predictions;
    targets += c.targets;
    acc_sum += c.acc_sum;
    if (c.predictions > 0) {
      fpr_sum += static_cast<double>(c.predictions - c.true_positives) /
                 static_cast<double>(c.predictions);
    }
    if (c.targets > 0) {
      fnr_sum += static_cast<double>(c.targets - c.true_positives) /
                 static_cast<double>(c.targets);
      acc_mean_sum += c.acc_sum / static_cast<double>(c.targets);
      ++images_with_targets;
    }
  }

  if (options.pooled) {
    result.acc = targets > 0 ? acc_sum / static_cast<double>(targets) : 0.0;
    result.fpr = preds > 0 ? static_cast<double>(preds - tp) / static_cast<double>(preds) : 0.0;
    result.fnr =
        targets > 0 ? static_cast<double>(targets - tp) / static_cast<double>(targets) : 0.0;
  } else {
    const auto n = static_cast<double>(images.size());
    result.acc = images_with_targets > 0
                     ? acc_mean_sum / static_cast<double>(images_with_targets)
                     : 0.0;
    result.fpr = fpr_sum / n;
    result.fnr = fnr_sum / n;
  }
  result.f1 = f1_from_rates(result.fpr, result.fnr);
  return result;
}

double accuracy_percent(std::span<const ImageEval> images, const TuSimpleOptions& options) {
  std::size_t correct = 0, total = 0;
  for (const auto& image : images) {
    const TuSimpleCounts c = tusimple_image(image, options);
    correct += c.true_positives;
    total += c.predictions;
  }
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

double near_u(const PolyCurved& curve) {
  std::vector<double> candidates = roots_in_unit(derivative(curve.v()), 0.0);
  candidates.push_back(0.0);
  candidates.push_back(1.0);
  double best_lambda = 0.0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (double lambda : candidates) {
    const double v = horner(curve.v(), lambda);
    if (v > best_v) {
      best_v = v;
      best_lambda = lambda;
    }
  }
  return horner(curve.u(), best_lambda);
}

EgoIndices find_ego_boundaries(std::span<const PolyCurved> rows) {
  EgoIndices out;
  double left_u = -std::numeric_limits<double>::infinity();
  double right_u = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double u = near_u(rows[i]);
    if (u < 0.5) {
      if (u > left_u) {
        left_u = u;
        out.left = i;
      }
    } else if (u < right_u) {
      right_u = u;
      out.right = i;
    }
  }
  return out;
}

EgoLane ego_lane(std::span<const PolyCurved> rows) {
  const EgoIndices idx = find_ego_boundaries(rows);
  if (!idx.left) throw MissingBoundaryError("left");
  if (!idx.right) throw MissingBoundaryError("right");
  return {rows[*idx.left], rows[*idx.right]};
}

double boundary_deviation(const PolyCurved& target, const PolyCurved& pred) {
  std::vector<Point2d> grid(kNearestGrid + 1);
  for (int i = 0; i <= kNearestGrid; ++i) {
    grid[static_cast<std::size_t>(i)] = pred(static_cast<double>(i) / kNearestGrid);
  }

  double weighted = 0.0, weights = 0.0, plain = 0.0;
  for (int s = 0; s < kLpdSamples; ++s) {
    const Point2d q = target(static_cast<double>(s) / (kLpdSamples - 1));

    int best_i = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= kNearestGrid; ++i) {
      const double d = (grid[static_cast<std::size_t>(i)] - q).squaredNorm();
      if (d < best) {
        best = d;
        best_i = i;
      }
    }
    // Golden-section polish inside the neighbouring grid cells.
    double lo = static_cast<double>(std::max(best_i - 1, 0)) / kNearestGrid;
    double hi = static_cast<double>(std::min(best_i + 1, kNearestGrid)) / kNearestGrid;
    constexpr double kInvPhi = 0.6180339887498949;
    auto dist = [&](double l) { return (pred(l) - q).squaredNorm(); };
    double a = hi - kInvPhi * (hi - lo), b = lo + kInvPhi * (hi - lo);
    double fa = dist(a), fb = dist(b);
    for (int it = 0; it < 40; ++it) {
      if (fa < fb) {
        hi = b;
        b = a;
        fb = fa;
        a = hi - kInvPhi * (hi - lo);
        fa = dist(a);
      } else {
        lo = a;
        a = b;
        fa = fb;
        b = lo + kInvPhi * (hi - lo);
        fb = dist(b);
      }
    }
    best = std::min({best, fa, fb});

    const double d = std::sqrt(best);
    const double w = std::max(q(1), 0.0);
    weighted += w * d;
    weights += w;
    plain += d;
  }
  return weights > 0.0 ? weighted / weights : plain / kLpdSamples;
}

std::optional<double> image_lpd(const ImageEval& image) {
  const EgoIndices truth = find_ego_boundaries(image.targets);
  if (!truth.left || !truth.right) return std::nullopt;

  const std::vector<Predictiond> preds = image.positives();
  std::vector<PolyCurved> curves;
  curves.reserve(preds.size());
  for (const auto& p : preds) curves.push_back(p.curve);
  const EgoIndices guess = find_ego_boundaries(curves);

  auto side = [&](std::size_t target_idx, const std::optional<std::size_t>& pred_idx) {
    if (!pred_idx) return kMissPenalty;
    return boundary_deviation(image.targets[target_idx], curves[*pred_idx]);
  };
  return 0.5 * (side(*truth.left, guess.left) + side(*truth.right, guess.right));
}

double lane_position_deviation(std::span<const ImageEval> images, std::size_t* skipped) {
  double sum = 0.0;
  std::size_t counted = 0, missing = 0;
  for (const auto& image : images) {
    if (const auto lpd = image_lpd(image)) {
      sum += *lpd;
      ++counted;
    } else {
      ++missing;
    }
  }
  if (skipped != nullptr) *skipped = missing;
  return counted > 0 ? sum / static_cast<double>(counted) : 0.0;
}

MetricReport evaluate(std::span<const ImageEval> images, const EvalOptions& options) {
  MetricReport report;
  report.n_images = images.size();
  for (const auto& image : images) {
    report.n_targets += image.targets.size();
    report.n_predictions += image.positives().size();
  }
  report.mpd = mean_poly_distance(images, options.mpd_matching);
  report.ap = accuracy_percent(images, options.tusimple);
  const TuSimpleResult ts = tusimple(images, options.tusimple);
  report.tusimple_acc = ts.acc;
  report.tusimple_fpr = ts.fpr;
  report.tusimple_fnr = ts.fnr;
  report.tusimple_f1 = ts.f1;
  report.lpd = lane_position_deviation(images, &report.n_ego_skipped);
  return report;
}

nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["mpd"] = r.mpd;
  j["ap"] = r.ap;
  j["tusimple_acc"] = r.tusimple_acc;
  j["tusimple_fpr"] = r.tusimple_fpr;
  j["tusimple_fnr"] = r.tusimple_fnr;
  j["tusimple_f1"] = r.tusimple_f1;
  j["lpd"] = r.lpd;
  j["n_images"] = r.n_images;
  j["n_targets"] = r.n_targets;
  j["n_predictions"] = r.n_predictions;
  j["n_ego_skipped"] = r.n_ego_skipped;
  return j;
}

std::string csv_header() {
  return "mpd,ap,tusimple_acc,tusimple_fpr,tusimple_fnr,tusimple_f1,lpd,n_images,n_targets,"
         "n_predictions,n_ego_skipped";
}

std::string to_csv(const MetricReport& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{}", r.mpd, r.ap, r.tusimple_acc,
                     r.tusimple_fpr, r.tusimple_fnr, r.tusimple_f1, r.lpd, r.n_images,
                     r.n_targets, r.n_predictions, r.n_ego_skipped);
}

}  // namespace polyrow
