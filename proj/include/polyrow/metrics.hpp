#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "polyrow/error.hpp"
#include "polyrow/geometry.hpp"
#include "polyrow/loss.hpp"

namespace polyrow {

/// Cost charged for every unmatched prediction or target in MPD, and for a
/// missing predicted ego boundary in LPD.
inline constexpr double kMissPenalty = 2.0;
/// lambda samples for the MPD trapezoid (step 0.01).
inline constexpr int kMpdSamples = 101;
/// lambda samples along a target boundary in LPD.
inline constexpr int kLpdSamples = 100;
/// Predictions below this confidence are ignored by every metric.
inline constexpr double kDefaultConfidenceThreshold = 0.5;
/// A ground-truth y just beyond a curve's v-range snaps to the nearest end if
/// it is within this many pixels.
inline constexpr double kEndpointSnapPx = 5.0;

/// Everything needed to score one image.
struct ImageEval {
  std::vector<PolyCurved> targets;
  /// Normalized label points of each target row, parallel to `targets`.
  std::vector<Polylined> target_points;
  std::vector<Predictiond> predictions;
  double width = 1.0;
  double height = 1.0;
  double confidence_threshold = kDefaultConfidenceThreshold;

  /// Predictions with confidence >= confidence_threshold, in input order.
  std::vector<Predictiond> positives() const;
};

enum class MpdMatching { Greedy, Hungarian };

/// Trapezoid integral of the squared distance between two curves over
/// kMpdSamples equally spaced lambda values.
double curve_distance(const PolyCurved& a, const PolyCurved& b);

double mean_poly_distance(const ImageEval& image, MpdMatching matching = MpdMatching::Greedy);
/// Per-image MPD averaged over the set; 0 for an empty set.
double mean_poly_distance(std::span<const ImageEval> images,
                          MpdMatching matching = MpdMatching::Greedy);

struct TuSimpleOptions {
  double tau_px = 20.0;
  double epsilon = 0.85;
  /// Pool FP/FN counts over the dataset instead of averaging per image.
  bool pooled = false;
};

struct TuSimpleCounts {
  std::size_t true_positives = 0;
  std::size_t predictions = 0;
  std::size_t targets = 0;
  /// Sum over targets of the accuracy of the prediction paired with it.
  double acc_sum = 0.0;
};

struct TuSimpleResult {
  double acc = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
  double f1 = 0.0;
};

/// lambda in [0, 1] where V(lambda) = v. With several roots, the one with the
/// steepest V wins. Empty when no root exists.
std::optional<double> lambda_at_v(const PolyCurved& curve, double v);

/// Fraction of label points whose horizontal pixel error against `pred` is
/// below tau_px. Points where the curve cannot be solved count as misses.
double row_accuracy(const PolyCurved& pred, const Polylined& label_points, double width,
                    double height, double tau_px);

TuSimpleCounts tusimple_image(const ImageEval& image, const TuSimpleOptions& options = {});
TuSimpleResult tusimple(std::span<const ImageEval> images, const TuSimpleOptions& options = {});

/// Correct (true-positive) predictions over all positive predictions.
double accuracy_percent(std::span<const ImageEval> images, const TuSimpleOptions& options = {});

/// F1 with precision = 1 - fpr and recall = 1 - fnr; 0 when both vanish.
double f1_from_rates(double fpr, double fnr);

class MissingBoundaryError : public ValidationError {
 public:
  explicit MissingBoundaryError(const std::string& side)
      : ValidationError("no ego-lane boundary on the " + side), side_(side) {}
  const std::string& side() const noexcept { return side_; }

 private:
  std::string side_;
};

struct EgoLane {
  PolyCurved left;
  PolyCurved right;
};

struct EgoIndices {
  std::optional<std::size_t> left;
  std::optional<std::size_t> right;
};

/// u of the curve at its point closest to the camera (largest v on [0, 1]).
double near_u(const PolyCurved& curve);

EgoIndices find_ego_boundaries(std::span<const PolyCurved> rows);
/// Throws MissingBoundaryError when one side has no row.
EgoLane ego_lane(std::span<const PolyCurved> rows);

/// v-weighted mean distance from samples on `target` to the nearest point on
/// `pred`.
double boundary_deviation(const PolyCurved& target, const PolyCurved& pred);

/// Empty when the target ego lane cannot be resolved.
std::optional<double> image_lpd(const ImageEval& image);
/// Average over images with a resolvable target ego lane; the number of
/// skipped images is written to `skipped` when given.
double lane_position_deviation(std::span<const ImageEval> images,
                               std::size_t* skipped = nullptr);

struct MetricReport {
  double mpd = 0.0;
  double ap = 0.0;
  double tusimple_acc = 0.0;
  double tusimple_fpr = 0.0;
  double tusimple_fnr = 0.0;
  double tusimple_f1 = 0.0;
  double lpd = 0.0;
  std::size_t n_images = 0;
  std::size_t n_targets = 0;
  std::size_t n_predictions = 0;
  std::size_t n_ego_skipped = 0;
};

struct EvalOptions {
  TuSimpleOptions tusimple;
  MpdMatching mpd_matching = MpdMatching::Greedy;
};

MetricReport evaluate(std::span<const ImageEval> images, const EvalOptions& options = {});

nlohmann::ordered_json to_json(const MetricReport& report);
std::string csv_header();
std::string to_csv(const MetricReport& report);

}  // namespace polyrow
