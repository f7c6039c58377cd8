#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "polyrow/data.hpp"
#include "polyrow/geometry.hpp"
#include "polyrow/loss.hpp"
#include "polyrow/metrics.hpp"

namespace polyrow {

/// Geometric supervision used while fitting proposals.
enum class LossKind { PolyOpt, Regression };

/// Shape of the regression baseline.
enum class RegressionForm {
  PerPoint,        ///< RMS point distance at the labels' chord lambdas
  PerCoefficient,  ///< RMS difference against the fitted label coefficients
  PerPointSquared, ///< mean squared point distance (smooth at the optimum)
};

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);
std::string to_string(RegressionForm form);
RegressionForm regression_form_from_string(const std::string& name);

/// Total per-image loss above which a fit is declared divergent.
inline constexpr double kDivergenceLimit = 1e6;

struct FitConfig {
  LossKind loss_kind = LossKind::PolyOpt;
  RegressionForm regression_form = RegressionForm::PerPoint;
  double learning_rate = 0.3;
  int iterations = 3000;
  /// Number of proposals M.
  int m = 8;
  std::uint64_t seed = 1;
  double cls_weight = 1.0;
  int degree = kDefaultDegree;
  /// Include -log(confidence) in the matching cost.
  bool match_with_cls = true;
};

/// Throws ParameterError for out-of-range fields.
void validate(const FitConfig& config);

struct Proposal {
  PolyCurved curve;
  double logit = 0.0;

  double confidence() const;
};

struct ProposalSet {
  std::vector<Proposal> proposals;

  std::size_t m() const noexcept { return proposals.size(); }
  std::vector<Predictiond> predictions() const;
};

/// M vertical lines with intercepts evenly spaced in [0.1, 0.9] (0.5 for a
/// single proposal), nudged by at most 0.01 from a stream seeded by
/// config.seed and the image id; logits start at 0.
ProposalSet init_proposals(const FitConfig& config, const AnnotatedImage& image);

struct FitResult {
  ProposalSet proposals;
  /// Total loss (matched geometric terms + weighted BCE) before each step.
  std::vector<double> trace;
  /// Target-to-proposal pairs of the last iteration.
  std::vector<std::pair<int, int>> last_pairs;
};

/// Full-batch gradient descent of the proposals onto the image's rows.
/// Throws DivergenceError when the loss exceeds kDivergenceLimit or turns
/// non-finite.
FitResult fit_image(const AnnotatedImage& image, const FitConfig& config);

struct StudyConfig {
  FitConfig fit;
  std::vector<LossKind> loss_kinds{LossKind::PolyOpt, LossKind::Regression};
  std::vector<std::uint64_t> seeds{1};
  /// Step size used for the regression runs instead of fit.learning_rate.
  std::optional<double> regression_learning_rate;
  EvalOptions eval;
};

struct StudyRecord {
  LossKind loss_kind;
  std::uint64_t seed;
  double mpd;
  double ap;
};

struct StudySummary {
  LossKind loss_kind;
  double mpd_mean, mpd_std, ap_mean, ap_std;
};

struct StudyReport {
  /// Ordered by loss kind (as configured), then seed.
  std::vector<StudyRecord> records;

  std::vector<StudySummary> summaries() const;
};

/// Fits every noisy image under each loss kind and seed, then scores the
/// confident proposals against the clean labels.
StudyReport run_loss_study(const SyntheticDataset& data, const StudyConfig& config);

/// Builds the metric input for one image from its labels and predictions.
ImageEval make_image_eval(const AnnotatedImage& labels, std::vector<Predictiond> predictions,
                          int degree, double threshold = kDefaultConfidenceThreshold);

nlohmann::ordered_json to_json(const StudyReport& report);
std::string to_csv(const StudyReport& report);
std::string summary_line(const StudySummary& summary);

}  // namespace polyrow
