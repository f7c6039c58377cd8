#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "polyrow/geometry.hpp"
#include "polyrow/loss.hpp"

namespace polyrow {

/// Largest target count brute_force_match will enumerate.
inline constexpr int kBruteForceMaxTargets = 7;

/// Targets are rows, predictions are columns, rows() <= cols().
/// Entries are finite and non-negative.
class CostMatrix {
 public:
  CostMatrix() = default;
  explicit CostMatrix(Eigen::MatrixXd entries);

  Eigen::Index rows() const noexcept { return entries_.rows(); }
  Eigen::Index cols() const noexcept { return entries_.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }
  const Eigen::MatrixXd& entries() const noexcept { return entries_; }

 private:
  Eigen::MatrixXd entries_;
};

/// One-to-one map of every target to a distinct prediction.
struct Assignment {
  /// (target, prediction), sorted by target index.
  std::vector<std::pair<int, int>> pairs;
  double total_cost = 0.0;
  /// Ascending indices of predictions not used by any pair.
  std::vector<int> unmatched_predictions;

  /// prediction index for each target.
  std::vector<int> target_to_prediction() const;
};

/// Which terms enter the matching cost.
enum class MatchCost {
  PolyAndCls,  ///< poly_opt_loss + cls_loss(confidence, true)
  PolyOnly,
};

/// entry(i, j) = poly_opt_loss(preds[j], targets[i]) [+ -log(conf_j)].
/// Throws ParameterError when there are no targets or fewer predictions than
/// targets.
CostMatrix build_cost_matrix(std::span<const PolyCurved> targets,
                             std::span<const Predictiond> preds,
                             MatchCost mode = MatchCost::PolyAndCls);

/// Minimum-cost assignment (Hungarian method with row/column potentials).
/// Among equal-cost optima the lexicographically smallest pair list wins.
Assignment hungarian(const CostMatrix& costs);

/// Exhaustive search over all injective assignments, same tie-break.
/// Throws ParameterError above kBruteForceMaxTargets targets.
Assignment brute_force_match(const CostMatrix& costs);

}  // namespace polyrow
