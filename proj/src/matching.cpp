#include "polyrow/matching.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace polyrow {

namespace {

// Two assignment totals closer than this (relative) are considered tied.
constexpr double kTieTolerance = 1e-12;

double tie_slack(double best) { return kTieTolerance * (1.0 + std::abs(best)); }

// Left fold over targets in index order, so equal pair lists always give
// bit-identical totals regardless of which solver produced them.
double sum_cost(const Eigen::MatrixXd& a, const std::vector<int>& row_to_col) {
  double total = 0.0;
  for (std::size_t i = 0; i < row_to_col.size(); ++i) {
    total += a(static_cast<Eigen::Index>(i), row_to_col[i]);
  }
  return total;
}

// Shortest-augmenting-path Hungarian method for rows() <= cols(), O(n^2 m).
// Returns the column assigned to each row.
std::vector<int> solve_raw(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  if (n == 0) return {};
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // 1-based; index 0 is the virtual column that roots each augmenting search.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  }
  return row_to_col;
}

Assignment make_assignment(const Eigen::MatrixXd& a, const std::vector<int>& row_to_col) {
  Assignment out;
  std::vector<char> taken(static_cast<std::size_t>(a.cols()), 0);
  for (std::size_t i = 0; i < row_to_col.size(); ++i) {
    out.pairs.emplace_back(static_cast<int>(i), row_to_col[i]);
    taken[static_cast<std::size_t>(row_to_col[i])] = 1;
  }
  out.total_cost = sum_cost(a, row_to_col);
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    if (!taken[static_cast<std::size_t>(j)]) out.unmatched_predictions.push_back(static_cast<int>(j));
  }
  return out;
}

}  // namespace

CostMatrix::CostMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
  if (entries_.rows() > entries_.cols()) {
    throw ParameterError("cost matrix has more targets (" + std::to_string(entries_.rows()) +
                         ") than predictions (" + std::to_string(entries_.cols()) + ")");
  }
  if (!entries_.allFinite()) throw ParameterError("cost matrix entries must be finite");
  if (entries_.size() > 0 && entries_.minCoeff() < 0.0) {
    throw ParameterError("cost matrix entries must be non-negative");
  }
}

std::vector<int> Assignment::target_to_prediction() const {
  std::vector<int> out(pairs.size());
  for (const auto& [t, p] : pairs) out[static_cast<std::size_t>(t)] = p;
  return out;
}

CostMatrix build_cost_matrix(std::span<const PolyCurved> targets,
                             std::span<const Predictiond> preds, MatchCost mode) {
  if (targets.empty()) throw ParameterError("build_cost_matrix needs at least one target");
  if (preds.size() < targets.size()) {
    throw ParameterError("insufficient predictions: " + std::to_string(preds.size()) +
                         " for " + std::to_string(targets.size()) + " targets");
  }
  Eigen::MatrixXd entries(static_cast<Eigen::Index>(targets.size()),
                          static_cast<Eigen::Index>(preds.size()));
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (std::size_t j = 0; j < preds.size(); ++j) {
      double cost = poly_opt_loss(preds[j].curve, targets[i]);
      if (mode == MatchCost::PolyAndCls) cost += cls_loss(preds[j].confidence, true);
      entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cost;
    }
  }
  return CostMatrix(std::move(entries));
}

Assignment hungarian(const CostMatrix& costs) {
  const Eigen::MatrixXd& a = costs.entries();
  const Eigen::Index n = a.rows();
  const Eigen::Index m = a.cols();
  std::vector<int> sigma = solve_raw(a);
  const double best = sum_cost(a, sigma);
  const double slack = tie_slack(best);

  // Walk targets in order; for each, move to the smallest column that still
  // admits an optimal completion of the remaining targets.
  std::vector<char> used(static_cast<std::size_t>(m), 0);
  double prefix = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    for (int j = 0; j < sigma[si]; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      std::vector<Eigen::Index> rest_cols;
      for (Eigen::Index c = 0; c < m; ++c) {
        if (!used[static_cast<std::size_t>(c)] && c != j) rest_cols.push_back(c);
      }
      const Eigen::Index rest_rows = n - i - 1;
      Eigen::MatrixXd sub(rest_rows, static_cast<Eigen::Index>(rest_cols.size()));
      for (Eigen::Index r = 0; r < rest_rows; ++r) {
        for (std::size_t c = 0; c < rest_cols.size(); ++c) {
          sub(r, static_cast<Eigen::Index>(c)) = a(i + 1 + r, rest_cols[c]);
        }
      }
      const std::vector<int> completion = solve_raw(sub);
      const double candidate = prefix + a(i, j) + sum_cost(sub, completion);
      if (candidate <= best + slack) {
        sigma[si] = j;
        for (Eigen::Index r = 0; r < rest_rows; ++r) {
          sigma[static_cast<std::size_t>(i + 1 + r)] = static_cast<int>(
              rest_cols[static_cast<std::size_t>(completion[static_cast<std::size_t>(r)])]);
        }
        break;
      }
    }
    used[static_cast<std::size_t>(sigma[si])] = 1;
    prefix += a(i, sigma[si]);
  }
  return make_assignment(a, sigma);
}

Assignment brute_force_match(const CostMatrix& costs) {
  const Eigen::MatrixXd& a = costs.entries();
  const auto n = static_cast<std::size_t>(a.rows());
  const auto m = static_cast<std::size_t>(a.cols());
  if (a.rows() > kBruteForceMaxTargets) {
    throw ParameterError("brute_force_match supports at most " +
                         std::to_string(kBruteForceMaxTargets) + " targets, got " +
                         std::to_string(n));
  }

  std::vector<int> current(n, -1);
  std::vector<char> used(m, 0);
  double best = std::numeric_limits<double>::infinity();

  // Pass one finds the optimum; pass two returns the first assignment (in
  // lexicographic order) within tie slack of it.
  auto search = [&](auto&& self, std::size_t row, double prefix, double bound,
                    std::vector<int>* found) -> bool {
    if (row == n) {
      if (found == nullptr) {
        best = std::min(best, prefix);
        return false;
      }
      if (prefix <= bound) {
        *found = current;
        return true;
      }
      return false;
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (used[j]) continue;
      used[j] = 1;
      current[row] = static_cast<int>(j);
      const bool done = self(self, row + 1,
                             prefix + a(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)),
                             bound, found);
      used[j] = 0;
      if (done) return true;
    }
    return false;
  };

  search(search, 0, 0.0, 0.0, nullptr);
  if (n == 0) return make_assignment(a, {});
  std::vector<int> chosen;
  search(search, 0, 0.0, best + tie_slack(best), &chosen);
  return make_assignment(a, chosen);
}

}  // namespace polyrow
