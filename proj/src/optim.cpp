#include "polyrow/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "polyrow/matching.hpp"

namespace polyrow {

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// A label row prepared once per fit.
struct Target {
  Polylined points;
  Coeffsd lambdas;
  PolyCurved curve;
};

double geometric_loss(const FitConfig& config, const PolyCurved& pred, const Target& t) {
  if (config.loss_kind == LossKind::PolyOpt) return poly_opt_loss(pred, t.curve);
  if (config.regression_form == RegressionForm::PerCoefficient) {
    return coeff_rms_loss(pred, t.curve);
  }
  const double rms = regression_loss(pred, t.points, t.lambdas);
  if (config.regression_form == RegressionForm::PerPointSquared) return rms * rms;
  return rms;
}

CoeffGradientd geometric_grad(const FitConfig& config, const PolyCurved& pred, const Target& t) {
  if (config.loss_kind == LossKind::PolyOpt) return poly_opt_loss_grad(pred, t.curve);
  if (config.regression_form == RegressionForm::PerCoefficient) {
    return coeff_rms_loss_grad(pred, t.curve);
  }
  CoeffGradientd g = regression_loss_grad(pred, t.points, t.lambdas);
  if (config.regression_form == RegressionForm::PerPointSquared) {
    const double scale = 2.0 * regression_loss(pred, t.points, t.lambdas);
    g.du *= scale;
    g.dv *= scale;
  }
  return g;
}

double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

std::string to_string(LossKind kind) {
  return kind == LossKind::PolyOpt ? "poly_opt" : "regression";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "poly_opt") return LossKind::PolyOpt;
  if (name == "regression") return LossKind::Regression;
  throw ParameterError("unknown loss kind '" + name + "'");
}

std::string to_string(RegressionForm form) {
  switch (form) {
    case RegressionForm::PerPoint: return "per_point";
    case RegressionForm::PerCoefficient: return "per_coefficient";
    case RegressionForm::PerPointSquared: return "per_point_squared";
  }
  return "per_point";
}

RegressionForm regression_form_from_string(const std::string& name) {
  if (name == "per_point") return RegressionForm::PerPoint;
  if (name == "per_coefficient") return RegressionForm::PerCoefficient;
  if (name == "per_point_squared") return RegressionForm::PerPointSquared;
  throw ParameterError("unknown regression form '" + name + "'");
}

void validate(const FitConfig& c) {
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    throw ParameterError("learning_rate must be > 0");
  }
  if (c.iterations < 0) throw ParameterError("iterations must be >= 0");
  if (c.m < 1) throw ParameterError("m must be >= 1");
  if (c.degree < 1 || c.degree > kMaxDegree) {
    throw ParameterError(fmt::format("degree must be in [1, {}]", kMaxDegree));
  }
  if (!(c.cls_weight >= 0.0)) throw ParameterError("cls_weight must be >= 0");
}

double Proposal::confidence() const { return logistic(logit); }

std::vector<Predictiond> ProposalSet::predictions() const {
  std::vector<Predictiond> out;
  out.reserve(proposals.size());
  for (const auto& p : proposals) out.push_back({p.curve, p.confidence()});
  return out;
}

ProposalSet init_proposals(const FitConfig& config, const AnnotatedImage& image) {
  validate(config);
  std::mt19937_64 rng(config.seed ^ fnv1a(image.id));
  std::uniform_real_distribution<double> nudge(-0.01, 0.01);

  ProposalSet set;
  const int m = config.m;
  for (int j = 0; j < m; ++j) {
    const double base = m == 1 ? 0.5 : 0.1 + 0.8 * j / (m - 1);
    Coeffsd u = Coeffsd::Zero(config.degree + 1);
    Coeffsd v = Coeffsd::Zero(config.degree + 1);
    u(0) = base + nudge(rng);
    v(1) = 1.0;
    set.proposals.push_back({PolyCurved(u, v), 0.0});
  }
  return set;
}

FitResult fit_image(const AnnotatedImage& image, const FitConfig& config) {
  validate(config);
  std::vector<Target> targets;
  targets.reserve(image.rows.size());
  for (const auto& row : image.rows) {
    Target t{row, chord_lambda(row), {}};
    t.curve = fit_points(row, t.lambdas, config.degree).curve;
    targets.push_back(std::move(t));
  }
  if (targets.size() > static_cast<std::size_t>(config.m)) {
    throw ParameterError(fmt::format("image '{}' has {} rows but only {} proposals", image.id,
                                     targets.size(), config.m));
  }

  FitResult result{init_proposals(config, image), {}, {}};
  auto& proposals = result.proposals.proposals;
  const auto n = static_cast<Eigen::Index>(targets.size());
  const auto m = static_cast<Eigen::Index>(proposals.size());
  const double lr = config.learning_rate;
  result.trace.reserve(static_cast<std::size_t>(config.iterations));

  Eigen::MatrixXd geometric(n, m);
  std::vector<char> matched(static_cast<std::size_t>(m));
  for (int it = 0; it < config.iterations; ++it) {
    Assignment assignment;
    if (n > 0) {
      Eigen::MatrixXd cost(n, m);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
          const Proposal& p = proposals[static_cast<std::size_t>(j)];
          geometric(i, j) = geometric_loss(config, p.curve, targets[static_cast<std::size_t>(i)]);
          cost(i, j) = geometric(i, j);
          if (config.match_with_cls) cost(i, j) += cls_loss(p.confidence(), true);
        }
      }
      assignment = hungarian(CostMatrix(std::move(cost)));
    }

    std::fill(matched.begin(), matched.end(), 0);
    double total = 0.0;
    for (const auto& [t, p] : assignment.pairs) {
      matched[static_cast<std::size_t>(p)] = 1;
      total += geometric(t, p);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      total += config.cls_weight * cls_loss(proposals[static_cast<std::size_t>(j)].confidence(),
                                            matched[static_cast<std::size_t>(j)] != 0);
    }
    if (!std::isfinite(total) || total > kDivergenceLimit) throw DivergenceError(it, total);
    result.trace.push_back(total);

    for (const auto& [t, p] : assignment.pairs) {
      Proposal& prop = proposals[static_cast<std::size_t>(p)];
      const CoeffGradientd g =
          geometric_grad(config, prop.curve, targets[static_cast<std::size_t>(t)]);
      prop.curve = PolyCurved(prop.curve.u() - lr * g.du, prop.curve.v() - lr * g.dv);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      Proposal& prop = proposals[static_cast<std::size_t>(j)];
      const double label = matched[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
      prop.logit -= lr * config.cls_weight * (prop.confidence() - label);
    }
    result.last_pairs = std::move(assignment.pairs);
  }
  return result;
}

ImageEval make_image_eval(const AnnotatedImage& labels, std::vector<Predictiond> predictions,
                          int degree, double threshold) {
  ImageEval eval;
  eval.width = labels.width;
  eval.height = labels.height;
  eval.confidence_threshold = threshold;
  eval.predictions = std::move(predictions);
  for (const auto& row : labels.rows) {
    eval.targets.push_back(fit_polyline(row, degree).curve);
    eval.target_points.push_back(row);
  }
  return eval;
}

StudyReport run_loss_study(const SyntheticDataset& data, const StudyConfig& config) {
  if (data.clean.size() != data.noisy.size()) {
    throw ParameterError("clean and noisy datasets differ in size");
  }
  std::vector<ImageEval> base;
  base.reserve(data.clean.size());
  for (const auto& image : data.clean) base.push_back(make_image_eval(image, {}, config.fit.degree));

  StudyReport report;
  for (LossKind kind : config.loss_kinds) {
    for (std::uint64_t seed : config.seeds) {
      FitConfig fit = config.fit;
      fit.loss_kind = kind;
      fit.seed = seed;
      if (kind == LossKind::Regression && config.regression_learning_rate) {
        fit.learning_rate = *config.regression_learning_rate;
      }
      std::vector<ImageEval> evals = base;
      for (std::size_t i = 0; i < data.noisy.size(); ++i) {
        evals[i].predictions = fit_image(data.noisy[i], fit).proposals.predictions();
      }
      report.records.push_back({kind, seed,
                                mean_poly_distance(evals, config.eval.mpd_matching),
                                accuracy_percent(evals, config.eval.tusimple)});
    }
  }
  return report;
}

std::vector<StudySummary> StudyReport::summaries() const {
  std::vector<StudySummary> out;
  std::vector<LossKind> kinds;
  for (const auto& r : records) {
    if (std::find(kinds.begin(), kinds.end(), r.loss_kind) == kinds.end()) {
      kinds.push_back(r.loss_kind);
    }
  }
  for (LossKind kind : kinds) {
    std::vector<double> mpd, ap;
    for (const auto& r : records) {
      if (r.loss_kind != kind) continue;
      mpd.push_back(r.mpd);
      ap.push_back(r.ap);
    }
    const double n = static_cast<double>(mpd.size());
    const double mpd_mean = std::accumulate(mpd.begin(), mpd.end(), 0.0) / n;
    const double ap_mean = std::accumulate(ap.begin(), ap.end(), 0.0) / n;
    out.push_back({kind, mpd_mean, sample_std(mpd, mpd_mean), ap_mean, sample_std(ap, ap_mean)});
  }
  return out;
}

nlohmann::ordered_json to_json(const StudyReport& report) {
  nlohmann::ordered_json records = nlohmann::ordered_json::array();
  for (const auto& r : report.records) {
    records.push_back({{"loss_kind", to_string(r.loss_kind)},
                       {"seed", r.seed},
                       {"mpd", r.mpd},
                       {"ap", r.ap}});
  }
  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  for (const auto& s : report.summaries()) {
    summary.push_back({{"loss_kind", to_string(s.loss_kind)},
                       {"mpd_mean", s.mpd_mean},
                       {"mpd_std", s.mpd_std},
                       {"ap_mean", s.ap_mean},
                       {"ap_std", s.ap_std}});
  }
  return {{"records", std::move(records)}, {"summary", std::move(summary)}};
}

std::string to_csv(const StudyReport& report) {
  std::string out = "loss_kind,seed,mpd,ap\n";
  for (const auto& r : report.records) {
    out += fmt::format("{},{},{},{}\n", to_string(r.loss_kind), r.seed, r.mpd, r.ap);
  }
  return out;
}

std::string summary_line(const StudySummary& s) {
  return fmt::format("{}: mpd {:.6g} +- {:.3g}, ap {:.4f} +- {:.3g}", to_string(s.loss_kind),
                     s.mpd_mean, s.mpd_std, s.ap_mean, s.ap_std);
}

}  // namespace polyrow
