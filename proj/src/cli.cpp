#include "polyrow/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "polyrow/error.hpp"
#include "polyrow/metrics.hpp"
#include "polyrow/optim.hpp"

namespace polyrow {

namespace {

using nlohmann::ordered_json;

// Reads a flat JSON object whose keys are long flag names ("tusimple-tau" or
// "tusimple_tau"). Keys the main app does not know are routed to the
// subcommand being run; anything left over is rejected by CLI11.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* app) : app_(app) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    return "{}";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    ordered_json j;
    try {
      j = ordered_json::parse(in);
    } catch (const ordered_json::exception& e) {
      throw CLI::ConversionError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");

    std::vector<std::string> parents;
    for (const CLI::App* sub : app_->get_subcommands()) parents = {sub->get_name()};

    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.name = key;
      std::replace(item.name.begin(), item.name.end(), '_', '-');
      if (app_->get_option_no_throw("--" + item.name) == nullptr) item.parents = parents;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const ordered_json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_object() || v.is_array()) throw CLI::ConversionError("nested config values");
    return v.dump();
  }

  const CLI::App* app_;
};

struct Shared {
  int degree = kDefaultDegree;
  double threshold = kDefaultConfidenceThreshold;
  std::uint64_t seed = 1;
  std::string out;
};

std::string fmt_px(double x) { return fmt::format("{:.3f}", x); }

void require_out(const Shared& shared, const char* what) {
  if (shared.out.empty()) throw ParameterError(std::string(what) + " needs --out");
}

void validate_shared(const Shared& shared) {
  if (shared.degree < 1 || shared.degree > kMaxDegree) {
    throw ParameterError(fmt::format("--degree must be in [1, {}]", kMaxDegree));
  }
  if (!(shared.threshold >= 0.0 && shared.threshold <= 1.0)) {
    throw ParameterError("--threshold must be in [0, 1]");
  }
}

void emit(std::ostream& out, const Shared& shared, const std::string& content) {
  if (shared.out.empty()) {
    out << content;
  } else {
    write_text(shared.out, content);
  }
}

// fit -------------------------------------------------------------------------

struct FitArgs {
  std::string annotations;
  bool permissive = false;
};

int cmd_fit(const FitArgs& args, const Shared& shared, std::ostream& out) {
  const auto images = load_annotations(args.annotations, {args.permissive});
  std::string content;
  for (const auto& image : images) {
    PredictionRecord record{image.id, {}};
    for (const auto& row : image.rows) {
      record.curves.push_back({fit_polyline(row, shared.degree).curve, 1.0});
    }
    content += prediction_line(record) + "\n";
  }
  emit(out, shared, content);
  spdlog::info("fitted {} images", images.size());
  return kExitOk;
}

// eval ------------------------------------------------------------------------

struct EvalArgs {
  std::string annotations;
  std::string predictions;
  double tau = 20.0;
  double epsilon = 0.85;
  bool pooled = false;
  std::string csv;
  std::string mpd_matching = "greedy";
};

std::map<std::string, std::vector<Predictiond>> index_predictions(
    const std::vector<PredictionRecord>& records, const std::vector<AnnotatedImage>& images) {
  std::set<std::string> known;
  for (const auto& image : images) known.insert(image.id);

  std::map<std::string, std::vector<Predictiond>> by_id;
  std::vector<std::string> orphans;
  for (const auto& record : records) {
    if (!known.count(record.image_id)) {
      orphans.push_back(record.image_id);
      continue;
    }
    if (by_id.count(record.image_id)) {
      throw ValidationError("duplicate predictions for image '" + record.image_id + "'");
    }
    by_id[record.image_id] = record.curves;
  }
  if (!orphans.empty()) {
    std::string list;
    for (const auto& id : orphans) list += (list.empty() ? "" : ", ") + id;
    throw ValidationError("predictions for unknown image ids: " + list);
  }
  return by_id;
}

std::vector<ImageEval> build_evals(std::vector<AnnotatedImage> images,
                                   const std::vector<PredictionRecord>& records,
                                   const Shared& shared) {
  auto by_id = index_predictions(records, images);
  std::sort(images.begin(), images.end(),
            [](const AnnotatedImage& a, const AnnotatedImage& b) { return a.id < b.id; });
  std::vector<ImageEval> evals;
  evals.reserve(images.size());
  for (const auto& image : images) {
    evals.push_back(make_image_eval(image, std::move(by_id[image.id]), shared.degree,
                                    shared.threshold));
  }
  return evals;
}

int cmd_eval(const EvalArgs& args, const Shared& shared, std::ostream& out) {
  EvalOptions options;
  options.tusimple = {args.tau, args.epsilon, args.pooled};
  if (!(args.tau > 0.0)) throw ParameterError("--tusimple-tau must be > 0");
  if (!(args.epsilon >= 0.0 && args.epsilon <= 1.0)) {
    throw ParameterError("--tusimple-eps must be in [0, 1]");
  }
  options.mpd_matching =
      args.mpd_matching == "hungarian" ? MpdMatching::Hungarian : MpdMatching::Greedy;

  const auto evals =
      build_evals(load_annotations(args.annotations), load_predictions(args.predictions), shared);
  const MetricReport report = evaluate(evals, options);
  emit(out, shared, to_json(report).dump(2) + "\n");
  if (!args.csv.empty()) write_text(args.csv, csv_header() + "\n" + to_csv(report) + "\n");
  return kExitOk;
}

// synth -----------------------------------------------------------------------

int cmd_synth(SynthConfig config, const Shared& shared) {
  require_out(shared, "synth");
  config.seed = shared.seed;
  validate(config);
  const SyntheticDataset data = generate_synthetic(config);
  write_synthetic(shared.out, data, config);
  spdlog::info("wrote {} images to {}", data.clean.size(), shared.out);
  return kExitOk;
}

// loss-study ------------------------------------------------------------------

struct StudyArgs {
  std::string synth_dir;
  int seeds = 1;
  FitConfig fit;
  double lr_regression = 0.0;
  std::string regression_form = "per_point";
};

int cmd_loss_study(const StudyArgs& args, const Shared& shared, std::ostream& out) {
  if (args.seeds < 1) throw ParameterError("--seeds must be >= 1");
  StudyConfig config;
  config.fit = args.fit;
  config.fit.degree = shared.degree;
  config.fit.regression_form = regression_form_from_string(args.regression_form);
  if (args.lr_regression > 0.0) config.regression_learning_rate = args.lr_regression;
  validate(config.fit);
  config.seeds.clear();
  for (int s = 0; s < args.seeds; ++s) config.seeds.push_back(shared.seed + s);
  const SyntheticDataset data = read_synthetic(args.synth_dir);

  const StudyReport report = run_loss_study(data, config);
  if (!shared.out.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(shared.out, ec);
    if (ec) throw IoError("cannot create " + shared.out + ": " + ec.message());
    const std::filesystem::path dir(shared.out);
    write_text(dir / "study.json", to_json(report).dump(2) + "\n");
    write_text(dir / "study.csv", to_csv(report));
  }
  for (const auto& summary : report.summaries()) out << summary_line(summary) << "\n";
  return kExitOk;
}

// plot ------------------------------------------------------------------------

struct PlotArgs {
  std::string annotations;
  std::string predictions;
  std::string id;
};

int cmd_plot(const PlotArgs& args, const Shared& shared, std::ostream& out) {
  const auto images = load_annotations(args.annotations);
  const auto records = load_predictions(args.predictions);
  auto image = std::find_if(images.begin(), images.end(),
                            [&](const AnnotatedImage& i) { return i.id == args.id; });
  if (image == images.end()) throw ValidationError("unknown image id '" + args.id + "'");
  std::vector<Predictiond> preds;
  for (const auto& r : records) {
    if (r.image_id == args.id) preds = r.curves;
  }
  emit(out, shared, render_svg(*image, preds, shared.threshold));
  return kExitOk;
}

void configure_logging(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("polyrow", sink);
  logger->set_pattern("[%l] %v");
  auto level = spdlog::level::warn;
  if (const char* env = std::getenv("POLYROW_LOG"); env != nullptr && *env != '\0') {
    level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off") {
      throw ParameterError(fmt::format("POLYROW_LOG: unknown level '{}'", env));
    }
  }
  logger->set_level(level);
  spdlog::set_default_logger(logger);
}

int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parametric polynomial crop-row fitting and evaluation", "polyrow"};
  app.require_subcommand(1);
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.option_defaults()->always_capture_default();

  Shared shared;
  app.add_option("--degree", shared.degree, "Polynomial degree of fitted curves");
  app.add_option("--threshold", shared.threshold, "Confidence threshold for predictions");
  app.add_option("--seed", shared.seed, "Random seed");
  app.add_option("--out", shared.out, "Output file or directory");
  app.set_config("--config", "", "JSON file with flag values");
  app.config_formatter(std::make_shared<JsonConfig>(&app));

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Least-squares curves for every labelled row");
  fit->add_option("annotations", fit_args.annotations)->required()->check(CLI::ExistingFile);
  fit->add_flag("--permissive", fit_args.permissive, "Keep rows with too few points");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Score predictions against annotations");
  eval->add_option("annotations", eval_args.annotations)->required()->check(CLI::ExistingFile);
  eval->add_option("predictions", eval_args.predictions)->required()->check(CLI::ExistingFile);
  eval->add_option("--tusimple-tau", eval_args.tau, "Pixel tolerance per label point");
  eval->add_option("--tusimple-eps", eval_args.epsilon, "Row acceptance threshold");
  eval->add_flag("--pooled", eval_args.pooled, "Pool FP/FN counts over the dataset");
  eval->add_option("--csv", eval_args.csv, "Also write the report as CSV");
  eval->add_option("--mpd-matching", eval_args.mpd_matching)
      ->check(CLI::IsMember({"greedy", "hungarian"}));

  SynthConfig synth_config;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic clean/noisy dataset pair");
  synth->add_option("--n-images", synth_config.n_images);
  synth->add_option("--rows-min", synth_config.rows_min);
  synth->add_option("--rows-max", synth_config.rows_max);
  synth->add_option("--curvature-min", synth_config.curvature_min);
  synth->add_option("--curvature-max", synth_config.curvature_max);
  synth->add_option("--row-spacing", synth_config.row_spacing);
  synth->add_option("--points-min", synth_config.points_min);
  synth->add_option("--points-max", synth_config.points_max);
  synth->add_option("--noise-sigma", synth_config.noise_sigma);
  synth->add_option("--dropout", synth_config.dropout_prob);
  synth->add_option("--outlier", synth_config.outlier_prob);
  synth->add_option("--width", synth_config.width);
  synth->add_option("--height", synth_config.height);

  StudyArgs study_args;
  auto* study = app.add_subcommand("loss-study", "Compare PolyOptLoss with regression loss");
  study->add_option("synth_dir", study_args.synth_dir)->required()->check(CLI::ExistingDirectory);
  study->add_option("--seeds", study_args.seeds, "Number of seeds, starting at --seed");
  study->add_option("--lr", study_args.fit.learning_rate);
  study->add_option("--iters", study_args.fit.iterations);
  study->add_option("--m", study_args.fit.m, "Proposals per image");
  study->add_option("--cls-weight", study_args.fit.cls_weight);
  study->add_option("--lr-regression", study_args.lr_regression,
                    "Step size for regression runs (default: --lr)");
  study->add_option("--regression-form", study_args.regression_form)
      ->check(CLI::IsMember({"per_point", "per_coefficient", "per_point_squared"}));

  PlotArgs plot_args;
  auto* plot = app.add_subcommand("plot", "Draw labels and predictions of one image as SVG");
  plot->add_option("annotations", plot_args.annotations)->required()->check(CLI::ExistingFile);
  plot->add_option("predictions", plot_args.predictions)->required()->check(CLI::ExistingFile);
  plot->add_option("--id", plot_args.id)->required();

  for (auto* sub : {fit, eval, synth, study, plot}) sub->fallthrough();

  std::vector<std::string> reversed(argv.rbegin(), argv.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream help, diag;
    const int code = app.exit(e, help, diag);
    out << help.str();
    err << diag.str();
    return code == 0 ? kExitOk : kExitValidation;
  }

  validate_shared(shared);
  if (fit->parsed()) return cmd_fit(fit_args, shared, out);
  if (eval->parsed()) return cmd_eval(eval_args, shared, out);
  if (synth->parsed()) return cmd_synth(synth_config, shared);
  if (study->parsed()) return cmd_loss_study(study_args, shared, out);
  return cmd_plot(plot_args, shared, out);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto previous = spdlog::default_logger();
  int code = kExitOk;
  try {
    configure_logging(err);
    code = dispatch(args, out, err);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    code = kExitDivergence;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    code = kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    code = kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    code = kExitValidation;
  }
  spdlog::set_default_logger(previous);
  return code;
}

std::string render_svg(const AnnotatedImage& labels, const std::vector<Predictiond>& predictions,
                       double threshold) {
  const double w = labels.width;
  const double h = labels.height;
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\">\n"
      "<rect x=\"0\" y=\"0\" width=\"{0}\" height=\"{1}\" fill=\"#808080\"/>\n",
      w, h);

  auto path = [&](const Polylined& points, const char* color) {
    std::string d;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      d += fmt::format("{}{} {}", i == 0 ? "M" : " L", fmt_px(points(i, 0) * w),
                       fmt_px(points(i, 1) * h));
    }
    svg += fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"3\"/>\n", d,
                       color);
  };
  for (const auto& row : labels.rows) path(row, "#0000ff");
  for (const auto& p : predictions) {
    path(sample_equidistant(p.curve, 101), p.confidence >= threshold ? "#00ff00" : "#ffffff");
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace polyrow
