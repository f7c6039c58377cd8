#include "polyrow/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace polyrow {

using nlohmann::ordered_json;

namespace {

// Rows sit inside this margin of the image edges when generated.
constexpr double kEdgeMargin = 0.02;
constexpr int kRowRetries = 32;
// Separates the label-noise stream from the scene stream so clean scenes do
// not depend on noise settings.
constexpr std::uint64_t kNoiseStream = 0x9e3779b97f4a7c15ULL;

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::vector<double> to_vector(const Coeffsd& c) { return {c.data(), c.data() + c.size()}; }

Coeffsd to_coeffs(const std::vector<double>& v) {
  return Eigen::Map<const Coeffsd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

AnnotatedImage parse_annotation_object(const ordered_json& j, const LoadOptions& options) {
  AnnotatedImage image;
  image.id = j.at("id").get<std::string>();
  image.width = j.at("width").get<double>();
  image.height = j.at("height").get<double>();
  if (!(image.width > 0.0) || !(image.height > 0.0)) {
    throw ValidationError("image '" + image.id + "' has non-positive size");
  }
  const auto& rows = j.at("rows");
  if (!rows.is_array()) throw ValidationError("'rows' must be an array");

  std::size_t row_index = 0;
  for (const auto& row : rows) {
    if (!row.is_array()) throw ValidationError("row must be an array of [x, y] points");
    Polylined points(static_cast<Eigen::Index>(row.size()), 2);
    Eigen::Index k = 0;
    for (const auto& p : row) {
      if (!p.is_array() || p.size() != 2) throw ValidationError("point must be [x, y]");
      const double x = p[0].get<double>();
      const double y = p[1].get<double>();
      if (!std::isfinite(x) || !std::isfinite(y) || x < 0.0 || x > image.width || y < 0.0 ||
          y > image.height) {
        throw ValidationError(fmt::format("image '{}': point ({}, {}) outside {}x{}", image.id,
                                          x, y, image.width, image.height));
      }
      points(k, 0) = x / image.width;
      points(k, 1) = y / image.height;
      ++k;
    }

    Polylined sorted;
    try {
      sorted = sort_by_v(points);
    } catch (const DegenerateError& e) {
      throw ValidationError(fmt::format("image '{}': row {}: {}", image.id, row_index, e.what()));
    }
    if (sorted.rows() < kMinRowPoints) {
      const std::string msg =
          fmt::format("image '{}': row {} has {} distinct points (minimum {})", image.id,
                      row_index, sorted.rows(), kMinRowPoints);
      if (!options.permissive) throw ValidationError(msg);
      spdlog::warn("{}", msg);
    }
    image.rows.push_back(std::move(sorted));
    ++row_index;
  }
  return image;
}

template <typename Parse>
auto parse_lines(std::istream& in, const std::string& source, Parse&& parse) {
  std::vector<decltype(parse(std::declval<const ordered_json&>()))> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse(ordered_json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(fmt::format("{}:{}: {}", source, line_no, e.what()));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("{}:{}: {}", source, line_no, e.what()));
    }
  }
  return out;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// One image of roughly parallel rows converging toward a vanishing point,
// each row a quadratic u(v) sampled at equal v steps.
AnnotatedImage generate_scene(const SynthConfig& config, std::mt19937_64& rng, int index) {
  AnnotatedImage image;
  image.id = fmt::format("synth_{:05d}", index);
  image.width = config.width;
  image.height = config.height;

  const int n_rows = uniform_int(rng, config.rows_min, config.rows_max);
  const double v_top = uniform(rng, 0.35, 0.5);
  const double v_bottom = 0.98;
  const double v_horizon = v_top - 0.15;
  const double u_vanish = 0.5 + uniform(rng, -0.1, 0.1);
  const double shift = uniform(rng, -0.05, 0.05);

  for (int r = 0; r < n_rows; ++r) {
    Polylined row;
    for (int attempt = 0; attempt < kRowRetries; ++attempt) {
      const double offset = (r - 0.5 * (n_rows - 1)) * config.row_spacing;
      const double u_bottom = 0.5 + shift + offset * (1.0 + uniform(rng, -0.1, 0.1));
      const double bow = uniform(rng, config.curvature_min, config.curvature_max);
      const int n_points = uniform_int(rng, config.points_min, config.points_max);

      row.resize(n_points, 2);
      for (int i = 0; i < n_points; ++i) {
        const double v = v_top + (v_bottom - v_top) * i / (n_points - 1);
        const double along = (v - v_horizon) / (1.0 - v_horizon);
        row(i, 0) = u_vanish + (u_bottom - u_vanish) * along + bow * (v - v_top) * (1.0 - v);
        row(i, 1) = v;
      }
      if (row.col(0).minCoeff() >= kEdgeMargin && row.col(0).maxCoeff() <= 1.0 - kEdgeMargin) {
        break;
      }
      if (attempt + 1 == kRowRetries) {
        row.col(0) = row.col(0).cwiseMax(kEdgeMargin).cwiseMin(1.0 - kEdgeMargin);
      }
    }
    image.rows.push_back(row);
  }
  return image;
}

Polylined corrupt_row(const Polylined& clean, const SynthConfig& config, std::mt19937_64& rng) {
  const Eigen::Index n = clean.rows();
  Polylined noisy = clean;
  if (config.noise_sigma > 0.0) {
    std::normal_distribution<double> jitter(0.0, config.noise_sigma);
    for (Eigen::Index i = 0; i < n; ++i) {
      noisy(i, 0) += jitter(rng);
      noisy(i, 1) += jitter(rng);
    }
  }

  std::vector<char> keep(static_cast<std::size_t>(n), 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (uniform(rng, 0.0, 1.0) < config.dropout_prob) keep[static_cast<std::size_t>(i)] = 0;
  }
  auto kept = [&] { return std::count(keep.begin(), keep.end(), char{1}); };
  if (kept() < kMinRowPoints) {
    keep.front() = 1;
    keep.back() = 1;
    for (std::size_t i = 0; i < keep.size() && kept() < kMinRowPoints; ++i) keep[i] = 1;
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    if (uniform(rng, 0.0, 1.0) < config.outlier_prob) {
      noisy(i, 0) = uniform(rng, 0.0, 1.0);
      noisy(i, 1) = uniform(rng, 0.0, 1.0);
    }
  }

  Polylined out(kept(), 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (keep[static_cast<std::size_t>(i)]) out.row(k++) = noisy.row(i).cwiseMax(0.0).cwiseMin(1.0);
  }
  return sort_by_v(out);
}

}  // namespace

std::vector<AnnotatedImage> parse_annotations(std::istream& in, const std::string& source,
                                              const LoadOptions& options) {
  return parse_lines(in, source, [&](const ordered_json& j) {
    return parse_annotation_object(j, options);
  });
}

std::vector<AnnotatedImage> load_annotations(const std::filesystem::path& path,
                                             const LoadOptions& options) {
  auto in = open_input(path);
  return parse_annotations(in, path.string(), options);
}

std::string annotation_line(const AnnotatedImage& image) {
  ordered_json j;
  j["id"] = image.id;
  j["width"] = image.width;
  j["height"] = image.height;
  ordered_json rows = ordered_json::array();
  for (const auto& row : image.rows) {
    ordered_json points = ordered_json::array();
    for (Eigen::Index i = 0; i < row.rows(); ++i) {
      points.push_back({row(i, 0) * image.width, row(i, 1) * image.height});
    }
    rows.push_back(std::move(points));
  }
  j["rows"] = std::move(rows);
  return j.dump();
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

void save_annotations(const std::filesystem::path& path,
                      const std::vector<AnnotatedImage>& images) {
  std::string text;
  for (const auto& image : images) text += annotation_line(image) + "\n";
  write_text(path, text);
}

std::vector<PredictionRecord> parse_predictions(std::istream& in, const std::string& source) {
  return parse_lines(in, source, [](const ordered_json& j) {
    PredictionRecord record;
    record.image_id = j.at("image_id").get<std::string>();
    for (const auto& c : j.at("curves")) {
      const auto u = c.at("u").get<std::vector<double>>();
      const auto v = c.at("v").get<std::vector<double>>();
      const double conf = c.at("conf").get<double>();
      if (u.size() != v.size()) {
        throw ValidationError("image '" + record.image_id + "': u and v lengths differ");
      }
      if (!(conf >= 0.0 && conf <= 1.0)) {
        throw ValidationError("image '" + record.image_id + "': confidence outside [0, 1]");
      }
      try {
        record.curves.push_back({PolyCurved(to_coeffs(u), to_coeffs(v)), conf});
      } catch (const ParameterError& e) {
        throw ValidationError("image '" + record.image_id + "': " + e.what());
      }
    }
    return record;
  });
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_predictions(in, path.string());
}

std::string prediction_line(const PredictionRecord& record) {
  ordered_json j;
  j["image_id"] = record.image_id;
  ordered_json curves = ordered_json::array();
  for (const auto& p : record.curves) {
    ordered_json c;
    c["u"] = to_vector(p.curve.u());
    c["v"] = to_vector(p.curve.v());
    c["conf"] = p.confidence;
    curves.push_back(std::move(c));
  }
  j["curves"] = std::move(curves);
  return j.dump();
}

void save_predictions(const std::filesystem::path& path,
                      const std::vector<PredictionRecord>& records) {
  std::string text;
  for (const auto& r : records) text += prediction_line(r) + "\n";
  write_text(path, text);
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ParameterError(fmt::format("split ratios must sum to 1, got {}", sum));
  }
  if (ratios.train < 0.0 || ratios.val < 0.0 || ratios.test < 0.0) {
    throw ParameterError("split ratios must be non-negative");
  }
  if (n < 3) throw ParameterError(fmt::format("need at least 3 images to split, got {}", n));
  const double total = static_cast<double>(n);
  std::array<std::size_t, 3> sizes{};
  const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
  std::size_t used = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    sizes[k] = static_cast<std::size_t>(std::floor(total * r[k] + 1e-9));
    used += sizes[k];
  }
  for (std::size_t k = 0; used < n; k = (k + 1) % 3, ++used) ++sizes[k];
  return sizes;
}

DatasetSplit split_dataset(const std::vector<AnnotatedImage>& images, const SplitRatios& ratios,
                           std::uint64_t seed) {
  const auto sizes = split_sizes(images.size(), ratios);
  std::vector<std::size_t> order(images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  DatasetSplit split;
  std::size_t k = 0;
  for (; k < sizes[0]; ++k) split.train.push_back(images[order[k]]);
  for (; k < sizes[0] + sizes[1]; ++k) split.val.push_back(images[order[k]]);
  for (; k < order.size(); ++k) split.test.push_back(images[order[k]]);
  return split;
}

void to_json(ordered_json& j, const SynthConfig& c) {
  j = ordered_json{{"n_images", c.n_images},
                   {"rows_min", c.rows_min},
                   {"rows_max", c.rows_max},
                   {"curvature_min", c.curvature_min},
                   {"curvature_max", c.curvature_max},
                   {"row_spacing", c.row_spacing},
                   {"points_min", c.points_min},
                   {"points_max", c.points_max},
                   {"noise_sigma", c.noise_sigma},
                   {"dropout_prob", c.dropout_prob},
                   {"outlier_prob", c.outlier_prob},
                   {"width", c.width},
                   {"height", c.height},
                   {"seed", c.seed}};
}

void from_json(const ordered_json& j, SynthConfig& c) {
  SynthConfig d;
  c.n_images = j.value("n_images", d.n_images);
  c.rows_min = j.value("rows_min", d.rows_min);
  c.rows_max = j.value("rows_max", d.rows_max);
  c.curvature_min = j.value("curvature_min", d.curvature_min);
  c.curvature_max = j.value("curvature_max", d.curvature_max);
  c.row_spacing = j.value("row_spacing", d.row_spacing);
  c.points_min = j.value("points_min", d.points_min);
  c.points_max = j.value("points_max", d.points_max);
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  c.dropout_prob = j.value("dropout_prob", d.dropout_prob);
  c.outlier_prob = j.value("outlier_prob", d.outlier_prob);
  c.width = j.value("width", d.width);
  c.height = j.value("height", d.height);
  c.seed = j.value("seed", d.seed);
}

void validate(const SynthConfig& c) {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError(fmt::format("{} must be in [0, 1]", name));
  };
  prob(c.dropout_prob, "dropout_prob");
  prob(c.outlier_prob, "outlier_prob");
  if (!(c.noise_sigma >= 0.0)) throw ParameterError("noise_sigma must be >= 0");
  if (c.n_images < 1) throw ParameterError("n_images must be >= 1");
  if (c.rows_min < 1 || c.rows_max < c.rows_min) {
    throw ParameterError("need 1 <= rows_min <= rows_max");
  }
  if (c.points_min < kMinRowPoints || c.points_max < c.points_min) {
    throw ParameterError(fmt::format("need {} <= points_min <= points_max", kMinRowPoints));
  }
  if (c.curvature_max < c.curvature_min) throw ParameterError("curvature_min > curvature_max");
  if (!(c.row_spacing > 0.0)) throw ParameterError("row_spacing must be > 0");
  if (!(c.width > 0.0) || !(c.height > 0.0)) throw ParameterError("image size must be > 0");
}

SyntheticDataset generate_synthetic(const SynthConfig& config) {
  validate(config);
  std::mt19937_64 scene_rng(config.seed);
  std::mt19937_64 noise_rng(config.seed ^ kNoiseStream);

  SyntheticDataset data;
  for (int i = 0; i < config.n_images; ++i) {
    AnnotatedImage clean = generate_scene(config, scene_rng, i);
    AnnotatedImage noisy = clean;
    for (auto& row : noisy.rows) row = corrupt_row(row, config, noise_rng);
    data.clean.push_back(std::move(clean));
    data.noisy.push_back(std::move(noisy));
  }
  return data;
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticDataset& data,
                     const SynthConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  save_annotations(dir / "clean.jsonl", data.clean);
  save_annotations(dir / "noisy.jsonl", data.noisy);
  ordered_json j = config;
  write_text(dir / "config.json", j.dump(2) + "\n");
}

SynthConfig read_synth_config(const std::filesystem::path& dir) {
  auto in = open_input(dir / "config.json");
  try {
    return ordered_json::parse(in).get<SynthConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError((dir / "config.json").string() + ": " + e.what());
  }
}

SyntheticDataset read_synthetic(const std::filesystem::path& dir) {
  return {load_annotations(dir / "clean.jsonl"), load_annotations(dir / "noisy.jsonl")};
}

}  // namespace polyrow
