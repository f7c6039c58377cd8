#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "polyrow/geometry.hpp"
#include "polyrow/loss.hpp"

namespace polyrow {

/// Rows need at least this many points unless loading permissively.
inline constexpr int kMinRowPoints = 4;

/// One labelled image. Rows are held in normalized coordinates, canonically
/// sorted by v.
struct AnnotatedImage {
  std::string id;
  double width = 0.0;
  double height = 0.0;
  std::vector<Polylined> rows;
};

/// Predicted curves for one image, in normalized space.
struct PredictionRecord {
  std::string image_id;
  std::vector<Predictiond> curves;
};

struct LoadOptions {
  /// Keep rows with fewer than kMinRowPoints points (logged as a warning).
  bool permissive = false;
};

/// Parses JSON-lines annotations: one object per line,
/// {"id", "width", "height", "rows": [[[x_px, y_px], ...], ...]}.
/// `source` prefixes error messages ("<source>:<line>: ...").
std::vector<AnnotatedImage> parse_annotations(std::istream& in, const std::string& source,
                                              const LoadOptions& options = {});
std::vector<AnnotatedImage> load_annotations(const std::filesystem::path& path,
                                             const LoadOptions& options = {});

/// One JSON line (no trailing newline) with coordinates back in pixels.
std::string annotation_line(const AnnotatedImage& image);
void save_annotations(const std::filesystem::path& path, const std::vector<AnnotatedImage>& images);

/// {"image_id", "curves": [{"u": [...], "v": [...], "conf": c}, ...]}
std::vector<PredictionRecord> parse_predictions(std::istream& in, const std::string& source);
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path);
std::string prediction_line(const PredictionRecord& record);
void save_predictions(const std::filesystem::path& path,
                      const std::vector<PredictionRecord>& records);

/// Writes `content` to `path`, throwing IoError on failure.
void write_text(const std::filesystem::path& path, const std::string& content);

struct SplitRatios {
  double train = 0.64;
  double val = 0.16;
  double test = 0.20;
};

struct DatasetSplit {
  std::vector<AnnotatedImage> train;
  std::vector<AnnotatedImage> val;
  std::vector<AnnotatedImage> test;
};

/// Seeded shuffle, then floor-allocated part sizes with the remainder going
/// to train first, then val.
DatasetSplit split_dataset(const std::vector<AnnotatedImage>& images, const SplitRatios& ratios,
                           std::uint64_t seed);

/// Split sizes for n images; exposed for testing the allocation rule.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios);

/// Parameters for synthetic crop-row scenes with controlled label noise.
struct SynthConfig {
  int n_images = 50;
  int rows_min = 2;
  int rows_max = 4;
  /// Bow of each row: u gains curvature * (v - v_top) * (1 - v).
  double curvature_min = -0.3;
  double curvature_max = 0.3;
  /// Horizontal spacing of neighbouring rows at the image bottom.
  double row_spacing = 0.25;
  int points_min = 6;
  int points_max = 12;
  double noise_sigma = 0.02;
  double dropout_prob = 0.2;
  double outlier_prob = 0.1;
  double width = 1280.0;
  double height = 720.0;
  std::uint64_t seed = 1;
};

void to_json(nlohmann::ordered_json& j, const SynthConfig& c);
void from_json(const nlohmann::ordered_json& j, SynthConfig& c);
/// Throws ParameterError for out-of-range fields.
void validate(const SynthConfig& config);

struct SyntheticDataset {
  std::vector<AnnotatedImage> clean;
  std::vector<AnnotatedImage> noisy;
};

SyntheticDataset generate_synthetic(const SynthConfig& config);

/// clean.jsonl, noisy.jsonl and config.json inside `dir` (created if needed).
void write_synthetic(const std::filesystem::path& dir, const SyntheticDataset& data,
                     const SynthConfig& config);
SyntheticDataset read_synthetic(const std::filesystem::path& dir);
SynthConfig read_synth_config(const std::filesystem::path& dir);

}  // namespace polyrow
