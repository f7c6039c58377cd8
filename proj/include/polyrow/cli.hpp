#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "polyrow/data.hpp"
#include "polyrow/loss.hpp"

namespace polyrow {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 2,
  kExitIo = 3,
  kExitDivergence = 4,
};

/// Runs the tool on `args` (without the program name). Results go to `out`,
/// logs and diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Labels as blue polylines through their points, predictions as green
/// (confidence >= threshold) or white curves of 100 segments.
std::string render_svg(const AnnotatedImage& labels, const std::vector<Predictiond>& predictions,
                       double threshold = 0.5);

}  // namespace polyrow
