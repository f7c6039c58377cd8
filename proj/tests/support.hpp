#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "polyrow/geometry.hpp"

namespace polyrow::test {

inline std::mt19937_64& rng() {
  static std::mt19937_64 gen(20240611);
  return gen;
}

inline double uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng());
}

inline int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng()); }

inline Coeffsd random_coeffs(int dim, double lo = -1.0, double hi = 1.0) {
  Coeffsd c(dim);
  for (int i = 0; i < dim; ++i) c(i) = uniform(lo, hi);
  return c;
}

inline PolyCurved random_curve(int degree, double lo = -1.0, double hi = 1.0) {
  return PolyCurved(random_coeffs(degree + 1, lo, hi), random_coeffs(degree + 1, lo, hi));
}

inline Polylined points(std::initializer_list<std::pair<double, double>> pts) {
  Polylined out(static_cast<Eigen::Index>(pts.size()), 2);
  Eigen::Index i = 0;
  for (const auto& [u, v] : pts) {
    out(i, 0) = u;
    out(i, 1) = v;
    ++i;
  }
  return out;
}

/// Composite trapezoid of the squared distance between two curves.
inline double trapezoid_sq_distance(const PolyCurved& a, const PolyCurved& b, int panels) {
  double sum = 0.0;
  const double h = 1.0 / panels;
  for (int i = 0; i <= panels; ++i) {
    const double lambda = i * h;
    const double d2 = (a(lambda) - b(lambda)).squaredNorm();
    sum += (i == 0 || i == panels) ? 0.5 * d2 : d2;
  }
  return sum * h;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("polyrow_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace polyrow::test
