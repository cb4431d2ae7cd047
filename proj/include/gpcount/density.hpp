#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gpcount/tensor.hpp"

namespace gpc {

/// Head location in pixel coordinates; pixel (i, j) spans [j, j+1)×[i, i+1).
struct PointAnnotation {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const PointAnnotation&) const = default;
};

/// Nonnegative per-pixel person density; its sum is the count.
struct DensityMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  DensityMap() = default;
  DensityMap(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}

  double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }

  /// [1×H×W] view suitable as a graph constant.
  Array to_array() const;
  static DensityMap from_array(const Array& a);

  bool operator==(const DensityMap&) const = default;
};

/// Superposes one isotropic Gaussian of scale `sigma` per point, sampled at
/// pixel centres. Each Gaussian is renormalized over the grid so it carries
/// mass exactly 1 after truncation at the border.
DensityMap synthesize_density(std::span<const PointAnnotation> points, std::size_t height,
                              std::size_t width, double sigma);

double count(const DensityMap& map);

}  // namespace gpc
