#include "gpcount/density.hpp"

#include <cmath>
#include <string>

#include "gpcount/errors.hpp"

namespace gpc {

Array DensityMap::to_array() const { return Array({1, height, width}, values); }

DensityMap DensityMap::from_array(const Array& a) {
  if (a.rank() == 3 && a.dim(0) == 1) {
    DensityMap m(a.dim(1), a.dim(2));
    m.values = a.data;
    return m;
  }
  if (a.rank() == 2) {
    DensityMap m(a.dim(0), a.dim(1));
    m.values = a.data;
    return m;
  }
  throw ShapeError("density map must be [1xHxW] or [HxW], got " + shape_to_string(a.shape));
}

DensityMap synthesize_density(std::span<const PointAnnotation> points, std::size_t height,
                              std::size_t width, double sigma) {
  if (!(sigma > 0.0)) throw ContractError("synthesize_density: sigma must be positive");
  if (height == 0 || width == 0) throw ShapeError("synthesize_density: empty grid");
  DensityMap map(height, width);
  std::vector<double> gx(width), gy(height);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!(p.x >= 0.0 && p.x < static_cast<double>(width) && p.y >= 0.0 &&
          p.y < static_cast<double>(height))) {
      throw AnnotationError("annotation " + std::to_string(i) + " at (" + std::to_string(p.x) + ", " +
                          std::to_string(p.y) + ") lies outside the " + std::to_string(height) +
                          "x" + std::to_string(width) + " image");
    }
    // The isotropic kernel is separable, so the grid normalizer factors too.
    double sx = 0.0, sy = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      const double d = static_cast<double>(c) + 0.5 - p.x;
      gx[c] = std::exp(-d * d * inv2s2);
      sx += gx[c];
    }
    for (std::size_t r = 0; r < height; ++r) {
      const double d = static_cast<double>(r) + 0.5 - p.y;
      gy[r] = std::exp(-d * d * inv2s2);
      sy += gy[r];
    }
    for (std::size_t c = 0; c < width; ++c) gx[c] /= sx;
    for (std::size_t r = 0; r < height; ++r) gy[r] /= sy;
    for (std::size_t r = 0; r < height; ++r) {
      double* row = map.values.data() + r * width;
      for (std::size_t c = 0; c < width; ++c) row[c] += gy[r] * gx[c];
    }
  }
  return map;
}

double count(const DensityMap& map) {
  double s = 0.0;
  for (double v : map.values) s += v;
  return s;
}

}  // namespace gpc
