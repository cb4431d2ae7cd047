#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gpcount/density.hpp"
#include "gpcount/tensor.hpp"

namespace gpc {

/// Grayscale image in [0, 1] with its head annotations.
struct AnnotatedImage {
  std::string id;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // row-major
  std::vector<PointAnnotation> points;

  Array to_array() const { return Array({1, height, width}, pixels); }
  std::size_t gt_count() const { return points.size(); }

  bool operator==(const AnnotatedImage&) const = default;
};

using Dataset = std::vector<AnnotatedImage>;

/// Rendering parameters of one synthetic domain.
struct DomainStyle {
  double dot_radius = 1.5;
  double dot_intensity = 0.7;
  double background_noise_std = 0.04;
  /// Spacing in pixels of the value-noise lattice behind the background.
  double background_texture_scale = 8.0;
  double background_level = 0.2;
  double texture_amplitude = 0.08;
  std::int64_t seed_offset = 0;
};

struct SplitConfig {
  double labeled_fraction = 0.05;
  std::uint64_t seed = 0;
};

struct Split {
  Dataset labeled;
  /// Points are kept for post-hoc analysis only; training never reads them.
  Dataset unlabeled;
};

/// Renders `n_images` dot crowds whose counts are uniform over
/// [count_min, count_max]. Fully determined by (seed, style.seed_offset).
Dataset generate_dataset(std::size_t n_images, std::size_t height, std::size_t width,
                         std::size_t count_min, std::size_t count_max, const DomainStyle& style,
                         std::uint64_t seed, const std::string& id_prefix = "img");

/// Seeded shuffle, then the first ceil(fraction * n) samples become labeled.
Split split(const Dataset& dataset, const SplitConfig& cfg);

/// Writes `<dir>/<id>.img`, `<dir>/<id>.pts` and `<dir>/manifest.txt`.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Single-file helpers behind save/load; exposed for tests and tools.
void write_image_file(const AnnotatedImage& image, const std::filesystem::path& path);
void read_image_file(const std::filesystem::path& path, AnnotatedImage& image);
void write_points_file(const std::vector<PointAnnotation>& points, const std::filesystem::path& path);
std::vector<PointAnnotation> read_points_file(const std::filesystem::path& path);

}  // namespace gpc
