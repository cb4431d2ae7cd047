#include "gpcount/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gpcount/errors.hpp"
#include "gpcount/random.hpp"

namespace gpc {
namespace {

constexpr int kPlacementAttempts = 2000;

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Smooth value noise in [-1, 1] on a lattice with the given spacing.
std::vector<double> value_noise(std::size_t h, std::size_t w, double spacing, Rng& rng) {
  spacing = std::max(spacing, 1.0);
  const auto gh = static_cast<std::size_t>(std::ceil(static_cast<double>(h) / spacing)) + 2;
  const auto gw = static_cast<std::size_t>(std::ceil(static_cast<double>(w) / spacing)) + 2;
  std::vector<double> lattice(gh * gw);
  for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
  std::vector<double> out(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    const double fy = (static_cast<double>(r) + 0.5) / spacing;
    const auto y0 = static_cast<std::size_t>(fy);
    const double ty = smoothstep(fy - static_cast<double>(y0));
    for (std::size_t c = 0; c < w; ++c) {
      const double fx = (static_cast<double>(c) + 0.5) / spacing;
      const auto x0 = static_cast<std::size_t>(fx);
      const double tx = smoothstep(fx - static_cast<double>(x0));
      const double a = lattice[y0 * gw + x0], b = lattice[y0 * gw + x0 + 1];
      const double cc = lattice[(y0 + 1) * gw + x0], d = lattice[(y0 + 1) * gw + x0 + 1];
      const double top = a + tx * (b - a);
      const double bot = cc + tx * (d - cc);
      out[r * w + c] = top + ty * (bot - top);
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string sample_id(const std::string& prefix, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%05zu", index);
  return prefix + buf;
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw ParseError(path.string() + ":" + std::to_string(line) + ": " + what);
}

bool parse_double(const std::string& token, double& out) {
  if (token.empty()) return false;
  char* end = nullptr;
  out = std::strtod(token.c_str(), &end);
  return end == token.c_str() + token.size() && std::isfinite(out);
}

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> tokens;
  std::string t;
  while (is >> t) tokens.push_back(t);
  return tokens;
}

}  // namespace

Dataset generate_dataset(std::size_t n_images, std::size_t height, std::size_t width,
                         std::size_t count_min, std::size_t count_max, const DomainStyle& style,
                         std::uint64_t seed, const std::string& id_prefix) {
  if (n_images == 0) throw ContractError("generate_dataset: n_images must be at least 1");
  if (count_max < count_min) throw ContractError("generate_dataset: count range max < min");
  if (height == 0 || width == 0) throw ContractError("generate_dataset: empty image size");
  if (!(style.dot_radius > 0.0)) throw ContractError("generate_dataset: dot_radius must be positive");

  const double r = style.dot_radius;
  const double min_sep = 2.0 * r + 1.0;
  // Random sequential packing jams well below this fraction of the plane.
  const double disc_area = std::numbers::pi * 0.25 * min_sep * min_sep;
  if (static_cast<double>(count_max) * disc_area > 0.5 * static_cast<double>(height * width)) {
    throw GenerationError("generate_dataset: " + std::to_string(count_max) + " dots of radius " +
                          format_double(r) + " cannot be placed apart in a " +
                          std::to_string(height) + "x" + std::to_string(width) + " image");
  }

  Dataset out;
  out.reserve(n_images);
  for (std::size_t i = 0; i < n_images; ++i) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(style.seed_offset), i}));
    AnnotatedImage img;
    img.id = sample_id(id_prefix, i);
    img.height = height;
    img.width = width;

    const auto n = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(count_min), static_cast<std::int64_t>(count_max)));
    const double margin = std::min(1.0, 0.5 * std::min<double>(height, width));
    while (img.points.size() < n) {
      bool placed = false;
      for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
        const PointAnnotation p{rng.uniform(margin, static_cast<double>(width) - margin),
                                rng.uniform(margin, static_cast<double>(height) - margin)};
        placed = std::all_of(img.points.begin(), img.points.end(), [&](const PointAnnotation& q) {
          return std::hypot(p.x - q.x, p.y - q.y) >= min_sep;
        });
        if (placed) img.points.push_back(p);
      }
      if (!placed) {
        throw GenerationError("generate_dataset: could not place dot " +
                              std::to_string(img.points.size()) + " of " + std::to_string(n) +
                              " in image " + img.id);
      }
    }

    auto texture = value_noise(height, width, style.background_texture_scale, rng);
    img.pixels.resize(height * width);
    for (std::size_t k = 0; k < img.pixels.size(); ++k) {
      img.pixels[k] = style.background_level + style.texture_amplitude * texture[k] +
                      style.background_noise_std * rng.normal();
    }
    for (const auto& p : img.points) {
      const auto r0 = static_cast<std::size_t>(std::max(0.0, std::floor(p.y - r - 1.0)));
      const auto r1 = std::min(height, static_cast<std::size_t>(std::ceil(p.y + r + 1.0)));
      const auto c0 = static_cast<std::size_t>(std::max(0.0, std::floor(p.x - r - 1.0)));
      const auto c1 = std::min(width, static_cast<std::size_t>(std::ceil(p.x + r + 1.0)));
      for (std::size_t row = r0; row < r1; ++row) {
        for (std::size_t col = c0; col < c1; ++col) {
          const double d = std::hypot(static_cast<double>(col) + 0.5 - p.x,
                                      static_cast<double>(row) + 0.5 - p.y);
          const double coverage = std::clamp(r + 0.5 - d, 0.0, 1.0);
          img.pixels[row * width + col] += style.dot_intensity * coverage;
        }
      }
    }
    for (auto& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
    out.push_back(std::move(img));
  }
  return out;
}

Split split(const Dataset& dataset, const SplitConfig& cfg) {
  if (!(cfg.labeled_fraction > 0.0 && cfg.labeled_fraction <= 1.0)) {
    throw ConfigError("split: labeled_fraction must lie in (0, 1]");
  }
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(cfg.seed, {0x5b1u}));
  rng.shuffle(std::span<std::size_t>(order));

  const double want = cfg.labeled_fraction * static_cast<double>(dataset.size());
  auto n_labeled = static_cast<std::size_t>(std::ceil(want - 1e-9));
  n_labeled = std::min(n_labeled, dataset.size());
  if (n_labeled == 0) throw ConfigError("split: labeled set would be empty");

  Split s;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_labeled ? s.labeled : s.unlabeled).push_back(dataset[order[i]]);
  }
  return s;
}

void write_image_file(const AnnotatedImage& image, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << image.height << ' ' << image.width << '\n';
  for (std::size_t r = 0; r < image.height; ++r) {
    for (std::size_t c = 0; c < image.width; ++c) {
      if (c) os << ' ';
      os << format_double(image.pixels[r * image.width + c]);
    }
    os << '\n';
  }
  if (!os) throw Error("failed writing " + path.string());
}

void read_image_file(const std::filesystem::path& path, AnnotatedImage& image) {
  std::ifstream is(path);
  if (!is) throw ParseError(path.string() + ": cannot open");
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) parse_fail(path, 1, "missing header");
  ++lineno;
  auto header = tokenize(line);
  double hd = 0, wd = 0;
  if (header.size() != 2 || !parse_double(header[0], hd) || !parse_double(header[1], wd) ||
      hd < 1 || wd < 1 || hd != std::floor(hd) || wd != std::floor(wd)) {
    parse_fail(path, lineno, "expected header \"H W\" with positive integers");
  }
  image.height = static_cast<std::size_t>(hd);
  image.width = static_cast<std::size_t>(wd);
  image.pixels.clear();
  image.pixels.reserve(image.height * image.width);
  while (std::getline(is, line)) {
    ++lineno;
    for (const auto& tok : tokenize(line)) {
      double v = 0;
      if (!parse_double(tok, v)) parse_fail(path, lineno, "invalid number '" + tok + "'");
      if (v < 0.0 || v > 1.0) parse_fail(path, lineno, "pixel value " + tok + " outside [0, 1]");
      image.pixels.push_back(v);
    }
  }
  if (image.pixels.size() != image.height * image.width) {
    parse_fail(path, lineno, "expected " + std::to_string(image.height * image.width) +
                                 " values, found " + std::to_string(image.pixels.size()));
  }
}

void write_points_file(const std::vector<PointAnnotation>& points, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  for (const auto& p : points) os << format_double(p.x) << ' ' << format_double(p.y) << '\n';
  if (!os) throw Error("failed writing " + path.string());
}

std::vector<PointAnnotation> read_points_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError(path.string() + ": cannot open");
  std::vector<PointAnnotation> points;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto tokens = tokenize(line);
    if (tokens.empty()) continue;
    PointAnnotation p;
    if (tokens.size() != 2 || !parse_double(tokens[0], p.x) || !parse_double(tokens[1], p.y)) {
      parse_fail(path, lineno, "expected \"x y\"");
    }
    points.push_back(p);
  }
  return points;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw Error("cannot write " + (dir / "manifest.txt").string());
  for (const auto& img : dataset) {
    if (img.id.empty() || img.id.find_first_of("/\\ \t\n") != std::string::npos) {
      throw ContractError("save_dataset: invalid sample id '" + img.id + "'");
    }
    write_image_file(img, dir / (img.id + ".img"));
    write_points_file(img.points, dir / (img.id + ".pts"));
    manifest << img.id << '\n';
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw ParseError(manifest_path.string() + ": cannot open");
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    auto tokens = tokenize(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 1) parse_fail(manifest_path, lineno, "expected one id per line");
    AnnotatedImage img;
    img.id = tokens[0];
    read_image_file(dir / (img.id + ".img"), img);
    img.points = read_points_file(dir / (img.id + ".pts"));
    for (std::size_t i = 0; i < img.points.size(); ++i) {
      const auto& p = img.points[i];
      if (!(p.x >= 0.0 && p.x < static_cast<double>(img.width) && p.y >= 0.0 &&
            p.y < static_cast<double>(img.height))) {
        parse_fail(dir / (img.id + ".pts"), i + 1, "point outside the image");
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace gpc
