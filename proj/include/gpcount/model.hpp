#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gpcount/tensor.hpp"

namespace gpc {

/// Architecture of the encoder/decoder density regressor.
///
/// Encoder: one 3×3 stride-2 conv+ReLU stage per entry of
/// `encoder_channels`, then a 1×1 projection to `latent_channels`. The
/// flattened projection output is the latent vector used by the GP.
/// Decoder: 3×3 conv (latent→latent) + ReLU, 1×1 conv (latent→1) + ReLU,
/// multiplied by `output_scale`, bilinearly resized to the input size.
struct ModelConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t in_channels = 1;
  std::vector<std::size_t> encoder_channels{8, 16, 32};
  std::size_t latent_channels = 16;
  /// Keeps the decoder's pre-scale output near unit magnitude; densities
  /// are a few thousandths per pixel.
  double output_scale = 0.01;

  std::size_t downsample() const { return std::size_t{1} << encoder_channels.size(); }
  std::size_t latent_height(std::size_t h) const { return h / downsample(); }
  std::size_t latent_width(std::size_t w) const { return w / downsample(); }
  /// M, the flattened latent length at the configured input size.
  std::size_t latent_dim() const {
    return latent_channels * latent_height(height) * latent_width(width);
  }

  bool operator==(const ModelConfig&) const = default;
};

struct ConvParams {
  Array weight;  // [Cout×Cin×k×k]
  Array bias;    // [Cout]
  std::size_t stride = 1;
  std::size_t padding = 0;

  bool operator==(const ConvParams&) const = default;
};

/// Value-semantic parameter set; copies are deep.
struct ModelParams {
  ModelConfig config;
  std::vector<ConvParams> encoder;  // stages then projection
  std::vector<ConvParams> decoder;

  /// Weight and bias arrays in a fixed order (encoder first).
  std::vector<Array*> tensors();
  std::vector<const Array*> tensors() const;
  std::vector<std::string> tensor_names() const;
  std::size_t parameter_count() const;

  bool operator==(const ModelParams&) const = default;
};

/// Graph leaves for one forward/backward pass over a parameter set.
struct BoundLayer {
  ad::Node weight;
  ad::Node bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct BoundModel {
  ModelConfig config;
  std::vector<BoundLayer> encoder;
  std::vector<BoundLayer> decoder;

  /// Leaf nodes in ModelParams::tensors() order.
  std::vector<ad::Node> leaves() const;
};

/// Wraps params as graph leaves; `trainable` marks them requires_grad.
BoundModel bind(const ModelParams& params, bool trainable);

/// He-uniform init bounded by sqrt(6 / fan_in); the last decoder layer is
/// scaled down further and given a small positive bias so the output ReLU
/// starts active. Deterministic per seed.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

struct Encoded {
  Array latent;   // detached copy, flattened to [M]
  ad::Node node;  // [C×h×w] graph node
};

/// Image [C_in×H×W] -> latent. H and W must be multiples of the encoder
/// downsampling factor.
Encoded encode(const Array& image, const BoundModel& model);

/// Latent node [C×h×w] -> density prediction [1×out_h×out_w].
ad::Node decode(const ad::Node& latent, const BoundModel& model, std::size_t out_h,
                std::size_t out_w);

/// decode(encode(image)) at the image's own resolution.
ad::Node forward(const Array& image, const BoundModel& model);

/// Predicted count (sum of the density map) without building a graph.
double predict_count(const Array& image, const ModelParams& params);

/// Versioned header, shape table, raw little-endian float64 values.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace gpc
