#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gpcount/model.hpp"
#include "gpcount/random.hpp"

namespace testing_util {

// Rebuilds a BoundModel around caller-supplied leaves, in tensors() order.
inline gpc::BoundModel model_from_leaves(const gpc::ModelParams& params, const std::vector<gpc::ad::Node>& leaves) {
  gpc::BoundModel m;
  m.config = params.config;
  std::size_t k = 0;
  for (const auto& l : params.encoder) {
    m.encoder.push_back({leaves[k], leaves[k + 1], l.stride, l.padding});
    k += 2;
  }
  for (const auto& l : params.decoder) {
    m.decoder.push_back({leaves[k], leaves[k + 1], l.stride, l.padding});
    k += 2;
  }
  return m;
}

inline std::vector<gpc::Array> param_arrays(const gpc::ModelParams& params) {
  std::vector<gpc::Array> out;
  for (const auto* t : params.tensors()) out.push_back(*t);
  return out;
}

// Zero biases behind a dead ReLU channel put pre-activations exactly on the
// kink, where one-sided and central differences disagree by design.
inline gpc::ModelParams with_random_biases(gpc::ModelParams p, gpc::Rng& rng) {
  for (auto* group : {&p.encoder, &p.decoder})
    for (auto& l : *group)
      for (auto& v : l.bias.data) v = rng.uniform(0.02, 0.1);
  return p;
}

inline gpc::ModelConfig small_model(std::size_t size = 16) {
  gpc::ModelConfig c;
  c.height = c.width = size;
  c.encoder_channels = {2, 3};
  c.latent_channels = 2;
  return c;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("gpcount_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace testing_util
