#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "gpcount/density.hpp"
#include "gpcount/gp.hpp"
#include "gpcount/model.hpp"
#include "gpcount/synth.hpp"

namespace gpc {

struct TrainConfig {
  double lambda_un = 0.6;
  std::size_t n_neighbors = 8;
  double noise_variance = 1.0;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 8;
  std::size_t epochs = 30;
  /// Side of the square training crop; 0 trains on whole images.
  std::size_t crop_size = 0;
  std::uint64_t seed = 0;
  bool gp_enabled = false;
  bool ranking_enabled = false;

  double ranking_margin = 0.0;
  bool hflip = true;
  /// Mix one labeled and one unlabeled batch per step. When false, each
  /// epoch runs a whole labeled pass and then a whole unlabeled pass.
  bool interleave = true;
  /// Optimizer steps per interleaved epoch; 0 makes one pass over the
  /// larger of the two sets. Labeled batches cycle as needed.
  std::size_t steps_per_epoch = 0;
  /// Treat the pseudo-GT as a constant target.
  bool detach_pseudo = true;
  NeighborMetric neighbor_metric = NeighborMetric::kCosine;
  double density_sigma = 2.0;
  std::size_t latent_channels = 16;
  std::vector<std::size_t> encoder_channels{8, 16, 32};

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
  GPConfig gp() const { return {n_neighbors, noise_variance, neighbor_metric}; }
  ModelConfig model(std::size_t height, std::size_t width) const;
};

/// Sets one field from its textual form; unknown keys are ConfigErrors.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
/// Every field as key/value text, in a stable order.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg);
/// Flat `key=value` file; `#` starts a comment.
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});
void save_train_config(const TrainConfig& cfg, const std::filesystem::path& path);
/// Applies `<prefix><KEY>` environment variables (upper-cased keys).
void apply_env_overrides(TrainConfig& cfg, const std::string& prefix = "GPCOUNT_");

class Adam {
 public:
  Adam() = default;
  Adam(const ModelParams& params, double lr, double beta1, double beta2, double eps);

  void step(ModelParams& params, const std::vector<Array>& grads);
  std::size_t steps() const { return t_; }

 private:
  double lr_ = 0.0, beta1_ = 0.0, beta2_ = 0.0, eps_ = 0.0;
  std::size_t t_ = 0;
  std::vector<Array> m_, v_;
};

/// Running summary of every predictive variance computed during training.
struct VarianceStats {
  std::size_t count = 0;
  std::size_t violations = 0;  // outside [σ², 1 + σ²]
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;

  void add(double v, double noise);
  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double supervised = 0.0;
  std::size_t labeled_steps = 0;
  /// NaN when the epoch had no unlabeled stage.
  double unsupervised = std::numeric_limits<double>::quiet_NaN();
  double mean_variance = std::numeric_limits<double>::quiet_NaN();
  double ranking_active = std::numeric_limits<double>::quiet_NaN();
  std::size_t unlabeled_steps = 0;
  std::size_t skipped_samples = 0;
};

/// Counts seen for one unlabeled sample during the final epoch.
struct PseudoSample {
  std::string id;
  double gt_count = 0.0;
  double pred_count = 0.0;
  double pseudo_count = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  VarianceStats variance;
  std::vector<PseudoSample> final_pseudo;
  std::size_t skipped_steps = 0;  // steps with an identically zero gradient
};

struct TrainState {
  ModelParams params;
  Adam optimizer;
  LatentBank bank;
  std::size_t epoch = 0;
  TrainHistory history;
};

TrainState init_state(const TrainConfig& cfg, std::size_t height, std::size_t width);

/// Ground-truth density targets for a labeled set.
std::vector<DensityMap> density_targets(const Dataset& labeled, double sigma);

/// One pass of supervised steps, then a fresh latent bank.
void labeled_stage(TrainState& state, const Dataset& labeled, std::span<const DensityMap> targets,
                   const TrainConfig& cfg);

/// One pass over the unlabeled set using GP pseudo-GT or the ranking hinge.
void unlabeled_stage(TrainState& state, const Dataset& unlabeled, const TrainConfig& cfg);

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

/// Called after every epoch with the current state.
using EpochCallback = std::function<void(const TrainState&)>;

TrainResult train(const Dataset& labeled, const Dataset& unlabeled, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace gpc
