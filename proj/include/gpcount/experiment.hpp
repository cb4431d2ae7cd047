#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gpcount/eval.hpp"
#include "gpcount/synth.hpp"
#include "gpcount/trainer.hpp"

namespace gpc {

enum class Method { kBaseline, kGp, kRanking };

std::string method_name(Method m);
/// Throws ConfigError for anything but baseline, gp or ranking.
Method parse_method(const std::string& name);

/// Sets the gp/ranking flags of `cfg` for a method.
TrainConfig configure_method(TrainConfig cfg, Method m);

struct DatasetSpec {
  std::size_t n_train = 200;
  std::size_t n_val = 50;
  std::size_t n_test = 50;
  std::size_t size = 64;
  std::size_t count_min = 5;
  std::size_t count_max = 50;
  DomainStyle style;
  std::uint64_t seed = 1;
};

/// Train, validation and test pools drawn from independent seed streams.
struct DataBundle {
  Dataset train;
  Dataset val;
  Dataset test;
};

DataBundle generate_bundle(const DatasetSpec& spec);
/// `<dir>/train`, `<dir>/val`, `<dir>/test` in the on-disk dataset format.
void save_bundle(const DataBundle& bundle, const std::filesystem::path& dir);
DataBundle load_bundle(const std::filesystem::path& dir);

struct ExperimentSpec {
  std::string name = "run";
  double labeled_fraction = 0.05;
  TrainConfig train;
  Method method = Method::kBaseline;
  std::size_t trials = 5;
  /// Trial t uses seed base_seed + t for both the split and training.
  /// With interleaving and steps_per_epoch = 0, every method gets
  /// ceil(|train pool| / batch_size) steps per epoch.
  std::uint64_t base_seed = 0;

  void validate() const;
};

struct TrialResult {
  std::uint64_t seed = 0;
  MetricsReport val;
  MetricsReport test;
  TrainHistory history;
  ModelParams params;
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<TrialResult> trials;
  ErrorSummary mean_val;
  ErrorSummary mean_test;
};

using TrialCallback = std::function<void(const TrialResult&)>;

/// Runs every trial of the spec on one data bundle.
ExperimentResult run_experiment(const ExperimentSpec& spec, const DataBundle& data,
                                const TrialCallback& on_trial = {});

/// Per-trial rows followed by the mean row, on the test split.
std::vector<MetricsRow> metrics_rows(const ExperimentResult& result);
std::vector<PerImageRow> per_image_rows(const ExperimentResult& result);

/// Domain-shift experiment: a labeled source pool and an unlabeled target
/// pool, evaluated on held-out target images.
struct TransferSpec {
  DatasetSpec source;
  DatasetSpec target;
  TrainConfig train;
  std::size_t trials = 3;
  std::uint64_t base_seed = 0;
};

struct TransferResult {
  ExperimentResult no_adapt;
  ExperimentResult gp;
};

TransferResult run_transfer(const TransferSpec& spec);

}  // namespace gpc
