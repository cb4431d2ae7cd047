#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpcount/model.hpp"
#include "gpcount/synth.hpp"
#include "gpcount/trainer.hpp"

namespace gpc {

struct CountPair {
  double gt = 0.0;
  double pred = 0.0;
};

struct ErrorSummary {
  double mae = 0.0;
  /// Root of the mean squared count error.
  double mse = 0.0;
};

/// MAE = mean |gt − pred|; MSE = sqrt(mean |gt − pred|²).
ErrorSummary mae_mse(std::span<const CountPair> pairs);

struct ImageCount {
  std::string id;
  double gt_count = 0.0;
  double pred_count = 0.0;
};

struct MetricsReport {
  double mae = 0.0;
  double mse = 0.0;
  std::size_t n_images = 0;
  std::vector<ImageCount> per_image;

  ErrorSummary summary() const { return {mae, mse}; }
};

/// Whole-image inference over a dataset.
MetricsReport evaluate(const ModelParams& params, const Dataset& data);

/// Mean relative MAE and MSE reduction of `method` over `baseline`, in
/// percent. Positive means the method is better.
double average_gain(const ErrorSummary& baseline, const ErrorSummary& method);
/// Integer percent as printed in result tables.
long display_gain(double gain_percent);

struct PseudoErrorRecord {
  std::string id;
  double err_pred = 0.0;
  double err_pseudo = 0.0;
};

struct PseudoErrors {
  std::vector<PseudoErrorRecord> records;
  std::size_t excluded = 0;  // samples with a zero ground-truth count
};

/// |count − gt| / gt for the prediction and the pseudo-GT of each sample.
PseudoErrors pseudo_errors(std::span<const PseudoSample> samples);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t pred_count = 0;
  std::size_t pseudo_count = 0;
};

/// Equal-width bins over the pooled range of both error kinds. The last
/// bin is closed on the right.
std::vector<HistogramBin> pseudo_error_histogram(std::span<const PseudoErrorRecord> records,
                                                 std::size_t bins);

double median(std::vector<double> values);

/// One line of metrics.csv. `seed` is the trial seed or "mean"; `ag` is
/// left empty when there is no baseline to compare against.
struct MetricsRow {
  std::string run_id;
  double labeled_fraction = 0.0;
  std::string method;
  double mae = 0.0;
  double mse = 0.0;
  std::optional<double> ag;
  std::string seed;
};

/// Six significant digits, locale independent.
std::string format_number(double v);

void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);
void write_pseudo_hist_csv(std::span<const HistogramBin> bins, const std::filesystem::path& path);

struct PerImageRow {
  std::string run_id;
  std::string method;
  std::string seed;
  ImageCount count;
};
void write_per_image_csv(std::span<const PerImageRow> rows, const std::filesystem::path& path);

/// Fills `ag` for every other "mean" row that has a `baseline_method`
/// "mean" row with the same run_id and labeled fraction.
void attach_average_gain(std::vector<MetricsRow>& rows, const std::string& baseline_method = "baseline");

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace gpc
