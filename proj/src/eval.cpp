#include "gpcount/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "gpcount/errors.hpp"

namespace gpc {

ErrorSummary mae_mse(std::span<const CountPair> pairs) {
  if (pairs.empty()) throw ContractError("mae_mse: no count pairs");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (const auto& p : pairs) {
    const double e = std::abs(p.gt - p.pred);
    abs_sum += e;
    sq_sum += e * e;
  }
  const double n = static_cast<double>(pairs.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

MetricsReport evaluate(const ModelParams& params, const Dataset& data) {
  if (data.empty()) throw ContractError("evaluate: empty dataset");
  const auto model = bind(params, false);
  MetricsReport r;
  std::vector<CountPair> pairs;
  for (const auto& img : data) {
    const auto pred = forward(img.to_array(), model);
    double c = 0.0;
    for (double v : pred.value().data) c += v;
    r.per_image.push_back({img.id, static_cast<double>(img.gt_count()), c});
    pairs.push_back({static_cast<double>(img.gt_count()), c});
  }
  const auto s = mae_mse(pairs);
  r.mae = s.mae;
  r.mse = s.mse;
  r.n_images = data.size();
  return r;
}

double average_gain(const ErrorSummary& baseline, const ErrorSummary& method) {
  if (!(baseline.mae > 0.0) || !(baseline.mse > 0.0)) {
    throw ContractError("average_gain: baseline errors must be positive");
  }
  const double g_mae = (baseline.mae - method.mae) / baseline.mae;
  const double g_mse = (baseline.mse - method.mse) / baseline.mse;
  return 50.0 * (g_mae + g_mse);
}

long display_gain(double gain_percent) { return std::lround(gain_percent); }

PseudoErrors pseudo_errors(std::span<const PseudoSample> samples) {
  PseudoErrors out;
  for (const auto& s : samples) {
    if (!(s.gt_count > 0.0)) {
      ++out.excluded;
      continue;
    }
    out.records.push_back({s.id, std::abs(s.pred_count - s.gt_count) / s.gt_count,
                           std::abs(s.pseudo_count - s.gt_count) / s.gt_count});
  }
  return out;
}

std::vector<HistogramBin> pseudo_error_histogram(std::span<const PseudoErrorRecord> records,
                                                 std::size_t bins) {
  if (bins == 0) throw ContractError("pseudo_error_histogram: need at least one bin");
  if (records.empty()) throw ContractError("pseudo_error_histogram: no records");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& r : records) {
    for (double e : {r.err_pred, r.err_pseudo}) {
      if (!(e >= 0.0) || !std::isfinite(e)) {
        throw ContractError("pseudo_error_histogram: error values must be finite and nonnegative");
      }
      lo = std::min(lo, e);
      hi = std::max(hi, e);
    }
  }
  if (hi == lo) hi = lo + 1.0;
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<HistogramBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lo = lo + width * static_cast<double>(b);
    out[b].hi = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
  }
  auto index = [&](double e) {
    const auto b = static_cast<std::size_t>((e - lo) / width);
    return std::min(b, bins - 1);
  };
  for (const auto& r : records) {
    ++out[index(r.err_pred)].pred_count;
    ++out[index(r.err_pseudo)].pseudo_count;
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty list");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error("cannot write " + tmp.string());
    os << content;
    if (!os) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

void check_field(const std::string& s, const char* what) {
  if (s.find_first_of(",\n\r") != std::string::npos) {
    throw ContractError(std::string("csv: ") + what + " may not contain commas or newlines: " + s);
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) f.push_back(tok);
  if (!line.empty() && line.back() == ',') f.emplace_back();
  return f;
}

double parse_number(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ParseError(where + ": bad number '" + s + "'");
  return v;
}

constexpr const char* kMetricsHeader = "run_id,labeled_fraction,method,mae,mse,ag,seed";

}  // namespace

void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) {
    check_field(r.run_id, "run_id");
    check_field(r.method, "method");
    check_field(r.seed, "seed");
    out += r.run_id + ',' + format_number(r.labeled_fraction) + ',' + r.method + ',' + format_number(r.mae) +
           ',' + format_number(r.mse) + ',' + (r.ag ? format_number(*r.ag) : "") + ',' + r.seed + '\n';
  }
  write_file_atomic(path, out);
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) {
    throw ParseError(path.string() + ":1: expected header '" + kMetricsHeader + "'");
  }
  std::vector<MetricsRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    const auto f = split_csv(line);
    if (f.size() != 7) throw ParseError(where + ": expected 7 fields, got " + std::to_string(f.size()));
    MetricsRow r;
    r.run_id = f[0];
    r.labeled_fraction = parse_number(f[1], where);
    r.method = f[2];
    r.mae = parse_number(f[3], where);
    r.mse = parse_number(f[4], where);
    if (!f[5].empty()) r.ag = parse_number(f[5], where);
    r.seed = f[6];
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_pseudo_hist_csv(std::span<const HistogramBin> bins, const std::filesystem::path& path) {
  std::string out = "bin_lo,bin_hi,pred_count,pseudo_count\n";
  for (const auto& b : bins) {
    out += format_number(b.lo) + ',' + format_number(b.hi) + ',' + std::to_string(b.pred_count) + ',' +
           std::to_string(b.pseudo_count) + '\n';
  }
  write_file_atomic(path, out);
}

void write_per_image_csv(std::span<const PerImageRow> rows, const std::filesystem::path& path) {
  std::string out = "run_id,method,seed,id,gt_count,pred_count\n";
  for (const auto& r : rows) {
    check_field(r.count.id, "id");
    out += r.run_id + ',' + r.method + ',' + r.seed + ',' + r.count.id + ',' + format_number(r.count.gt_count) +
           ',' + format_number(r.count.pred_count) + '\n';
  }
  write_file_atomic(path, out);
}

void attach_average_gain(std::vector<MetricsRow>& rows, const std::string& baseline_method) {
  std::map<std::pair<std::string, double>, ErrorSummary> baselines;
  for (const auto& r : rows) {
    if (r.method == baseline_method && r.seed == "mean") baselines[{r.run_id, r.labeled_fraction}] = {r.mae, r.mse};
  }
  for (auto& r : rows) {
    if (r.method == baseline_method || r.seed != "mean") continue;
    const auto it = baselines.find({r.run_id, r.labeled_fraction});
    if (it == baselines.end() || !(it->second.mae > 0.0) || !(it->second.mse > 0.0)) continue;
    r.ag = average_gain(it->second, {r.mae, r.mse});
  }
}

}  // namespace gpc
