// gpcount: dataset generation, training runs, sweeps, transfer and reports.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gpcount/errors.hpp"
#include "gpcount/eval.hpp"
#include "gpcount/experiment.hpp"

namespace fs = std::filesystem;
using namespace gpc;

namespace {

struct CountRange {
  std::size_t lo = 5, hi = 50;
};

CountRange parse_range(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("--count expects MIN:MAX, got '" + s + "'");
  CountRange r;
  try {
    std::size_t used = 0;
    r.lo = std::stoul(s.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument("lo");
    const auto rest = s.substr(colon + 1);
    r.hi = std::stoul(rest, &used);
    if (used != rest.size()) throw std::invalid_argument("hi");
  } catch (const std::logic_error&) {
    throw ConfigError("--count expects MIN:MAX, got '" + s + "'");
  }
  if (r.hi < r.lo) throw ConfigError("--count: MAX is below MIN in '" + s + "'");
  return r;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

void add_style_options(CLI::App* app, DomainStyle& style, const std::string& prefix) {
  app->add_option("--" + prefix + "dot-radius", style.dot_radius, "dot radius in pixels");
  app->add_option("--" + prefix + "dot-intensity", style.dot_intensity, "dot brightness above background");
  app->add_option("--" + prefix + "noise-std", style.background_noise_std, "per-pixel Gaussian noise");
  app->add_option("--" + prefix + "texture-scale", style.background_texture_scale, "background lattice spacing");
  app->add_option("--" + prefix + "texture-amplitude", style.texture_amplitude, "background texture strength");
  app->add_option("--" + prefix + "background-level", style.background_level, "mean background brightness");
}

struct DataOptions {
  std::string dir;
  DatasetSpec spec;
  std::string count = "5:50";

  void add(CLI::App* app, const std::string& seed_flag = "--data-seed") {
    app->add_option("--data", dir, "dataset directory written by `generate` (generated in memory if omitted)");
    app->add_option("--n", spec.n_train, "training pool size")->check(CLI::PositiveNumber);
    app->add_option("--n-val", spec.n_val, "validation images");
    app->add_option("--n-test", spec.n_test, "test images")->check(CLI::PositiveNumber);
    app->add_option("--size", spec.size, "image side in pixels")->check(CLI::PositiveNumber);
    app->add_option("--count", count, "count range MIN:MAX");
    app->add_option(seed_flag, spec.seed, "dataset seed");
    add_style_options(app, spec.style, "");
  }

  DatasetSpec resolved() const {
    auto s = spec;
    const auto r = parse_range(count);
    s.count_min = r.lo;
    s.count_max = r.hi;
    return s;
  }

  DataBundle load() const { return dir.empty() ? generate_bundle(resolved()) : load_bundle(dir); }
};

struct TrainOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::size_t trials = 5;
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string name = "run";

  void add(CLI::App* app) {
    app->add_option("--config", config_file, "key=value training config file");
    app->add_option("--set", overrides, "override one config key (key=value); repeatable");
    app->add_option("--trials", trials, "trials per grid point")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "first trial seed");
    app->add_option("--out", out, "output directory");
    app->add_option("--name", name, "run id written to metrics");
  }

  // Defaults, then the config file, then GPCOUNT_* variables, then --set.
  TrainConfig config() const {
    TrainConfig cfg;
    if (!config_file.empty()) cfg = load_train_config(config_file, cfg);
    apply_env_overrides(cfg);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
  }
};

void log_trial(const ExperimentSpec& spec, const TrialResult& t) {
  std::fprintf(stderr, "[%s] %s fraction=%g seed=%llu test_mae=%.4f test_mse=%.4f\n", spec.name.c_str(),
               method_name(spec.method).c_str(), spec.labeled_fraction,
               static_cast<unsigned long long>(t.seed), t.test.mae, t.test.mse);
}

std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

void save_checkpoints(const ExperimentResult& r, const fs::path& dir, const std::string& tag) {
  for (const auto& t : r.trials) {
    save_checkpoint(t.params, dir / "checkpoints" / (tag + "_" + seed_tag(t.seed) + ".ckpt"));
  }
}

// Pooled pseudo-GT errors of the final epoch across trials.
void write_fig5(const std::vector<ExperimentResult>& runs, const fs::path& path) {
  std::vector<PseudoErrorRecord> records;
  for (const auto& r : runs) {
    for (const auto& t : r.trials) {
      auto pe = pseudo_errors(t.history.final_pseudo);
      if (pe.excluded) std::fprintf(stderr, "warning: %zu samples with zero count excluded\n", pe.excluded);
      records.insert(records.end(), pe.records.begin(), pe.records.end());
    }
  }
  if (records.empty()) return;
  write_pseudo_hist_csv(pseudo_error_histogram(records, 20), path);
}

struct Collected {
  std::vector<MetricsRow> test;
  std::vector<MetricsRow> val;
  std::vector<PerImageRow> per_image;
  std::vector<ExperimentResult> gp_runs;

  void add(const ExperimentResult& r, const std::string& run_id) {
    auto rows = metrics_rows(r);
    for (auto& row : rows) row.run_id = run_id;
    test.insert(test.end(), rows.begin(), rows.end());
    if (!r.trials.empty() && r.trials.front().val.n_images) {
      for (const auto& t : r.trials) {
        val.push_back({run_id, r.spec.labeled_fraction, method_name(r.spec.method), t.val.mae, t.val.mse,
                       std::nullopt, std::to_string(t.seed)});
      }
      val.push_back({run_id, r.spec.labeled_fraction, method_name(r.spec.method), r.mean_val.mae,
                     r.mean_val.mse, std::nullopt, "mean"});
    }
    for (auto row : per_image_rows(r)) {
      row.run_id = run_id;
      per_image.push_back(std::move(row));
    }
    if (r.spec.method == Method::kGp) gp_runs.push_back(r);
  }

  void write(const fs::path& out, const std::string& baseline = "baseline") {
    attach_average_gain(test, baseline);
    attach_average_gain(val, baseline);
    write_metrics_csv(test, out / "metrics.csv");
    if (!val.empty()) write_metrics_csv(val, out / "val_metrics.csv");
    write_per_image_csv(per_image, out / "per_image.csv");
    write_fig5(gp_runs, out / "pseudo_hist.csv");
  }
};

std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  for (const auto& m : split_list(list)) out.push_back(parse_method(m));
  if (out.empty()) throw ConfigError("--method list is empty");
  return out;
}

int cmd_generate(const DataOptions& data, const std::string& out) {
  const auto bundle = generate_bundle(data.resolved());
  save_bundle(bundle, out);
  std::fprintf(stderr, "wrote %zu train, %zu val, %zu test images to %s\n", bundle.train.size(),
               bundle.val.size(), bundle.test.size(), out.c_str());
  return 0;
}

int cmd_train(const DataOptions& data, const TrainOptions& opt, const std::string& methods, double fraction) {
  const auto cfg = opt.config();
  const auto bundle = data.load();
  const fs::path out = opt.out;
  fs::create_directories(out);
  save_train_config(cfg, out / "config.txt");
  Collected c;
  for (auto m : parse_methods(methods)) {
    ExperimentSpec spec;
    spec.name = opt.name;
    spec.labeled_fraction = fraction;
    spec.train = cfg;
    spec.method = m;
    spec.trials = opt.trials;
    spec.base_seed = opt.seed;
    const auto r = run_experiment(spec, bundle, [&](const TrialResult& t) { log_trial(spec, t); });
    save_checkpoints(r, out, method_name(m));
    c.add(r, opt.name);
  }
  c.write(out);
  return 0;
}

int cmd_sweep(const DataOptions& data, const TrainOptions& opt, const std::string& methods,
              const std::string& axis, const std::string& values, double fraction) {
  if (axis != "labeled_fraction" && axis != "lambda_un" && axis != "n_neighbors") {
    throw ConfigError("--axis must be labeled_fraction, lambda_un or n_neighbors");
  }
  const auto grid = split_list(values);
  if (grid.empty()) throw ConfigError("--values: empty grid");
  const auto base = opt.config();
  const auto bundle = data.load();
  const fs::path out = opt.out;
  fs::create_directories(out);
  save_train_config(base, out / "config.txt");
  Collected c;
  for (auto m : parse_methods(methods)) {
    // Only the labeled fraction changes a labeled-only run.
    const bool fixed = m == Method::kBaseline && axis != "labeled_fraction";
    for (std::size_t g = 0; g < (fixed ? 1 : grid.size()); ++g) {
      ExperimentSpec spec;
      spec.name = opt.name;
      spec.labeled_fraction = fraction;
      spec.train = base;
      spec.method = m;
      spec.trials = opt.trials;
      spec.base_seed = opt.seed;
      std::string run_id = opt.name;
      if (axis == "labeled_fraction") {
        char* end = nullptr;
        spec.labeled_fraction = std::strtod(grid[g].c_str(), &end);
        if (end != grid[g].c_str() + grid[g].size()) throw ConfigError("--values: bad fraction '" + grid[g] + "'");
      } else if (!fixed) {
        set_config_value(spec.train, axis, grid[g]);
        run_id += "/" + axis + "=" + grid[g];
      }
      spec.name = run_id;
      const auto r = run_experiment(spec, bundle, [&](const TrialResult& t) { log_trial(spec, t); });
      c.add(r, run_id);
    }
  }
  c.write(out);
  return 0;
}

int cmd_transfer(TransferSpec spec, const TrainOptions& opt, const std::string& count) {
  const auto r = parse_range(count);
  for (auto* d : {&spec.source, &spec.target}) {
    d->count_min = r.lo;
    d->count_max = r.hi;
  }
  spec.train = opt.config();
  spec.trials = opt.trials;
  spec.base_seed = opt.seed;
  const fs::path out = opt.out;
  fs::create_directories(out);
  save_train_config(spec.train, out / "config.txt");
  auto res = run_transfer(spec);
  res.no_adapt.spec.name = res.gp.spec.name = opt.name;
  Collected c;
  for (auto* e : {&res.no_adapt, &res.gp}) {
    for (const auto& t : e->trials) log_trial(e->spec, t);
  }
  auto relabel = [](std::vector<MetricsRow>& rows) {
    for (auto& row : rows) {
      if (row.method == "baseline") row.method = "no_adapt";
    }
  };
  c.add(res.no_adapt, opt.name);
  c.add(res.gp, opt.name);
  relabel(c.test);
  relabel(c.val);
  for (auto& row : c.per_image) {
    if (row.method == "baseline") row.method = "no_adapt";
  }
  save_checkpoints(res.no_adapt, out, "no_adapt");
  save_checkpoints(res.gp, out, "gp");
  c.write(out, "no_adapt");
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<MetricsRow> rows;
  for (const auto& in : inputs) {
    fs::path p = in;
    if (fs::is_directory(p)) p /= "metrics.csv";
    auto r = read_metrics_csv(p);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const bool transfer = std::any_of(rows.begin(), rows.end(), [](const MetricsRow& r) { return r.method == "no_adapt"; });
  attach_average_gain(rows, transfer ? "no_adapt" : "baseline");

  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-32s %9s %-10s %10s %10s %6s\n", "run_id", "labeled", "method", "mae", "mse",
                "ag");
  os << line;
  for (const auto& r : rows) {
    if (r.seed != "mean") continue;
    const std::string ag = r.ag ? std::to_string(display_gain(*r.ag)) : "-";
    std::snprintf(line, sizeof line, "%-32s %9s %-10s %10s %10s %6s\n", r.run_id.c_str(),
                  format_number(r.labeled_fraction).c_str(), r.method.c_str(), format_number(r.mae).c_str(),
                  format_number(r.mse).c_str(), ag.c_str());
    os << line;
  }
  std::cout << os.str();
  if (!out.empty()) {
    write_file_atomic(fs::path(out) / "report.txt", os.str());
    write_metrics_csv(rows, fs::path(out) / "metrics.csv");
  }
  return 0;
}

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const TrainingError*>(&e)) return "training";
  if (dynamic_cast<const Error*>(&e)) return "runtime";
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return "io";
  return "internal";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised crowd counting experiments"};
  app.require_subcommand(1);

  DataOptions gen_data;
  std::string gen_out = "data";
  auto* gen = app.add_subcommand("generate", "write a synthetic train/val/test dataset");
  gen_data.add(gen, "--seed");
  gen->add_option("--out", gen_out, "output directory");

  DataOptions train_data;
  TrainOptions train_opt;
  std::string train_methods = "baseline,gp";
  double train_fraction = 0.05;
  auto* trn = app.add_subcommand("train", "train one or more methods over several trial seeds");
  train_data.add(trn);
  train_opt.add(trn);
  trn->add_option("--method", train_methods, "comma-separated methods: baseline, gp, ranking");
  trn->add_option("--labeled", train_fraction, "labeled fraction of the training pool");

  DataOptions sweep_data;
  TrainOptions sweep_opt;
  std::string sweep_methods = "baseline,gp";
  std::string sweep_axis = "labeled_fraction";
  std::string sweep_values = "0.05,0.25,0.5,0.75";
  double sweep_fraction = 0.05;
  auto* swp = app.add_subcommand("sweep", "train over a grid of one parameter");
  sweep_data.add(swp);
  sweep_opt.add(swp);
  swp->add_option("--method", sweep_methods, "comma-separated methods");
  swp->add_option("--axis", sweep_axis, "labeled_fraction, lambda_un or n_neighbors");
  swp->add_option("--values", sweep_values, "comma-separated grid");
  swp->add_option("--labeled", sweep_fraction, "labeled fraction for non-fraction axes");

  TransferSpec xfer;
  xfer.target.seed = 2;
  xfer.target.style.dot_intensity = 0.35;
  xfer.target.style.background_level = 0.35;
  TrainOptions xfer_opt;
  xfer_opt.trials = 3;
  xfer_opt.name = "transfer";
  std::string xfer_count = "5:50";
  auto* xfr = app.add_subcommand("transfer", "labeled source style, unlabeled target style");
  xfer_opt.add(xfr);
  xfr->add_option("--n", xfer.source.n_train, "source pool size");
  xfr->add_option("--n-target", xfer.target.n_train, "unlabeled target pool size");
  xfr->add_option("--n-test", xfer.target.n_test, "held-out target images");
  xfr->add_option("--size", xfer.source.size, "image side in pixels");
  xfr->add_option("--count", xfer_count, "count range MIN:MAX");
  xfr->add_option("--source-seed", xfer.source.seed, "source dataset seed");
  xfr->add_option("--target-seed", xfer.target.seed, "target dataset seed");
  add_style_options(xfr, xfer.source.style, "source-");
  add_style_options(xfr, xfer.target.style, "target-");

  std::vector<std::string> report_in;
  std::string report_out;
  auto* rep = app.add_subcommand("report", "summarize metrics.csv files with average gains");
  rep->add_option("--in", report_in, "run directories or metrics.csv files")->required();
  rep->add_option("--out", report_out, "directory for report.txt and merged metrics.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) std::fprintf(stderr, "error kind=usage message=\"%s\"\n", e.what());
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_data, gen_out);
    if (trn->parsed()) return cmd_train(train_data, train_opt, train_methods, train_fraction);
    if (swp->parsed()) return cmd_sweep(sweep_data, sweep_opt, sweep_methods, sweep_axis, sweep_values, sweep_fraction);
    if (xfr->parsed()) {
      xfer.target.size = xfer.source.size;
      return cmd_transfer(xfer, xfer_opt, xfer_count);
    }
    if (rep->parsed()) return cmd_report(report_in, report_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error kind=%s message=\"%s\"\n", error_kind(e), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error kind=%s message=\"%s\"\n", error_kind(e), e.what());
    return 1;
  }
  return 0;
}
