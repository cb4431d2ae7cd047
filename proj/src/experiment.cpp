#include "gpcount/experiment.hpp"

#include <algorithm>

#include "gpcount/errors.hpp"
#include "gpcount/random.hpp"

namespace gpc {

std::string method_name(Method m) {
  switch (m) {
    case Method::kBaseline: return "baseline";
    case Method::kGp: return "gp";
    case Method::kRanking: return "ranking";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "baseline") return Method::kBaseline;
  if (name == "gp") return Method::kGp;
  if (name == "ranking") return Method::kRanking;
  throw ConfigError("unknown method '" + name + "' (expected baseline, gp or ranking)");
}

namespace {

// Equal optimizer budget for every arm regardless of how much of the pool
// is labeled.
TrainConfig matched_steps(TrainConfig cfg, std::size_t pool) {
  if (cfg.interleave && cfg.steps_per_epoch == 0) {
    cfg.steps_per_epoch = (pool + cfg.batch_size - 1) / cfg.batch_size;
  }
  return cfg;
}

}  // namespace

TrainConfig configure_method(TrainConfig cfg, Method m) {
  cfg.gp_enabled = m == Method::kGp;
  cfg.ranking_enabled = m == Method::kRanking;
  return cfg;
}

DataBundle generate_bundle(const DatasetSpec& spec) {
  auto make = [&](std::size_t n, std::uint64_t stream, const char* prefix) {
    return generate_dataset(n, spec.size, spec.size, spec.count_min, spec.count_max, spec.style,
                            derive_seed(spec.seed, {stream}), prefix);
  };
  DataBundle b;
  b.train = make(spec.n_train, 1, "train");
  if (spec.n_val) b.val = make(spec.n_val, 2, "val");
  b.test = make(spec.n_test, 3, "test");
  return b;
}

void save_bundle(const DataBundle& bundle, const std::filesystem::path& dir) {
  save_dataset(bundle.train, dir / "train");
  if (!bundle.val.empty()) save_dataset(bundle.val, dir / "val");
  save_dataset(bundle.test, dir / "test");
}

DataBundle load_bundle(const std::filesystem::path& dir) {
  DataBundle b;
  b.train = load_dataset(dir / "train");
  if (std::filesystem::exists(dir / "val")) b.val = load_dataset(dir / "val");
  b.test = load_dataset(dir / "test");
  return b;
}

void ExperimentSpec::validate() const {
  if (trials == 0) throw ConfigError("trials must be at least 1");
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
    throw ConfigError("labeled fraction must lie in (0, 1]");
  }
  if (name.empty() || name.find_first_of(",\n") != std::string::npos) {
    throw ConfigError("experiment name must be nonempty and free of commas");
  }
  configure_method(train, method).validate();
}

namespace {

ErrorSummary mean_of(const std::vector<TrialResult>& trials, bool test) {
  ErrorSummary s;
  for (const auto& t : trials) {
    const auto& r = test ? t.test : t.val;
    s.mae += r.mae;
    s.mse += r.mse;
  }
  s.mae /= static_cast<double>(trials.size());
  s.mse /= static_cast<double>(trials.size());
  return s;
}

void finish(ExperimentResult& r, bool has_val) {
  r.mean_test = mean_of(r.trials, true);
  if (has_val) r.mean_val = mean_of(r.trials, false);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const DataBundle& data,
                                const TrialCallback& on_trial) {
  spec.validate();
  if (data.train.empty() || data.test.empty()) throw ContractError("run_experiment: empty train or test set");
  ExperimentResult result;
  result.spec = spec;
  for (std::size_t t = 0; t < spec.trials; ++t) {
    const std::uint64_t seed = spec.base_seed + t;
    const auto parts = split(data.train, {spec.labeled_fraction, seed});
    auto cfg = matched_steps(configure_method(spec.train, spec.method), data.train.size());
    cfg.seed = seed;
    // The baseline never sees the unlabeled pool.
    static const Dataset kNone;
    const auto& unlabeled = spec.method == Method::kBaseline ? kNone : parts.unlabeled;
    auto trained = train(parts.labeled, unlabeled, cfg);
    TrialResult tr;
    tr.seed = seed;
    if (!data.val.empty()) tr.val = evaluate(trained.params, data.val);
    tr.test = evaluate(trained.params, data.test);
    tr.history = std::move(trained.history);
    tr.params = std::move(trained.params);
    if (on_trial) on_trial(tr);
    result.trials.push_back(std::move(tr));
  }
  finish(result, !data.val.empty());
  return result;
}

std::vector<MetricsRow> metrics_rows(const ExperimentResult& result) {
  std::vector<MetricsRow> rows;
  const auto& spec = result.spec;
  const auto method = method_name(spec.method);
  for (const auto& t : result.trials) {
    rows.push_back({spec.name, spec.labeled_fraction, method, t.test.mae, t.test.mse, std::nullopt,
                    std::to_string(t.seed)});
  }
  rows.push_back({spec.name, spec.labeled_fraction, method, result.mean_test.mae, result.mean_test.mse,
                  std::nullopt, "mean"});
  return rows;
}

std::vector<PerImageRow> per_image_rows(const ExperimentResult& result) {
  std::vector<PerImageRow> rows;
  const auto method = method_name(result.spec.method);
  for (const auto& t : result.trials) {
    for (const auto& c : t.test.per_image) rows.push_back({result.spec.name, method, std::to_string(t.seed), c});
  }
  return rows;
}

TransferResult run_transfer(const TransferSpec& spec) {
  if (spec.trials == 0) throw ConfigError("trials must be at least 1");
  auto source = spec.source;
  source.n_val = 0;
  source.n_test = 1;
  const auto src = generate_bundle(source);
  const auto tgt = generate_bundle(spec.target);

  TransferResult out;
  for (auto* r : {&out.no_adapt, &out.gp}) {
    r->spec.name = "transfer";
    r->spec.labeled_fraction = 1.0;
    r->spec.train = spec.train;
    r->spec.trials = spec.trials;
    r->spec.base_seed = spec.base_seed;
  }
  out.no_adapt.spec.method = Method::kBaseline;
  out.gp.spec.method = Method::kGp;
  static const Dataset kNone;
  for (std::size_t t = 0; t < spec.trials; ++t) {
    const std::uint64_t seed = spec.base_seed + t;
    for (auto* r : {&out.no_adapt, &out.gp}) {
      auto cfg = matched_steps(configure_method(spec.train, r->spec.method),
                               std::max(src.train.size(), tgt.train.size()));
      cfg.seed = seed;
      const auto& unlabeled = r->spec.method == Method::kGp ? tgt.train : kNone;
      auto trained = train(src.train, unlabeled, cfg);
      TrialResult tr;
      tr.seed = seed;
      if (!tgt.val.empty()) tr.val = evaluate(trained.params, tgt.val);
      tr.test = evaluate(trained.params, tgt.test);
      tr.history = std::move(trained.history);
      tr.params = std::move(trained.params);
      r->trials.push_back(std::move(tr));
    }
  }
  finish(out.no_adapt, !tgt.val.empty());
  finish(out.gp, !tgt.val.empty());
  return out;
}

}  // namespace gpc
