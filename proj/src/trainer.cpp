#include "gpcount/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gpcount/errors.hpp"
#include "gpcount/losses.hpp"
#include "gpcount/random.hpp"

namespace gpc {
namespace {

enum Stream : std::uint64_t { kInit = 1, kLabeled = 2, kUnlabeled = 3, kInterleave = 4 };

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d)) {
    throw ConfigError("config key '" + key + "': invalid number '" + v + "'");
  }
  return d;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || !std::all_of(v.begin(), v.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw ConfigError("config key '" + key + "': invalid non-negative integer '" + v + "'");
  }
  return std::stoull(v);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': invalid boolean '" + v + "'");
}

std::string fmt_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Row-major horizontal mirror of a [h×w] plane.
std::vector<double> mirror(const std::vector<double>& src, std::size_t h, std::size_t w) {
  std::vector<double> out(src.size());
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = src[r * w + (w - 1 - c)];
  return out;
}

std::vector<double> crop_plane(const std::vector<double>& src, std::size_t w, std::size_t y0,
                               std::size_t x0, std::size_t size) {
  std::vector<double> out(size * size);
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) out[r * size + c] = src[(y0 + r) * w + x0 + c];
  return out;
}

struct Sample {
  Array image;
  DensityMap target;
};

bool use_crop(const TrainConfig& cfg, const AnnotatedImage& img) {
  return cfg.crop_size != 0 && cfg.crop_size < std::min(img.height, img.width);
}

// Random crop (when configured) and horizontal flip of one training sample.
Sample augment(const AnnotatedImage& img, const DensityMap* target, const TrainConfig& cfg, Rng& rng) {
  std::vector<double> pix = img.pixels;
  std::vector<double> den = target ? target->values : std::vector<double>{};
  std::size_t h = img.height, w = img.width;
  if (use_crop(cfg, img)) {
    const auto s = cfg.crop_size;
    const auto y0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(h - s)));
    const auto x0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(w - s)));
    pix = crop_plane(pix, w, y0, x0, s);
    if (target) den = crop_plane(den, w, y0, x0, s);
    h = w = s;
  }
  if (cfg.hflip && rng.coin()) {
    pix = mirror(pix, h, w);
    if (target) den = mirror(den, h, w);
  }
  Sample s;
  s.image = Array({1, h, w}, std::move(pix));
  if (target) {
    s.target = DensityMap(h, w);
    s.target.values = std::move(den);
  }
  return s;
}

// Deterministic centre crop used for the latent bank when training on crops.
Sample centre(const AnnotatedImage& img, const DensityMap& target, const TrainConfig& cfg) {
  if (!use_crop(cfg, img)) return {img.to_array(), target};
  const auto s = cfg.crop_size;
  const auto y0 = (img.height - s) / 2, x0 = (img.width - s) / 2;
  Sample out;
  out.image = Array({1, s, s}, crop_plane(img.pixels, img.width, y0, x0, s));
  out.target = DensityMap(s, s);
  out.target.values = crop_plane(target.values, img.width, y0, x0, s);
  return out;
}

std::vector<Array> collect_grads(const BoundModel& model) {
  std::vector<Array> grads;
  for (const auto& leaf : model.leaves()) grads.push_back(leaf.grad());
  return grads;
}

bool all_zero(const std::vector<Array>& grads) {
  for (const auto& g : grads)
    for (double v : g.data)
      if (v != 0.0) return false;
  return true;
}

void guard_finite(double loss, const char* stage, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    throw TrainingError(std::string(stage) + " stage diverged at epoch " + std::to_string(epoch) +
                        ": loss is " + std::to_string(loss));
  }
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

void rebuild(TrainState& state, const Dataset& labeled, std::span<const DensityMap> targets,
             const TrainConfig& cfg) {
  if (!cfg.gp_enabled) return;
  const auto model = bind(state.params, false);
  LatentBank bank;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const auto s = centre(labeled[i], targets[i], cfg);
    const auto enc = encode(s.image, model);
    try {
      bank.add(labeled[i].id, enc.latent.data, s.target.values);
    } catch (const DegenerateLatentError&) {
      ++bank.skipped;
    }
  }
  state.bank = std::move(bank);
}

// Per-sample unlabeled losses for one batch. Returns the batch-mean loss or
// an empty LossValue when every sample was skipped.
struct UnlabeledBatch {
  std::vector<LossValue> losses;
  std::size_t skipped = 0;
  std::size_t hinge_active = 0;
};

UnlabeledBatch unlabeled_losses(TrainState& state, const BoundModel& model, const Dataset& unlabeled,
                                std::span<const std::size_t> batch, const TrainConfig& cfg, Rng& rng,
                                bool record) {
  UnlabeledBatch out;
  for (auto idx : batch) {
    const auto& img = unlabeled[idx];
    const auto s = augment(img, nullptr, cfg, rng);
    if (cfg.gp_enabled) {
      const auto enc = encode(s.image, model);
      const auto pred = decode(enc.node, model, s.image.dim(1), s.image.dim(2));
      try {
        const auto nb = nearest(enc.latent.data, state.bank, cfg.n_neighbors, cfg.neighbor_metric);
        const auto var = variance_node(enc.node, nb.features, cfg.noise_variance);
        state.history.variance.add(var.item(), cfg.noise_variance);
        ad::Node pseudo;
        if (cfg.detach_pseudo) {
          pseudo = ad::Node::constant(
              posterior_from(enc.latent.data, nb.features, nb.targets, cfg.noise_variance).mean);
        } else {
          pseudo = mean_node(enc.node, nb.features, nb.targets, cfg.noise_variance);
        }
        if (record) {
          double pc = 0.0, qc = 0.0;
          for (double v : pred.value().data) pc += v;
          for (double v : pseudo.value().data) qc += v;
          state.history.final_pseudo.push_back(
              {img.id, static_cast<double>(img.gt_count()), pc, qc});
        }
        out.losses.push_back(unsupervised_loss(pred, pseudo, var));
      } catch (const DegenerateLatentError&) {
        ++out.skipped;
      }
    } else {
      // Sub-image: half-size window on the encoder's grid.
      const std::size_t h = s.image.dim(1), w = s.image.dim(2);
      const std::size_t step = model.config.downsample();
      const std::size_t sh = std::max(step, (h / 2) / step * step);
      const std::size_t sw = std::max(step, (w / 2) / step * step);
      const auto y0 = step * static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>((h - sh) / step)));
      const auto x0 = step * static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>((w - sw) / step)));
      std::vector<double> sub(sh * sw);
      for (std::size_t r = 0; r < sh; ++r)
        for (std::size_t c = 0; c < sw; ++c) sub[r * sw + c] = s.image[(y0 + r) * w + x0 + c];
      const auto full_count = ad::sum(forward(s.image, model));
      const auto sub_count = ad::sum(forward(Array({1, sh, sw}, std::move(sub)), model));
      auto loss = ranking_hinge_loss(full_count, sub_count, cfg.ranking_margin);
      if (loss.value() > 0.0) ++out.hinge_active;
      out.losses.push_back(std::move(loss));
    }
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
  };
  if (!(lambda_un >= 0.0)) throw ConfigError("lambda_un must be nonnegative");
  if (n_neighbors == 0) throw ConfigError("n_neighbors must be at least 1");
  positive(noise_variance, "noise_variance");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be nonnegative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in [0, 1)");
  positive(adam_eps, "adam_eps");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  positive(density_sigma, "density_sigma");
  if (gp_enabled && ranking_enabled) throw ConfigError("gp_enabled and ranking_enabled are mutually exclusive");
  if (latent_channels == 0 || encoder_channels.empty()) throw ConfigError("model channels must be positive");
}

ModelConfig TrainConfig::model(std::size_t height, std::size_t width) const {
  ModelConfig m;
  m.height = height;
  m.width = width;
  m.encoder_channels = encoder_channels;
  m.latent_channels = latent_channels;
  return m;
}

void set_config_value(TrainConfig& cfg, const std::string& raw_key, const std::string& raw_value) {
  const auto key = trim(raw_key);
  const auto v = trim(raw_value);
  if (key == "lambda_un") cfg.lambda_un = parse_real(key, v);
  else if (key == "n_neighbors") cfg.n_neighbors = parse_uint(key, v);
  else if (key == "noise_variance") cfg.noise_variance = parse_real(key, v);
  else if (key == "learning_rate") cfg.learning_rate = parse_real(key, v);
  else if (key == "adam_beta1") cfg.adam_beta1 = parse_real(key, v);
  else if (key == "adam_beta2") cfg.adam_beta2 = parse_real(key, v);
  else if (key == "adam_eps") cfg.adam_eps = parse_real(key, v);
  else if (key == "batch_size") cfg.batch_size = parse_uint(key, v);
  else if (key == "epochs") cfg.epochs = parse_uint(key, v);
  else if (key == "crop_size") cfg.crop_size = parse_uint(key, v);
  else if (key == "seed") cfg.seed = parse_uint(key, v);
  else if (key == "gp_enabled") cfg.gp_enabled = parse_bool(key, v);
  else if (key == "ranking_enabled") cfg.ranking_enabled = parse_bool(key, v);
  else if (key == "ranking_margin") cfg.ranking_margin = parse_real(key, v);
  else if (key == "hflip") cfg.hflip = parse_bool(key, v);
  else if (key == "interleave") cfg.interleave = parse_bool(key, v);
  else if (key == "steps_per_epoch") cfg.steps_per_epoch = parse_uint(key, v);
  else if (key == "detach_pseudo") cfg.detach_pseudo = parse_bool(key, v);
  else if (key == "density_sigma") cfg.density_sigma = parse_real(key, v);
  else if (key == "latent_channels") cfg.latent_channels = parse_uint(key, v);
  else if (key == "neighbor_metric") {
    if (v == "cosine") cfg.neighbor_metric = NeighborMetric::kCosine;
    else if (v == "euclidean") cfg.neighbor_metric = NeighborMetric::kEuclidean;
    else throw ConfigError("config key 'neighbor_metric': expected cosine or euclidean, got '" + v + "'");
  } else if (key == "encoder_channels") {
    std::vector<std::size_t> ch;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) ch.push_back(parse_uint(key, trim(tok)));
    if (ch.empty()) throw ConfigError("config key 'encoder_channels': empty list");
    cfg.encoder_channels = std::move(ch);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg) {
  std::string enc;
  for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
    if (i) enc += ',';
    enc += std::to_string(cfg.encoder_channels[i]);
  }
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  return {
      {"lambda_un", fmt_real(cfg.lambda_un)},
      {"n_neighbors", std::to_string(cfg.n_neighbors)},
      {"noise_variance", fmt_real(cfg.noise_variance)},
      {"learning_rate", fmt_real(cfg.learning_rate)},
      {"adam_beta1", fmt_real(cfg.adam_beta1)},
      {"adam_beta2", fmt_real(cfg.adam_beta2)},
      {"adam_eps", fmt_real(cfg.adam_eps)},
      {"batch_size", std::to_string(cfg.batch_size)},
      {"epochs", std::to_string(cfg.epochs)},
      {"crop_size", std::to_string(cfg.crop_size)},
      {"seed", std::to_string(cfg.seed)},
      {"gp_enabled", b(cfg.gp_enabled)},
      {"ranking_enabled", b(cfg.ranking_enabled)},
      {"ranking_margin", fmt_real(cfg.ranking_margin)},
      {"hflip", b(cfg.hflip)},
      {"interleave", b(cfg.interleave)},
      {"steps_per_epoch", std::to_string(cfg.steps_per_epoch)},
      {"detach_pseudo", b(cfg.detach_pseudo)},
      {"neighbor_metric", cfg.neighbor_metric == NeighborMetric::kCosine ? "cosine" : "euclidean"},
      {"density_sigma", fmt_real(cfg.density_sigma)},
      {"latent_channels", std::to_string(cfg.latent_channels)},
      {"encoder_channels", enc},
  };
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig cfg) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    try {
      set_config_value(cfg, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

void save_train_config(const TrainConfig& cfg, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  for (const auto& [k, v] : config_entries(cfg)) os << k << '=' << v << '\n';
}

void apply_env_overrides(TrainConfig& cfg, const std::string& prefix) {
  for (const auto& [key, current] : config_entries(cfg)) {
    std::string name = prefix;
    for (char c : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* v = std::getenv(name.c_str())) set_config_value(cfg, key, v);
  }
}

Adam::Adam(const ModelParams& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto* t : params.tensors()) {
    m_.emplace_back(t->shape, 0.0);
    v_.emplace_back(t->shape, 0.0);
  }
}

void Adam::step(ModelParams& params, const std::vector<Array>& grads) {
  auto tensors = params.tensors();
  if (grads.size() != tensors.size() || m_.size() != tensors.size()) {
    throw ContractError("adam: gradient list does not match parameters");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto& p = tensors[k]->data;
    auto& m = m_[k].data;
    auto& v = v_[k].data;
    const auto& g = grads[k].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

void VarianceStats::add(double v, double noise) {
  ++count;
  sum += v;
  min = std::min(min, v);
  max = std::max(max, v);
  if (v < noise || v > 1.0 + noise) ++violations;
}

TrainState init_state(const TrainConfig& cfg, std::size_t height, std::size_t width) {
  cfg.validate();
  std::size_t h = height, w = width;
  if (cfg.crop_size != 0 && cfg.crop_size < std::min(height, width)) h = w = cfg.crop_size;
  TrainState s;
  s.params = init_params(cfg.model(h, w), derive_seed(cfg.seed, {kInit}));
  s.optimizer = Adam(s.params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  return s;
}

std::vector<DensityMap> density_targets(const Dataset& labeled, double sigma) {
  std::vector<DensityMap> out;
  out.reserve(labeled.size());
  for (const auto& img : labeled) out.push_back(synthesize_density(img.points, img.height, img.width, sigma));
  return out;
}

void labeled_stage(TrainState& state, const Dataset& labeled, std::span<const DensityMap> targets,
                   const TrainConfig& cfg) {
  if (labeled.empty()) throw ContractError("labeled_stage: labeled set is empty");
  if (targets.size() != labeled.size()) throw ContractError("labeled_stage: one target per sample required");
  Rng rng(derive_seed(cfg.seed, {kLabeled, state.epoch}));
  const auto order = shuffled(labeled.size(), rng);
  EpochRecord rec;
  rec.epoch = state.epoch;
  double loss_sum = 0.0;
  for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
    const std::size_t e = std::min(order.size(), b + cfg.batch_size);
    const auto model = bind(state.params, true);
    std::vector<ad::Node> preds;
    std::vector<DensityMap> gts;
    for (std::size_t i = b; i < e; ++i) {
      auto s = augment(labeled[order[i]], &targets[order[i]], cfg, rng);
      preds.push_back(forward(s.image, model));
      gts.push_back(std::move(s.target));
    }
    const auto loss = supervised_loss(preds, gts);
    guard_finite(loss.value(), "labeled", state.epoch);
    ad::backward(loss.scalar);
    const auto grads = collect_grads(model);
    if (all_zero(grads)) {
      ++state.history.skipped_steps;
    } else {
      state.optimizer.step(state.params, grads);
    }
    loss_sum += loss.value();
    ++rec.labeled_steps;
  }
  rec.supervised = loss_sum / static_cast<double>(rec.labeled_steps);
  state.history.epochs.push_back(rec);
  rebuild(state, labeled, targets, cfg);
}

void unlabeled_stage(TrainState& state, const Dataset& unlabeled, const TrainConfig& cfg) {
  if (unlabeled.empty() || !(cfg.gp_enabled || cfg.ranking_enabled)) return;
  if (cfg.gp_enabled && state.bank.empty()) {
    throw ContractError("unlabeled_stage: latent bank is empty; run a labeled stage first");
  }
  if (state.history.epochs.empty() || state.history.epochs.back().epoch != state.epoch) {
    state.history.epochs.push_back({});
    state.history.epochs.back().epoch = state.epoch;
  }
  auto& rec = state.history.epochs.back();
  if (cfg.lambda_un == 0.0) return;

  const bool record = cfg.gp_enabled && state.epoch + 1 == cfg.epochs;
  if (record) state.history.final_pseudo.clear();
  Rng rng(derive_seed(cfg.seed, {kUnlabeled, state.epoch}));
  const auto order = shuffled(unlabeled.size(), rng);
  double loss_sum = 0.0;
  const auto var_before = state.history.variance;
  std::size_t hinge_active = 0, seen = 0;
  for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
    const std::size_t e = std::min(order.size(), b + cfg.batch_size);
    const auto model = bind(state.params, true);
    auto batch = unlabeled_losses(state, model, unlabeled,
                                  std::span<const std::size_t>(order).subspan(b, e - b), cfg, rng, record);
    rec.skipped_samples += batch.skipped;
    hinge_active += batch.hinge_active;
    seen += batch.losses.size();
    if (batch.losses.empty()) continue;
    const auto mean = mean_loss(batch.losses, "unsupervised");
    guard_finite(mean.value(), "unlabeled", state.epoch);
    ad::backward(ad::scalar_mul(mean.scalar, cfg.lambda_un));
    const auto grads = collect_grads(model);
    if (all_zero(grads)) {
      ++state.history.skipped_steps;
    } else {
      state.optimizer.step(state.params, grads);
    }
    loss_sum += mean.value();
    ++rec.unlabeled_steps;
  }
  if (rec.unlabeled_steps) rec.unsupervised = loss_sum / static_cast<double>(rec.unlabeled_steps);
  const auto& vs = state.history.variance;
  if (vs.count > var_before.count) {
    rec.mean_variance = (vs.sum - var_before.sum) / static_cast<double>(vs.count - var_before.count);
  }
  if (cfg.ranking_enabled && seen) rec.ranking_active = static_cast<double>(hinge_active) / static_cast<double>(seen);
}

namespace {

// Batch-level mixing: each step sums a labeled batch loss and λ times an
// unlabeled batch loss. The bank is refreshed at the start of the epoch.
void interleaved_epoch(TrainState& state, const Dataset& labeled, std::span<const DensityMap> targets,
                       const Dataset& unlabeled, const TrainConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, {kInterleave, state.epoch}));
  Rng urng(derive_seed(cfg.seed, {kInterleave, state.epoch, kUnlabeled}));
  rebuild(state, labeled, targets, cfg);
  const auto lorder = shuffled(labeled.size(), rng);
  const auto uorder = shuffled(unlabeled.size(), urng);
  const std::size_t bs = cfg.batch_size;
  const std::size_t steps = cfg.steps_per_epoch
                                ? cfg.steps_per_epoch
                                : std::max((lorder.size() + bs - 1) / bs, (uorder.size() + bs - 1) / bs);
  EpochRecord rec;
  rec.epoch = state.epoch;
  const bool record = cfg.gp_enabled && state.epoch + 1 == cfg.epochs;
  if (record) state.history.final_pseudo.clear();
  double sup_sum = 0.0, uns_sum = 0.0;
  for (std::size_t step = 0; step < steps; ++step) {
    const auto model = bind(state.params, true);
    std::vector<ad::Node> preds;
    std::vector<DensityMap> gts;
    for (std::size_t k = 0; k < bs && k < lorder.size(); ++k) {
      const auto idx = lorder[(step * bs + k) % lorder.size()];
      auto s = augment(labeled[idx], &targets[idx], cfg, rng);
      preds.push_back(forward(s.image, model));
      gts.push_back(std::move(s.target));
    }
    auto loss = supervised_loss(preds, gts);
    sup_sum += loss.value();
    if (!unlabeled.empty() && (cfg.gp_enabled || cfg.ranking_enabled) && cfg.lambda_un > 0.0) {
      const std::size_t b = (step * bs) % uorder.size();
      const std::size_t e = std::min(uorder.size(), b + bs);
      auto batch = unlabeled_losses(state, model, unlabeled,
                                    std::span<const std::size_t>(uorder).subspan(b, e - b), cfg, urng,
                                    record && step * bs < uorder.size());
      rec.skipped_samples += batch.skipped;
      if (!batch.losses.empty()) {
        const auto un = mean_loss(batch.losses, "unsupervised");
        uns_sum += un.value();
        ++rec.unlabeled_steps;
        loss = combined_loss(loss, un, cfg.lambda_un);
      }
    }
    guard_finite(loss.value(), "interleaved", state.epoch);
    ad::backward(loss.scalar);
    const auto grads = collect_grads(model);
    if (all_zero(grads)) {
      ++state.history.skipped_steps;
    } else {
      state.optimizer.step(state.params, grads);
    }
    ++rec.labeled_steps;
  }
  rec.supervised = sup_sum / static_cast<double>(steps);
  if (rec.unlabeled_steps) rec.unsupervised = uns_sum / static_cast<double>(rec.unlabeled_steps);
  state.history.epochs.push_back(rec);
}

}  // namespace

TrainResult train(const Dataset& labeled, const Dataset& unlabeled, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (labeled.empty()) throw ContractError("train: labeled set is empty");
  const auto& first = labeled.front();
  for (const auto* set : {&labeled, &unlabeled}) {
    for (const auto& img : *set) {
      if (img.height != first.height || img.width != first.width) {
        throw ShapeError("train: all images must share one size");
      }
    }
  }
  auto state = init_state(cfg, first.height, first.width);
  const auto targets = density_targets(labeled, cfg.density_sigma);
  for (state.epoch = 0; state.epoch < cfg.epochs; ++state.epoch) {
    if (cfg.interleave) {
      interleaved_epoch(state, labeled, targets, unlabeled, cfg);
    } else {
      labeled_stage(state, labeled, targets, cfg);
      unlabeled_stage(state, unlabeled, cfg);
    }
    if (on_epoch) on_epoch(state);
  }
  return {std::move(state.params), std::move(state.history)};
}

}  // namespace gpc
