#include "gpcount/gp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "gpcount/errors.hpp"

namespace gpc {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double checked_norm(std::span<const double> a, const char* what) {
  const double n = l2(a);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw DegenerateLatentError(std::string(what) + ": latent vector has zero or non-finite norm");
  }
  return n;
}

// Shared by posterior_from, variance_node and mean_node so the three agree
// bit for bit.
struct GpSystem {
  std::size_t n = 0;
  std::size_t m = 0;
  double z_norm = 0.0;
  std::vector<double> row_norms;
  std::vector<double> kstar;  // κ(z, f_i)
  std::vector<double> alpha;  // (K + σ²I)⁻¹ k*
  double variance = 0.0;
  std::optional<Cholesky> chol;
};

GpSystem solve_system(std::span<const double> z, const Array& features, double noise) {
  if (!(noise > 0.0)) throw ContractError("gp: noise variance must be positive");
  if (features.rank() != 2 || features.dim(1) != z.size()) {
    throw ShapeError("gp: neighbor features " + shape_to_string(features.shape) +
                     " do not match latent length " + std::to_string(z.size()));
  }
  GpSystem s;
  s.n = features.dim(0);
  s.m = features.dim(1);
  s.z_norm = checked_norm(z, "gp");
  auto row = [&](std::size_t i) { return std::span<const double>(features.data).subspan(i * s.m, s.m); };
  s.row_norms.resize(s.n);
  for (std::size_t i = 0; i < s.n; ++i) s.row_norms[i] = checked_norm(row(i), "gp neighbor");

  Array a({s.n, s.n});
  for (std::size_t i = 0; i < s.n; ++i) {
    a[i * s.n + i] = 1.0 + noise;
    for (std::size_t j = 0; j < i; ++j) {
      const double k = dot(row(i), row(j)) / (s.row_norms[i] * s.row_norms[j]);
      a[i * s.n + j] = k;
      a[j * s.n + i] = k;
    }
  }
  s.kstar.resize(s.n);
  for (std::size_t i = 0; i < s.n; ++i) s.kstar[i] = dot(z, row(i)) / (s.z_norm * s.row_norms[i]);

  s.chol.emplace(a);
  s.alpha = s.kstar;
  s.chol->solve_in_place(s.alpha);
  // κ(z, z) = 1 for the cosine kernel.
  s.variance = 1.0 - dot(s.kstar, s.alpha) + noise;

  const double tol = 1e-12 * (1.0 + noise);
  if (!(s.variance >= noise - tol && s.variance <= 1.0 + noise + tol)) {
    throw NumericalError("gp: predictive variance " + std::to_string(s.variance) +
                         " outside [" + std::to_string(noise) + ", " + std::to_string(1.0 + noise) +
                         "]");
  }
  return s;
}

// Adds Σ_i coeff_i · ∂κ(z, f_i)/∂z to `out`.
void accumulate_kernel_jacobian(const GpSystem& s, std::span<const double> z, const Array& features,
                                std::span<const double> coeff, std::span<double> out) {
  const double inv_z = 1.0 / s.z_norm;
  const double inv_z2 = inv_z * inv_z;
  for (std::size_t i = 0; i < s.n; ++i) {
    if (coeff[i] == 0.0) continue;
    const double* f = features.data.data() + i * s.m;
    const double a = coeff[i] * inv_z / s.row_norms[i];
    const double b = coeff[i] * s.kstar[i] * inv_z2;
    for (std::size_t j = 0; j < s.m; ++j) out[j] += a * f[j] - b * z[j];
  }
}

}  // namespace

void LatentBank::add(std::string id, std::span<const double> latent, std::span<const double> target) {
  if (empty()) {
    latent_dim_ = latent.size();
    target_dim_ = target.size();
  }
  if (latent.size() != latent_dim_ || target.size() != target_dim_ || latent.empty()) {
    throw ShapeError("latent bank: row dimensions differ from the bank's");
  }
  const double n = checked_norm(latent, "latent bank");
  features_.insert(features_.end(), latent.begin(), latent.end());
  targets_.insert(targets_.end(), target.begin(), target.end());
  norms_.push_back(n);
  ids_.push_back(std::move(id));
}

std::span<const double> LatentBank::feature(std::size_t row) const {
  return std::span<const double>(features_).subspan(row * latent_dim_, latent_dim_);
}

std::span<const double> LatentBank::target(std::size_t row) const {
  return std::span<const double>(targets_).subspan(row * target_dim_, target_dim_);
}

Array LatentBank::feature_matrix() const {
  if (empty()) throw ContractError("latent bank is empty");
  return Array({size(), latent_dim_}, features_);
}

Array LatentBank::target_matrix() const {
  if (empty()) throw ContractError("latent bank is empty");
  return Array({size(), target_dim_}, targets_);
}

double cosine_kernel(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_kernel: length mismatch");
  const double na = checked_norm(a, "cosine_kernel");
  const double nb = checked_norm(b, "cosine_kernel");
  return dot(a, b) / (na * nb);
}

Neighbors nearest(std::span<const double> z, const LatentBank& bank, std::size_t n,
                  NeighborMetric metric) {
  if (bank.empty()) throw ContractError("nearest: latent bank is empty");
  if (z.size() != bank.latent_dim()) throw ShapeError("nearest: latent length differs from bank");
  if (n == 0) throw ContractError("nearest: neighbor count must be positive");

  std::vector<double> sim(bank.size());
  if (metric == NeighborMetric::kCosine) {
    const double nz = checked_norm(z, "nearest");
    for (std::size_t i = 0; i < bank.size(); ++i) sim[i] = dot(z, bank.feature(i)) / (nz * bank.feature_norm(i));
  } else {
    for (std::size_t i = 0; i < bank.size(); ++i) {
      const auto f = bank.feature(i);
      double d = 0.0;
      for (std::size_t j = 0; j < z.size(); ++j) d += (z[j] - f[j]) * (z[j] - f[j]);
      sim[i] = -d;
    }
  }
  std::vector<std::size_t> order(bank.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(n, bank.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (sim[a] != sim[b]) return sim[a] > sim[b];
                      return bank.id(a) < bank.id(b);
                    });
  order.resize(take);

  Neighbors out;
  out.rows = order;
  out.features = Array({take, bank.latent_dim()});
  out.targets = Array({take, bank.target_dim()});
  for (std::size_t r = 0; r < take; ++r) {
    std::copy_n(bank.feature(order[r]).begin(), bank.latent_dim(),
                out.features.data.begin() + static_cast<std::ptrdiff_t>(r * bank.latent_dim()));
    std::copy_n(bank.target(order[r]).begin(), bank.target_dim(),
                out.targets.data.begin() + static_cast<std::ptrdiff_t>(r * bank.target_dim()));
  }
  return out;
}

namespace {

Array mean_from(const GpSystem& s, const Array& targets) {
  const std::size_t d = targets.dim(1);
  Array mean({d});
  for (std::size_t i = 0; i < s.n; ++i) {
    const double w = s.alpha[i];
    const double* t = targets.data.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) mean[j] += w * t[j];
  }
  return mean;
}

void check_targets(const Array& features, const Array& targets) {
  if (targets.rank() != 2 || features.rank() != 2 || targets.dim(0) != features.dim(0)) {
    throw ShapeError("posterior: targets " + shape_to_string(targets.shape) +
                     " do not pair with features " + shape_to_string(features.shape));
  }
}

}  // namespace

GPPosterior posterior_from(std::span<const double> z, const Array& features, const Array& targets,
                           double noise_variance) {
  check_targets(features, targets);
  const auto s = solve_system(z, features, noise_variance);
  GPPosterior post;
  post.mean = mean_from(s, targets);
  post.variance = s.variance;
  return post;
}

GPPosterior posterior(std::span<const double> z, const LatentBank& bank, const GPConfig& cfg) {
  auto nb = nearest(z, bank, cfg.n_neighbors, cfg.metric);
  auto post = posterior_from(z, nb.features, nb.targets, cfg.noise_variance);
  post.neighbor_rows = nb.rows;
  for (auto r : nb.rows) post.neighbor_ids.push_back(bank.id(r));
  return post;
}

ad::Node variance_node(const ad::Node& z, const Array& neighbor_features, double noise_variance) {
  const Array& zv = z.value();
  auto s = solve_system(zv.data, neighbor_features, noise_variance);
  const double value = s.variance;
  return ad::Node::make(
      Array::scalar(value), {z},
      [zv, neighbor_features, s = std::move(s)](const Array& g, std::span<Array* const> slots) {
        if (!slots[0]) return;
        // dΣ/dk* = -2 (K + σ²I)⁻¹ k*
        std::vector<double> coeff(s.n);
        for (std::size_t i = 0; i < s.n; ++i) coeff[i] = -2.0 * s.alpha[i] * g[0];
        accumulate_kernel_jacobian(s, zv.data, neighbor_features, coeff, slots[0]->data);
      });
}

ad::Node mean_node(const ad::Node& z, const Array& neighbor_features, const Array& neighbor_targets,
                   double noise_variance) {
  check_targets(neighbor_features, neighbor_targets);
  const Array& zv = z.value();
  auto s = solve_system(zv.data, neighbor_features, noise_variance);
  Array mean = mean_from(s, neighbor_targets);
  return ad::Node::make(
      std::move(mean), {z},
      [zv, neighbor_features, neighbor_targets, s = std::move(s)](const Array& g,
                                                                  std::span<Array* const> slots) {
        if (!slots[0]) return;
        const std::size_t d = neighbor_targets.dim(1);
        // dL/dk* = (K + σ²I)⁻¹ T g
        std::vector<double> coeff(s.n);
        for (std::size_t i = 0; i < s.n; ++i) {
          const double* t = neighbor_targets.data.data() + i * d;
          double acc = 0.0;
          for (std::size_t j = 0; j < d; ++j) acc += t[j] * g[j];
          coeff[i] = acc;
        }
        s.chol->solve_in_place(coeff);
        accumulate_kernel_jacobian(s, zv.data, neighbor_features, coeff, slots[0]->data);
      });
}

LatentBank rebuild_bank(const Dataset& labeled, std::span<const DensityMap> targets,
                        const ModelParams& params) {
  if (labeled.empty()) throw ContractError("rebuild_bank: labeled set is empty");
  if (targets.size() != labeled.size()) throw ContractError("rebuild_bank: one target per sample required");
  const auto model = bind(params, false);
  LatentBank bank;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const auto enc = encode(labeled[i].to_array(), model);
    try {
      bank.add(labeled[i].id, enc.latent.data, targets[i].values);
    } catch (const DegenerateLatentError&) {
      ++bank.skipped;
    }
  }
  return bank;
}

LatentBank rebuild_bank(const Dataset& labeled, const ModelParams& params, double sigma) {
  std::vector<DensityMap> targets;
  targets.reserve(labeled.size());
  for (const auto& img : labeled) targets.push_back(synthesize_density(img.points, img.height, img.width, sigma));
  return rebuild_bank(labeled, targets, params);
}

}  // namespace gpc
