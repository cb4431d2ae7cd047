#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gpcount/density.hpp"
#include "gpcount/model.hpp"
#include "gpcount/synth.hpp"
#include "gpcount/tensor.hpp"

namespace gpc {

/// Labeled latent vectors paired with their flattened target density maps.
class LatentBank {
 public:
  LatentBank() = default;

  /// Throws DomainError for a zero-norm latent or mismatched lengths.
  void add(std::string id, std::span<const double> latent, std::span<const double> target);

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  std::size_t latent_dim() const { return latent_dim_; }
  std::size_t target_dim() const { return target_dim_; }

  std::span<const double> feature(std::size_t row) const;
  std::span<const double> target(std::size_t row) const;
  double feature_norm(std::size_t row) const { return norms_[row]; }
  const std::string& id(std::size_t row) const { return ids_[row]; }
  const std::vector<std::string>& ids() const { return ids_; }

  /// [N×M] and [N×D] copies.
  Array feature_matrix() const;
  Array target_matrix() const;

  /// Samples whose latents were degenerate at the last rebuild.
  std::size_t skipped = 0;

  bool operator==(const LatentBank&) const = default;

 private:
  std::size_t latent_dim_ = 0;
  std::size_t target_dim_ = 0;
  std::vector<double> features_;
  std::vector<double> targets_;
  std::vector<double> norms_;
  std::vector<std::string> ids_;
};

enum class NeighborMetric { kCosine, kEuclidean };

struct GPConfig {
  std::size_t n_neighbors = 8;
  double noise_variance = 1.0;
  NeighborMetric metric = NeighborMetric::kCosine;
};

struct GPPosterior {
  Array mean;  // pseudo-GT, [D]
  double variance = 0.0;
  std::vector<std::string> neighbor_ids;
  std::vector<std::size_t> neighbor_rows;
};

/// Normalized inner product; throws DegenerateLatentError on a zero vector.
double cosine_kernel(std::span<const double> a, std::span<const double> b);

struct Neighbors {
  std::vector<std::size_t> rows;
  Array features;  // [n×M]
  Array targets;   // [n×D]
};

/// The min(n, N_l) bank rows most similar to `z`, most similar first; ties
/// go to the smaller id.
Neighbors nearest(std::span<const double> z, const LatentBank& bank, std::size_t n,
                  NeighborMetric metric = NeighborMetric::kCosine);

/// Zero-mean GP posterior of the target at `z` given its nearest bank rows.
/// One Cholesky factorization of K + σ²I serves both moments.
GPPosterior posterior(std::span<const double> z, const LatentBank& bank, const GPConfig& cfg);

/// Posterior from an explicit neighbor set (all rows used).
GPPosterior posterior_from(std::span<const double> z, const Array& features, const Array& targets,
                           double noise_variance);

/// Predictive variance as a differentiable function of the latent node.
/// Neighbor features are constants. The value is bitwise equal to the
/// variance returned by posterior_from for the same inputs.
ad::Node variance_node(const ad::Node& z, const Array& neighbor_features, double noise_variance);

/// Posterior mean as a differentiable function of the latent node; used
/// only when the pseudo-GT is not detached. Shape [D].
ad::Node mean_node(const ad::Node& z, const Array& neighbor_features, const Array& neighbor_targets,
                   double noise_variance);

/// Encodes every labeled sample with `params` and pairs it with its target.
/// `targets[i]` belongs to `labeled[i]`.
LatentBank rebuild_bank(const Dataset& labeled, std::span<const DensityMap> targets,
                        const ModelParams& params);

/// Same, synthesizing targets with Gaussian scale `sigma`.
LatentBank rebuild_bank(const Dataset& labeled, const ModelParams& params, double sigma);

}  // namespace gpc
