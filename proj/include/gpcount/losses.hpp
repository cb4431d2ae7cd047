#pragma once

#include <span>
#include <string>
#include <vector>

#include "gpcount/density.hpp"
#include "gpcount/gp.hpp"
#include "gpcount/tensor.hpp"

namespace gpc {

struct LossComponent {
  std::string name;
  double value = 0.0;
  double weight = 1.0;
};

/// Scalar loss node plus a weighted breakdown for logging. The weighted
/// component values sum to the scalar.
struct LossValue {
  ad::Node scalar;
  std::vector<LossComponent> components;

  double value() const { return scalar.item(); }
  double component(const std::string& name) const;
};

/// ‖y_pred − y_gt‖₂ over all pixels.
LossValue supervised_loss(const ad::Node& y_pred, const DensityMap& y_gt);

/// Arithmetic mean of the per-sample supervised losses.
LossValue supervised_loss(std::span<const ad::Node> y_pred, std::span<const DensityMap> y_gt);

/// ‖y_pred − pseudo‖₂ / |Σ| + log Σ. `pseudo` is normally a constant node;
/// `variance` is the scalar node from variance_node.
LossValue unsupervised_loss(const ad::Node& y_pred, const ad::Node& pseudo, const ad::Node& variance);

/// Same with the pseudo-GT taken from a posterior and detached.
LossValue unsupervised_loss(const ad::Node& y_pred, const GPPosterior& pseudo, const ad::Node& variance);

/// Arithmetic mean of per-sample losses, keeping the component breakdown.
LossValue mean_loss(std::span<const LossValue> losses, const std::string& name);

/// L_s + λ_un · L_un.
LossValue combined_loss(const LossValue& sup, const LossValue& unsup, double lambda_un);

/// max(0, sub − full + margin) for a sub-region contained in the full one.
LossValue ranking_hinge_loss(const ad::Node& full_pred_count, const ad::Node& sub_pred_count,
                             double margin = 0.0);

}  // namespace gpc
