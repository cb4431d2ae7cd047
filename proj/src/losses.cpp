#include "gpcount/losses.hpp"

#include <cmath>

#include "gpcount/errors.hpp"

namespace gpc {

double LossValue::component(const std::string& name) const {
  for (const auto& c : components) {
    if (c.name == name) return c.value;
  }
  throw ContractError("loss has no component '" + name + "'");
}

LossValue supervised_loss(const ad::Node& y_pred, const DensityMap& y_gt) {
  if (y_pred.size() != y_gt.values.size()) {
    throw ShapeError("supervised_loss: prediction " + shape_to_string(y_pred.shape()) +
                     " vs ground truth " + std::to_string(y_gt.height) + "x" + std::to_string(y_gt.width));
  }
  const auto gt = ad::Node::constant(Array(y_pred.shape(), y_gt.values));
  LossValue out;
  out.scalar = ad::norm(ad::sub(y_pred, gt));
  out.components.push_back({"supervised", out.scalar.item(), 1.0});
  return out;
}

LossValue supervised_loss(std::span<const ad::Node> y_pred, std::span<const DensityMap> y_gt) {
  if (y_pred.size() != y_gt.size() || y_pred.empty()) {
    throw ContractError("supervised_loss: need one ground truth per prediction");
  }
  std::vector<LossValue> per;
  per.reserve(y_pred.size());
  for (std::size_t i = 0; i < y_pred.size(); ++i) per.push_back(supervised_loss(y_pred[i], y_gt[i]));
  return mean_loss(per, "supervised");
}

LossValue unsupervised_loss(const ad::Node& y_pred, const ad::Node& pseudo, const ad::Node& variance) {
  if (y_pred.size() != pseudo.size()) {
    throw ShapeError("unsupervised_loss: prediction " + shape_to_string(y_pred.shape()) +
                     " vs pseudo-GT " + shape_to_string(pseudo.shape()));
  }
  if (variance.size() != 1 || !(variance.item() > 0.0)) {
    throw ContractError("unsupervised_loss: predictive variance must be a positive scalar");
  }
  const auto target = pseudo.shape() == y_pred.shape() ? pseudo : ad::reshape(pseudo, y_pred.shape());
  // Σ ≥ σ² > 0, so |Σ| = Σ.
  const auto fit = ad::div(ad::norm(ad::sub(y_pred, target)), variance);
  const auto var_term = ad::log(variance);
  LossValue out;
  out.scalar = ad::add(fit, var_term);
  out.components.push_back({"fit", fit.item(), 1.0});
  out.components.push_back({"variance_term", var_term.item(), 1.0});
  return out;
}

LossValue unsupervised_loss(const ad::Node& y_pred, const GPPosterior& pseudo, const ad::Node& variance) {
  return unsupervised_loss(y_pred, ad::Node::constant(Array(y_pred.shape(), pseudo.mean.data)), variance);
}

LossValue mean_loss(std::span<const LossValue> losses, const std::string& name) {
  if (losses.empty()) throw ContractError("mean_loss: no losses");
  ad::Node total = losses[0].scalar;
  for (std::size_t i = 1; i < losses.size(); ++i) total = ad::add(total, losses[i].scalar);
  const double inv = 1.0 / static_cast<double>(losses.size());
  LossValue out;
  out.scalar = ad::scalar_mul(total, inv);
  if (losses[0].components.size() == 1) {
    out.components.push_back({name, out.scalar.item(), 1.0});
    return out;
  }
  for (std::size_t c = 0; c < losses[0].components.size(); ++c) {
    double s = 0.0;
    for (const auto& l : losses) s += l.components.at(c).value;
    out.components.push_back({losses[0].components[c].name, s * inv, losses[0].components[c].weight});
  }
  return out;
}

LossValue combined_loss(const LossValue& sup, const LossValue& unsup, double lambda_un) {
  if (!(lambda_un >= 0.0)) throw ContractError("combined_loss: lambda_un must be nonnegative");
  LossValue out;
  out.scalar = ad::add(sup.scalar, ad::scalar_mul(unsup.scalar, lambda_un));
  for (const auto& c : sup.components) out.components.push_back(c);
  for (auto c : unsup.components) {
    c.weight *= lambda_un;
    out.components.push_back(c);
  }
  return out;
}

LossValue ranking_hinge_loss(const ad::Node& full_pred_count, const ad::Node& sub_pred_count,
                             double margin) {
  if (full_pred_count.size() != 1 || sub_pred_count.size() != 1) {
    throw ShapeError("ranking_hinge_loss: counts must be scalars");
  }
  LossValue out;
  out.scalar = ad::relu(ad::add_scalar(ad::sub(sub_pred_count, full_pred_count), margin));
  out.components.push_back({"ranking", out.scalar.item(), 1.0});
  return out;
}

}  // namespace gpc
