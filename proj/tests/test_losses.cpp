#include <doctest.h>

#include <cmath>

#include "gpcount/errors.hpp"
#include "gpcount/losses.hpp"

using namespace gpc;

TEST_CASE("supervised loss is the euclidean distance") {
  DensityMap gt(1, 2);
  gt.values = {1.0, 2.0};
  const auto pred = ad::Node::constant(Array({1, 1, 2}, std::vector<double>{4.0, 6.0}));
  CHECK(supervised_loss(pred, gt).value() == doctest::Approx(5.0).epsilon(1e-15));
  CHECK_THROWS_AS(supervised_loss(pred, DensityMap(2, 2)), ShapeError);

  std::vector<ad::Node> preds{pred, ad::Node::constant(Array({1, 1, 2}, std::vector<double>{1.0, 2.0}))};
  std::vector<DensityMap> gts{gt, gt};
  CHECK(supervised_loss(preds, gts).value() == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("unsupervised loss value and breakdown") {
  const auto pred = ad::Node::constant(Array({1, 1, 2}, std::vector<double>{3.0, 4.0}));
  const auto pseudo = ad::Node::constant(Array({1, 1, 2}, 0.0));
  const auto var = ad::Node::constant(Array::scalar(2.0));
  const auto l = unsupervised_loss(pred, pseudo, var);
  CHECK(l.value() == doctest::Approx(2.5 + std::log(2.0)).epsilon(1e-15));
  CHECK(l.component("fit") == doctest::Approx(2.5));
  CHECK(l.component("variance_term") == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(l.component("nope"), ContractError);
  CHECK_THROWS_AS(unsupervised_loss(pred, pseudo, ad::Node::constant(Array::scalar(0.0))), ContractError);
}

TEST_CASE("combined loss weights the unlabeled term") {
  const auto a = ad::Node::parameter(Array::scalar(1.0));
  LossValue s{ad::scalar_mul(a, 2.0), {{"supervised", 2.0, 1.0}}};
  LossValue u{ad::scalar_mul(a, 3.0), {{"fit", 3.0, 1.0}}};
  const auto c = combined_loss(s, u, 0.5);
  CHECK(c.value() == doctest::Approx(3.5));
  double weighted = 0;
  for (const auto& comp : c.components) weighted += comp.value * comp.weight;
  CHECK(weighted == doctest::Approx(c.value()));
  ad::backward(c.scalar);
  CHECK(a.grad()[0] == doctest::Approx(3.5));
  CHECK_THROWS_AS(combined_loss(s, u, -1.0), ContractError);
}

TEST_CASE("ranking hinge") {
  auto full = ad::Node::parameter(Array::scalar(5.0));
  auto sub = ad::Node::parameter(Array::scalar(3.0));
  CHECK(ranking_hinge_loss(full, sub).value() == 0.0);
  CHECK(ranking_hinge_loss(full, sub, 4.0).value() == doctest::Approx(2.0));
  const auto l = ranking_hinge_loss(sub, full);
  CHECK(l.value() == doctest::Approx(2.0));
  ad::backward(l.scalar);
  CHECK(full.grad()[0] == 1.0);
  CHECK(sub.grad()[0] == -1.0);
}
