// Finite-difference instances for every differentiable op and for the full
// unlabeled loss. Shared by the unit tests and the acceptance run.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gpcount/gp.hpp"
#include "gpcount/losses.hpp"
#include "gpcount/model.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace grad_cases {

using gpc::Array;
using gpc::Rng;
using gpc::Shape;
using gpc::ad::Node;
namespace ad = gpc::ad;

using Case = std::pair<oracle::ScalarFn, std::vector<Array>>;

struct OpCase {
  std::string name;
  std::function<Case(Rng&)> make;
};

inline std::vector<OpCase> all() {
  std::vector<OpCase> cases;

  cases.push_back({"matmul", [](Rng& rng) {
    const std::size_t n = 1 + rng.uniform_int(0, 3), k = 1 + rng.uniform_int(0, 3), m = 1 + rng.uniform_int(0, 3);
    auto w = oracle::random_array(rng, {n, m});
    oracle::ScalarFn f = [w](const std::vector<Node>& in) {
      return ad::sum(ad::mul(ad::matmul(in[0], in[1]), Node::constant(w)));
    };
    return Case{f, {oracle::random_array(rng, {n, k}), oracle::random_array(rng, {k, m})}};
  }});
  cases.push_back({"conv2d", [](Rng& rng) {
    const std::size_t cin = 1 + rng.uniform_int(0, 2), cout = 1 + rng.uniform_int(0, 2);
    const std::size_t k = rng.coin() ? 3 : 1;
    const std::size_t stride = 1 + rng.uniform_int(0, 1), pad = k == 3 ? rng.uniform_int(0, 1) : 0;
    const std::size_t h = 4 + rng.uniform_int(0, 3), w = 4 + rng.uniform_int(0, 3);
    const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
    auto probe_w = oracle::random_array(rng, {cout, oh, ow});
    oracle::ScalarFn f = [=](const std::vector<Node>& in) {
      return ad::sum(ad::mul(ad::conv2d(in[0], in[1], in[2], stride, pad), Node::constant(probe_w)));
    };
    return Case{f,
                {oracle::random_array(rng, {cin, h, w}), oracle::random_array(rng, {cout, cin, k, k}),
                 oracle::random_array(rng, {cout})}};
  }});
  for (const char* op : {"add", "sub", "mul", "div"}) {
    cases.push_back({op, [op = std::string(op)](Rng& rng) {
      const int mode = static_cast<int>(rng.uniform_int(0, 2));  // same shape, scalar b, scalar a
      const Shape s{2, 3};
      Shape sa = mode == 2 ? Shape{1} : s, sb = mode == 1 ? Shape{1} : s;
      auto w = oracle::random_array(rng, s);
      oracle::ScalarFn f = [op, w](const std::vector<Node>& in) {
        Node y = op == "add"   ? ad::add(in[0], in[1])
                 : op == "sub" ? ad::sub(in[0], in[1])
                 : op == "mul" ? ad::mul(in[0], in[1])
                               : ad::div(in[0], in[1]);
        return ad::sum(ad::mul(y, Node::constant(w)));
      };
      return Case{f, {oracle::random_array(rng, sa), oracle::positive_array(rng, sb, 0.5, 2.0)}};
    }});
  }
  cases.push_back({"scalar_mul/add_scalar", [](Rng& rng) {
    const double s = rng.uniform(-2, 2), c = rng.uniform(-1, 1);
    auto w = oracle::random_array(rng, {5});
    oracle::ScalarFn f = [=](const std::vector<Node>& in) {
      return ad::sum(ad::mul(ad::add_scalar(ad::scalar_mul(in[0], s), c), Node::constant(w)));
    };
    return Case{f, {oracle::random_array(rng, {5})}};
  }});
  cases.push_back({"relu", [](Rng& rng) {
    auto w = oracle::random_array(rng, {2, 4});
    oracle::ScalarFn f = [w](const std::vector<Node>& in) { return ad::sum(ad::mul(ad::relu(in[0]), Node::constant(w))); };
    return Case{f, {oracle::random_array(rng, {2, 4})}};
  }});
  cases.push_back({"log/sqrt", [](Rng& rng) {
    auto w = oracle::random_array(rng, {6});
    oracle::ScalarFn f = [w](const std::vector<Node>& in) {
      return ad::sum(ad::mul(ad::add(ad::log(in[0]), ad::sqrt(in[0])), Node::constant(w)));
    };
    return Case{f, {oracle::positive_array(rng, {6})}};
  }});
  cases.push_back({"sum/mean/norm", [](Rng& rng) {
    oracle::ScalarFn f = [](const std::vector<Node>& in) {
      return ad::add(ad::mul(ad::sum(in[0]), ad::mean(in[0])), ad::norm(in[0]));
    };
    return Case{f, {oracle::random_array(rng, {3, 3})}};
  }});
  cases.push_back({"reshape", [](Rng& rng) {
    auto w = oracle::random_array(rng, {3, 4});
    oracle::ScalarFn f = [w](const std::vector<Node>& in) {
      return ad::sum(ad::mul(ad::reshape(in[0], {3, 4}), Node::constant(w)));
    };
    return Case{f, {oracle::random_array(rng, {2, 6})}};
  }});
  cases.push_back({"bilinear_upsample", [](Rng& rng) {
    const std::size_t c = 1 + rng.uniform_int(0, 1), h = 2 + rng.uniform_int(0, 3), w = 2 + rng.uniform_int(0, 3);
    const std::size_t oh = h * (1 + rng.uniform_int(0, 3)), ow = w * (1 + rng.uniform_int(0, 3));
    auto pw = oracle::random_array(rng, {c, oh, ow});
    oracle::ScalarFn f = [=](const std::vector<Node>& in) {
      return ad::sum(ad::mul(ad::bilinear_upsample(in[0], oh, ow), Node::constant(pw)));
    };
    return Case{f, {oracle::random_array(rng, {c, h, w})}};
  }});
  cases.push_back({"variance_node", [](Rng& rng) {
    const std::size_t n = 1 + rng.uniform_int(0, 7), m = 2 + rng.uniform_int(0, 10);
    auto feats = oracle::random_array(rng, {n, m});
    oracle::ScalarFn f = [feats](const std::vector<Node>& in) {
      return ad::log(gpc::variance_node(in[0], feats, 1.0));
    };
    return Case{f, {oracle::random_array(rng, {m})}};
  }});
  cases.push_back({"mean_node", [](Rng& rng) {
    const std::size_t n = 1 + rng.uniform_int(0, 7), m = 2 + rng.uniform_int(0, 10), d = 1 + rng.uniform_int(0, 3);
    auto feats = oracle::random_array(rng, {n, m});
    auto targets = oracle::positive_array(rng, {n, d}, 0.0, 2.0);
    auto w = oracle::random_array(rng, {d});
    oracle::ScalarFn f = [=](const std::vector<Node>& in) {
      return ad::sum(ad::mul(gpc::mean_node(in[0], feats, targets, 1.0), Node::constant(w)));
    };
    return Case{f, {oracle::random_array(rng, {m})}};
  }});
  // Whole unlabeled loss with respect to every network weight. The pseudo-GT
  // is a constant; gradients reach the latent through the prediction and
  // through the predictive variance.
  cases.push_back({"unlabeled_loss", [](Rng& rng) {
    const auto cfg = testing_util::small_model();
    const auto params = testing_util::with_random_biases(gpc::init_params(cfg, rng.next_u64()), rng);
    Array img({1, 16, 16});
    for (auto& v : img.data) v = rng.uniform();
    const std::size_t n = 1 + rng.uniform_int(0, 7);
    auto feats = oracle::random_array(rng, {n, cfg.latent_dim()});
    auto targets = oracle::positive_array(rng, {n, 256}, 0.0, 0.05);
    const auto z0 = gpc::encode(img, gpc::bind(params, false)).latent;
    const auto pseudo = gpc::posterior_from(z0.data, feats, targets, 1.0);
    oracle::ScalarFn f = [=](const std::vector<Node>& leaves) {
      const auto model = testing_util::model_from_leaves(params, leaves);
      const auto enc = gpc::encode(img, model);
      const auto pred = gpc::decode(enc.node, model, 16, 16);
      return gpc::unsupervised_loss(pred, pseudo, gpc::variance_node(enc.node, feats, 1.0)).scalar;
    };
    return Case{f, testing_util::param_arrays(params)};
  }});
  return cases;
}

inline std::uint64_t case_seed(const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) h = (h ^ c) * 1099511628211ULL;
  return gpc::derive_seed(7, {h});
}

}  // namespace grad_cases
