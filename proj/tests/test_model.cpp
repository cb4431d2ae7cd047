#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gpcount/errors.hpp"
#include "gpcount/model.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace gpc;
namespace fs = std::filesystem;

TEST_CASE("shapes through the network") {
  ModelConfig cfg;
  const auto params = init_params(cfg, 1);
  const auto model = bind(params, false);
  Array img({1, 64, 64}, 0.3);
  const auto enc = encode(img, model);
  CHECK(enc.node.shape() == Shape{16, 8, 8});
  CHECK(enc.latent.size() == cfg.latent_dim());
  CHECK(forward(img, model).shape() == Shape{1, 64, 64});
  CHECK_THROWS_AS(encode(Array({1, 60, 64}), model), ShapeError);
  CHECK_THROWS_AS(encode(Array({2, 64, 64}), model), ShapeError);
}

TEST_CASE("init is deterministic and output starts positive") {
  const auto a = init_params({}, 9), b = init_params({}, 9), c = init_params({}, 10);
  CHECK(a == b);
  CHECK(!(a == c));
  CHECK(a.tensors().size() == a.tensor_names().size());
  Rng rng(1);
  Array img({1, 64, 64});
  for (auto& v : img.data) v = rng.uniform();
  CHECK(predict_count(img, a) > 0.0);
}

TEST_CASE("whole-model gradient matches finite differences") {
  Rng rng(3);
  const auto params = testing_util::with_random_biases(init_params(testing_util::small_model(), 2), rng);
  Array img({1, 16, 16});
  for (auto& v : img.data) v = rng.uniform();
  auto gt = oracle::positive_array(rng, {1, 16, 16}, 0.0, 0.01);
  oracle::ScalarFn f = [&](const std::vector<ad::Node>& leaves) {
    const auto m = testing_util::model_from_leaves(params, leaves);
    return ad::norm(ad::sub(forward(img, m), ad::Node::constant(gt)));
  };
  const auto r = oracle::check_gradients(f, testing_util::param_arrays(params));
  INFO("worst " << r.worst);
  CHECK(r.ok());
}

TEST_CASE("checkpoint round-trip and corruption") {
  const auto dir = testing_util::scratch_dir("ckpt");
  const auto params = init_params(testing_util::small_model(), 4);
  save_checkpoint(params, dir / "a.ckpt");
  CHECK(load_checkpoint(dir / "a.ckpt") == params);

  const auto size = fs::file_size(dir / "a.ckpt");
  fs::copy_file(dir / "a.ckpt", dir / "b.ckpt");
  fs::resize_file(dir / "b.ckpt", size - 3);
  CHECK_THROWS_AS(load_checkpoint(dir / "b.ckpt"), ParseError);
  std::ofstream(dir / "c.ckpt") << "not a checkpoint\n";
  CHECK_THROWS_AS(load_checkpoint(dir / "c.ckpt"), ParseError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), ParseError);
}
