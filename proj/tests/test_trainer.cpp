#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "gpcount/errors.hpp"
#include "gpcount/trainer.hpp"
#include "helpers.hpp"

using namespace gpc;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.encoder_channels = {2, 3};
  c.latent_channels = 2;
  c.batch_size = 4;
  c.epochs = 2;
  c.n_neighbors = 4;
  return c;
}

Dataset tiny_data(std::size_t n, std::uint64_t seed) {
  return generate_dataset(n, 16, 16, 1, 4, DomainStyle{}, seed);
}

}  // namespace

TEST_CASE("config keys parse and round-trip") {
  TrainConfig c;
  set_config_value(c, "lambda_un", "0.25");
  set_config_value(c, "encoder_channels", "4,8");
  set_config_value(c, "neighbor_metric", "euclidean");
  set_config_value(c, "gp_enabled", "true");
  CHECK(c.lambda_un == 0.25);
  CHECK(c.encoder_channels == std::vector<std::size_t>{4, 8});
  CHECK(c.neighbor_metric == NeighborMetric::kEuclidean);
  CHECK(c.gp_enabled);
  CHECK_THROWS_AS(set_config_value(c, "no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(set_config_value(c, "epochs", "many"), ConfigError);
  CHECK_THROWS_AS(set_config_value(c, "epochs", "-3"), ConfigError);

  const auto dir = testing_util::scratch_dir("cfg");
  save_train_config(c, dir / "c.txt");
  const auto back = load_train_config(dir / "c.txt");
  CHECK(config_entries(back) == config_entries(c));

  std::ofstream(dir / "bad.txt") << "# comment\nepochs=3\nbogus line\n";
  try {
    load_train_config(dir / "bad.txt");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bad.txt:3") != std::string::npos);
  }
}

TEST_CASE("environment overrides") {
  TrainConfig c;
  ::setenv("GPCTEST_N_NEIGHBORS", "3", 1);
  apply_env_overrides(c, "GPCTEST_");
  ::unsetenv("GPCTEST_N_NEIGHBORS");
  CHECK(c.n_neighbors == 3);
}

TEST_CASE("conflicting arms are rejected") {
  auto c = tiny_config();
  c.gp_enabled = c.ranking_enabled = true;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.ranking_enabled = false;
  c.noise_variance = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto c = tiny_config();
  c.learning_rate = 0.0;
  c.gp_enabled = true;
  const auto data = tiny_data(8, 1);
  const auto s = split(data, {0.5, 0});
  const auto r = train(s.labeled, s.unlabeled, c);
  CHECK(r.params == init_state(c, 16, 16).params);
}

TEST_CASE("supervised loss falls when overfitting a few images") {
  auto c = tiny_config();
  c.encoder_channels = {4, 8};
  c.latent_channels = 4;
  c.epochs = 80;
  c.learning_rate = 5e-3;
  c.hflip = false;
  const auto data = generate_dataset(4, 32, 32, 1, 4, DomainStyle{}, 2);
  const auto r = train(data, {}, c);
  CHECK(r.history.epochs.back().supervised < 0.5 * r.history.epochs.front().supervised);
}

TEST_CASE("lambda zero equals the labeled-only run") {
  auto c = tiny_config();
  const auto data = tiny_data(12, 3);
  const auto s = split(data, {0.34, 0});
  c.steps_per_epoch = 3;
  const auto base = train(s.labeled, {}, c);
  c.gp_enabled = true;
  c.lambda_un = 0.0;
  const auto gp = train(s.labeled, s.unlabeled, c);
  CHECK(gp.params == base.params);
  c.lambda_un = 0.6;
  const auto gp_empty = train(s.labeled, {}, c);
  CHECK(gp_empty.params == base.params);
}

TEST_CASE("training is deterministic and variance stays bounded") {
  auto c = tiny_config();
  c.gp_enabled = true;
  const auto data = tiny_data(12, 4);
  const auto s = split(data, {0.34, 7});
  const auto a = train(s.labeled, s.unlabeled, c);
  const auto b = train(s.labeled, s.unlabeled, c);
  CHECK(a.params == b.params);
  CHECK(a.history.variance.count > 0);
  CHECK(a.history.variance.violations == 0);
  CHECK(a.history.variance.min >= 1.0);
  CHECK(a.history.variance.max <= 2.0);
  CHECK(a.history.final_pseudo.size() == s.unlabeled.size());
  c.seed = 1;
  CHECK(!(train(s.labeled, s.unlabeled, c).params == a.params));
}

TEST_CASE("staged mode keeps a full bank and runs both stages") {
  auto c = tiny_config();
  c.gp_enabled = true;
  c.interleave = false;
  const auto data = tiny_data(12, 5);
  const auto s = split(data, {0.34, 0});
  auto state = init_state(c, 16, 16);
  const auto targets = density_targets(s.labeled, c.density_sigma);
  CHECK_THROWS_AS(unlabeled_stage(state, s.unlabeled, c), ContractError);
  labeled_stage(state, s.labeled, targets, c);
  CHECK(state.bank.size() + state.bank.skipped == s.labeled.size());
  unlabeled_stage(state, s.unlabeled, c);
  const auto& rec = state.history.epochs.back();
  CHECK(rec.labeled_steps == 2);
  CHECK(rec.unlabeled_steps == 2);
  CHECK(std::isfinite(rec.unsupervised));
}

TEST_CASE("ranking arm trains") {
  auto c = tiny_config();
  c.ranking_enabled = true;
  const auto data = tiny_data(12, 6);
  const auto s = split(data, {0.34, 0});
  const auto r = train(s.labeled, s.unlabeled, c);
  CHECK(r.history.epochs.back().unlabeled_steps > 0);
}

TEST_CASE("mixed image sizes are rejected") {
  auto c = tiny_config();
  auto a = tiny_data(2, 1);
  a.push_back(generate_dataset(1, 32, 32, 1, 4, DomainStyle{}, 9)[0]);
  CHECK_THROWS_AS(train(a, {}, c), ShapeError);
}

TEST_CASE("adam matches a hand-rolled update") {
  ModelParams p = init_params(testing_util::small_model(), 0);
  Adam opt(p, 0.1, 0.9, 0.999, 1e-8);
  auto before = p;
  std::vector<Array> grads;
  for (const auto* t : p.tensors()) grads.push_back(Array(t->shape, 2.0));
  opt.step(p, grads);
  // First bias-corrected step moves every coordinate by lr·g/(|g|+ε).
  const auto b = before.tensors();
  const auto a = p.tensors();
  const double expect = 0.1 * 2.0 / (2.0 + 1e-8);
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k]->size(); ++i) CHECK((*b[k])[i] - (*a[k])[i] == doctest::Approx(expect).epsilon(1e-12));
}
