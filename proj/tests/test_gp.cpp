#include <doctest.h>

#include <cmath>

#include "gpcount/errors.hpp"
#include "gpcount/gp.hpp"
#include "oracles.hpp"

using namespace gpc;

namespace {

struct Instance {
  std::vector<double> z;
  oracle::Matrix f, t;
  Array features, targets;
};

Instance random_instance(Rng& rng, std::size_t n, std::size_t m, std::size_t d) {
  Instance in;
  in.z.resize(m);
  for (auto& v : in.z) v = rng.normal();
  in.features = Array({n, m});
  in.targets = Array({n, d});
  in.f.assign(n, std::vector<double>(m));
  in.t.assign(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) in.f[i][j] = in.features[i * m + j] = rng.normal();
    for (std::size_t j = 0; j < d; ++j) in.t[i][j] = in.targets[i * d + j] = rng.uniform(0, 2);
  }
  return in;
}

}  // namespace

TEST_CASE("posterior matches dense elimination oracle") {
  Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    const auto n = 1 + rng.uniform_int(0, 7), m = 1 + rng.uniform_int(0, 15), d = 1 + rng.uniform_int(0, 3);
    auto in = random_instance(rng, n, m, d);
    const double noise = t % 2 ? 1.0 : rng.uniform(0.1, 2.0);
    const auto post = posterior_from(in.z, in.features, in.targets, noise);
    const auto ref = oracle::gp_posterior(in.z, in.f, in.t, noise);
    CHECK(std::abs(post.variance - ref.variance) <= 1e-9);
    for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(post.mean[j] - ref.mean[j]) <= 1e-9);
  }
}

TEST_CASE("single identical neighbour halves the target") {
  const std::vector<double> z{0.3, -1.2, 2.0};
  Array f({1, 3}, z);
  Array y({1, 2}, std::vector<double>{4.0, 1.0});
  const auto post = posterior_from(z, f, y, 1.0);
  CHECK(std::abs(post.mean[0] - 2.0) <= 1e-12);
  CHECK(std::abs(post.mean[1] - 0.5) <= 1e-12);
  CHECK(std::abs(post.variance - 1.5) <= 1e-12);
}

TEST_CASE("variance stays within [noise, 1 + noise]") {
  Rng rng(22);
  for (int t = 0; t < 500; ++t) {
    auto in = random_instance(rng, 1 + rng.uniform_int(0, 7), 1 + rng.uniform_int(0, 7), 1);
    const auto v = posterior_from(in.z, in.features, in.targets, 1.0).variance;
    CHECK(v >= 1.0);
    CHECK(v <= 2.0);
  }
}

TEST_CASE("nearest matches a full sort") {
  Rng rng(23);
  for (int t = 0; t < 50; ++t) {
    LatentBank bank;
    oracle::Matrix rows;
    std::vector<std::string> ids;
    const std::size_t n = 20;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> f(6);
      for (auto& v : f) v = rng.normal();
      // Some exact duplicates to exercise tie-breaking.
      if (i % 7 == 6) f = rows[i - 3];
      const std::string id = "id" + std::to_string(100 - i);
      bank.add(id, f, std::vector<double>{double(i)});
      rows.push_back(f);
      ids.push_back(id);
    }
    std::vector<double> z(6);
    for (auto& v : z) v = rng.normal();
    const auto got = nearest(z, bank, 5, NeighborMetric::kCosine);
    CHECK(got.rows == oracle::brute_nearest(z, rows, ids, 5));
    CHECK(got.features.dim(0) == 5);
    CHECK(got.targets[0] == double(got.rows[0]));
  }
}

TEST_CASE("nearest saturates and supports euclidean") {
  LatentBank bank;
  bank.add("b", std::vector<double>{1, 0}, std::vector<double>{1});
  bank.add("a", std::vector<double>{10, 0}, std::vector<double>{2});
  bank.add("c", std::vector<double>{0, 1}, std::vector<double>{3});
  const std::vector<double> z{1, 0};
  auto all = nearest(z, bank, 10, NeighborMetric::kCosine);
  CHECK(all.rows.size() == 3);
  // Equal cosine similarity: ties go to the smaller id.
  CHECK(all.rows[0] == 1);
  CHECK(all.rows[1] == 0);
  auto eu = nearest(z, bank, 1, NeighborMetric::kEuclidean);
  CHECK(eu.rows[0] == 0);
  CHECK_THROWS_AS(nearest(z, LatentBank{}, 1, NeighborMetric::kCosine), ContractError);
}

TEST_CASE("bank rejects degenerate and mismatched rows") {
  LatentBank bank;
  CHECK_THROWS_AS(bank.add("z", std::vector<double>{0, 0}, std::vector<double>{1}), DegenerateLatentError);
  bank.add("x", std::vector<double>{1, 0}, std::vector<double>{1});
  CHECK_THROWS_AS(bank.add("y", std::vector<double>{1, 0, 0}, std::vector<double>{1}), ShapeError);
  CHECK(bank.size() == 1);
  CHECK_THROWS_AS(cosine_kernel(std::vector<double>{0, 0}, std::vector<double>{1, 0}), DegenerateLatentError);
}

TEST_CASE("nodes agree with the plain posterior") {
  Rng rng(25);
  auto in = random_instance(rng, 5, 8, 3);
  const auto post = posterior_from(in.z, in.features, in.targets, 1.0);
  const auto z = ad::Node::constant(Array({8}, in.z));
  CHECK(variance_node(z, in.features, 1.0).item() == post.variance);
  CHECK(mean_node(z, in.features, in.targets, 1.0).value() == post.mean);
}
