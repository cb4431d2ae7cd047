#include <doctest.h>

#include "gpcount/errors.hpp"
#include "gpcount/tensor.hpp"
#include "oracles.hpp"

using namespace gpc;
using ad::Node;

TEST_CASE("array rejects zero extents and size mismatches") {
  CHECK_THROWS_AS(Array({3, 0}), ShapeError);
  CHECK_THROWS_AS(Array({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Array a({2, 3}, 1.5);
  CHECK(a.size() == 6);
  CHECK(a.rank() == 2);
}

TEST_CASE("cholesky solve agrees with Gaussian elimination") {
  Rng rng(11);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 1 + rng.uniform_int(0, 9);
    const std::size_t d = 1 + rng.uniform_int(0, 3);
    Array m({n, n});
    for (auto& v : m.data) v = rng.normal();
    Array a({n, n});
    oracle::Matrix am(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = i == j ? 0.5 : 0.0;
        for (std::size_t k = 0; k < n; ++k) s += m[i * n + k] * m[j * n + k];
        a[i * n + j] = s;
        am[i][j] = s;
      }
    Array b({n, d});
    oracle::Matrix bm(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) bm[i][c] = b[i * d + c] = rng.normal();
    const auto x = solve_spd(a, b);
    const auto xo = oracle::gauss_solve(am, bm);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) CHECK(x[i * d + c] == doctest::Approx(xo[i][c]).epsilon(1e-9));
  }
}

TEST_CASE("cholesky reports indefinite matrices") {
  Array a({2, 2}, std::vector<double>{1, 2, 2, 1});
  CHECK_THROWS_AS(Cholesky{a}, NumericalError);
  CHECK_THROWS_AS(Cholesky{Array({2, 3})}, ShapeError);
}

TEST_CASE("backward contract") {
  auto x = Node::parameter(Array({3}, std::vector<double>{1, 2, 3}));
  CHECK_THROWS_AS(ad::backward(ad::relu(x)), ContractError);

  SUBCASE("shared subexpressions accumulate") {
    // f = sum(x * x) + sum(x) → df/dx = 2x + 1
    auto f = ad::add(ad::sum(ad::mul(x, x)), ad::sum(x));
    ad::backward(f);
    const auto g = x.grad();
    CHECK(g[0] == doctest::Approx(3));
    CHECK(g[2] == doctest::Approx(7));
  }
  SUBCASE("repeated backward doubles leaf gradients") {
    auto f = ad::sum(ad::mul(x, x));
    ad::backward(f);
    ad::backward(f);
    CHECK(x.grad()[1] == doctest::Approx(8));
    x.zero_grad();
    CHECK(!x.has_grad());
  }
  SUBCASE("constants receive nothing") {
    auto c = Node::constant(Array({3}, 2.0));
    ad::backward(ad::sum(ad::mul(x, c)));
    CHECK(!c.has_grad());
    CHECK(!c.requires_grad());
  }
}

TEST_CASE("op edge cases") {
  CHECK_THROWS_AS(ad::log(Node::constant(Array({2}, std::vector<double>{1.0, 0.0}))), DomainError);
  CHECK_THROWS_AS(ad::add(Node::constant(Array({2})), Node::constant(Array({3}))), ShapeError);
  CHECK_THROWS_AS(ad::conv2d(Node::constant(Array({1, 4, 4})), Node::constant(Array({1, 1, 2, 2})),
                             Node::constant(Array({1})), 1, 0),
                  ShapeError);

  auto z = Node::parameter(Array({4}, 0.0));
  ad::backward(ad::norm(z));
  for (double g : z.grad().data) CHECK(g == 0.0);

  const auto y = ad::conv2d(Node::constant(Array({1, 64, 64})), Node::constant(Array({8, 1, 3, 3})),
                            Node::constant(Array({8})), 2, 1);
  CHECK(y.shape() == Shape{8, 32, 32});

  Rng rng(3);
  auto a = oracle::random_array(rng, {2, 3, 5});
  CHECK(ad::bilinear_upsample(Node::constant(a), 3, 5).value() == a);
  const auto up = ad::bilinear_upsample(Node::constant(Array({1, 2, 2}, 0.25)), 8, 8).value();
  for (double v : up.data) CHECK(v == doctest::Approx(0.25));
}
