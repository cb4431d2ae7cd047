#include <doctest.h>

#include <cmath>
#include <fstream>

#include "gpcount/errors.hpp"
#include "gpcount/eval.hpp"
#include "gpcount/random.hpp"
#include "helpers.hpp"

using namespace gpc;

TEST_CASE("mae and mse on hand-computed pairs") {
  const std::vector<CountPair> pairs{{10, 12}, {20, 17}};
  const auto s = mae_mse(pairs);
  CHECK(s.mae == 2.5);
  CHECK(s.mse == std::sqrt(6.5));
  CHECK(std::abs(s.mse - 2.5495097567963922) < 1e-15);
  CHECK_THROWS_AS(mae_mse(std::vector<CountPair>{}), ContractError);
}

TEST_CASE("mae and mse against direct sums") {
  Rng rng(41);
  for (int t = 0; t < 50; ++t) {
    std::vector<CountPair> pairs(1 + rng.uniform_int(0, 30));
    double a = 0, q = 0;
    for (auto& p : pairs) {
      p = {double(rng.uniform_int(0, 100)), rng.uniform(0, 100)};
      a += std::abs(p.gt - p.pred);
      q += (p.gt - p.pred) * (p.gt - p.pred);
    }
    const auto s = mae_mse(pairs);
    CHECK(s.mae == doctest::Approx(a / pairs.size()).epsilon(1e-14));
    CHECK(s.mse == doctest::Approx(std::sqrt(q / pairs.size())).epsilon(1e-14));
  }
}

TEST_CASE("average gain matches published values after rounding") {
  CHECK(display_gain(average_gain({118, 211}, {102, 172})) == 16);
  CHECK(display_gain(average_gain({21.2, 34.2}, {15.7, 27.9})) == 22);
  CHECK(average_gain({10, 10}, {12, 12}) == doctest::Approx(-20.0));
  CHECK_THROWS_AS(average_gain({0, 1}, {1, 1}), ContractError);
}

TEST_CASE("pseudo error histogram") {
  std::vector<PseudoSample> samples{{"a", 10, 12, 9}, {"b", 0, 1, 1}, {"c", 4, 4, 6}, {"d", 20, 10, 20}};
  const auto pe = pseudo_errors(samples);
  CHECK(pe.excluded == 1);
  REQUIRE(pe.records.size() == 3);
  CHECK(pe.records[0].err_pred == doctest::Approx(0.2));
  CHECK(pe.records[0].err_pseudo == doctest::Approx(0.1));
  const auto h = pseudo_error_histogram(pe.records, 5);
  REQUIRE(h.size() == 5);
  CHECK(h.front().lo == 0.0);
  CHECK(h.back().hi == 0.5);
  std::size_t np = 0, nq = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    np += h[i].pred_count;
    nq += h[i].pseudo_count;
    if (i) CHECK(h[i].lo == doctest::Approx(h[i - 1].hi));
  }
  CHECK(np == 3);
  CHECK(nq == 3);
  // The maximum lands in the closed last bin.
  CHECK(h.back().pseudo_count == 1);
  CHECK(h.back().pred_count == 1);

  std::vector<PseudoErrorRecord> same{{"x", 0.3, 0.3}};
  const auto flat = pseudo_error_histogram(same, 4);
  CHECK(flat.front().lo == 0.3);
  CHECK(flat.back().hi == doctest::Approx(1.3));
  CHECK_THROWS_AS(pseudo_error_histogram(same, 0), ContractError);
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 2, 3}) == 2.5);
}

TEST_CASE("metrics csv round-trip and gain attachment") {
  const auto dir = testing_util::scratch_dir("csv");
  std::vector<MetricsRow> rows{
      {"r", 0.05, "baseline", 10, 20, std::nullopt, "mean"},
      {"r", 0.05, "gp", 8, 15, std::nullopt, "mean"},
      {"r", 0.05, "gp", 9, 16, std::nullopt, "0"},
  };
  attach_average_gain(rows);
  CHECK(!rows[0].ag);
  REQUIRE(rows[1].ag);
  CHECK(*rows[1].ag == doctest::Approx(22.5));
  CHECK(!rows[2].ag);
  write_metrics_csv(rows, dir / "m.csv");
  const auto back = read_metrics_csv(dir / "m.csv");
  REQUIRE(back.size() == 3);
  CHECK(back[1].ag);
  CHECK(*back[1].ag == 22.5);
  CHECK(back[2].seed == "0");
  CHECK(format_number(1.0 / 3.0) == "0.333333");

  std::ofstream(dir / "bad.csv") << "run_id,labeled_fraction,method,mae,mse,ag,seed\nr,x,gp,1,1,,0\n";
  CHECK_THROWS_AS(read_metrics_csv(dir / "bad.csv"), ParseError);
  rows[0].run_id = "a,b";
  CHECK_THROWS_AS(write_metrics_csv(rows, dir / "m2.csv"), ContractError);
}
