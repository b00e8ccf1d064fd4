#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "impactlab/errors.hpp"
#include "impactlab/philox.hpp"
#include "impactlab/simulator.hpp"
#include "oracles.hpp"

using namespace impactlab;

TEST_CASE("Philox4x32-10 known-answer vectors") {
  using C = Philox4x32::Counter;
  using K = Philox4x32::Key;
  CHECK(Philox4x32::generate(C{0, 0, 0, 0}, K{0, 0}) ==
        C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(Philox4x32::generate(C{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                             K{0xffffffffu, 0xffffffffu}) ==
        C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(Philox4x32::generate(C{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                             K{0xa4093822u, 0x299f31d0u}) ==
        C{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("unit_open_closed never returns 0") {
  CHECK(unit_open_closed(0) > 0.0);
  CHECK(unit_open_closed(~std::uint64_t{0}) == 1.0);
}

TEST_CASE("sample_price_change examples") {
  const MarketParams market{0.02, 1e6};
  const ImpactModel model{0.5, 0.01, 0.1};
  const OrderSpec buy{1, 1e4, 1.0};
  CHECK(sample_price_change(buy, market, model, 0.0, 0.0) ==
        expected_impact(buy, market, model));
  CHECK(sample_price_change({-1, 1e4, 1.0}, market, model, 0.0, 0.0) ==
        -expected_impact(buy, market, model));
  CHECK(sample_price_change({1, 0.0, 1.0}, market, model, 0.0, 1.0) == 0.02);
  CHECK(sample_price_change(buy, market, model, 1.0, -1.0) ==
        doctest::Approx(-0.019222182540694798).epsilon(1e-14));
}

TEST_CASE("config validation") {
  auto bad = [](auto mutate) {
    SimConfig c;
    mutate(c);
    return c;
  };
  CHECK_NOTHROW(SimConfig{}.validate());
  CHECK_THROWS_AS(bad([](SimConfig& c) { c.n_orders = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](SimConfig& c) { c.q_over_v_lo = 0.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](SimConfig& c) { c.q_over_v_lo = c.q_over_v_hi; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(bad([](SimConfig& c) { c.t_buckets = {}; c.t_weights = {}; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(bad([](SimConfig& c) { c.t_buckets[2] = 0.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](SimConfig& c) { c.t_weights[0] = -1.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](SimConfig& c) { c.t_weights.assign(5, 0.0); }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(bad([](SimConfig& c) { c.t_weights.pop_back(); }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](SimConfig& c) { c.market.sigma = 0.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](SimConfig& c) { c.model.phi0 = -1.0; }).validate(), ConfigError);

  // Nothing reaches the sink when the config is invalid.
  int calls = 0;
  CHECK_THROWS_AS(simulate_chunks(bad([](SimConfig& c) { c.n_orders = 0; }), 10, 1,
                                  [&](auto) { ++calls; }),
                  ConfigError);
  CHECK(calls == 0);
}

TEST_CASE("records satisfy the type invariants") {
  SimConfig c;
  c.n_orders = 20000;
  c.seed = 3;
  for (const auto& r : simulate_panel(c)) {
    REQUIRE((r.sign == 1 || r.sign == -1));
    REQUIRE(r.quantity > 0.0);
    REQUIRE(r.q_over_v() >= c.q_over_v_lo);
    REQUIRE(r.q_over_v() <= c.q_over_v_hi);
    REQUIRE(std::find(c.t_buckets.begin(), c.t_buckets.end(), r.duration) != c.t_buckets.end());
    REQUIRE(std::isfinite(r.price_change()));
    REQUIRE(r.start_logprice == 0.0);
  }
}

TEST_CASE("single record is identical across runs and thread counts") {
  SimConfig c;
  c.n_orders = 1;
  c.seed = 42;
  const auto a = simulate_panel(c, 1);
  const auto b = simulate_panel(c, 1);
  const auto d = simulate_panel(c, 8);
  REQUIRE(a.size() == 1);
  CHECK(a == b);
  CHECK(a == d);
}

TEST_CASE("panel is a pure function of (seed, config)") {
  SimConfig c;
  c.n_orders = 100000;
  c.seed = 11;
  const auto one = simulate_panel(c, 1);
  CHECK(one == simulate_panel(c, 8));
  CHECK(one == simulate_panel(c, 3));

  std::vector<MetaorderRecord> streamed;
  simulate_chunks(c, 7777, 4, [&](std::span<const MetaorderRecord> chunk) {
    streamed.insert(streamed.end(), chunk.begin(), chunk.end());
  });
  CHECK(one == streamed);

  // Record i depends only on (seed, i), not on the panel length.
  SimConfig shorter = c;
  shorter.n_orders = 10;
  const auto head = simulate_panel(shorter);
  CHECK(std::equal(head.begin(), head.end(), one.begin()));
  CHECK(make_record(c, 99999) == one.back());

  SimConfig other = c;
  other.seed = 12;
  CHECK(simulate_panel(other)[0] != one[0]);
}

TEST_CASE("signs are balanced") {
  SimConfig c;
  c.n_orders = 1000000;
  c.seed = 5;
  double sum = 0.0;
  for (std::uint64_t i = 0; i < c.n_orders; ++i) sum += draw_record(c, i).sign;
  CHECK(std::abs(sum / c.n_orders) < 0.0015);
}

TEST_CASE("zero quantity and a = 0 leave pure diffusion in every bucket") {
  SimConfig c;
  c.n_orders = 1000000;
  c.seed = 8;
  c.model.a_fluct = 0.0;
  std::map<std::size_t, std::vector<double>> by_bucket;
  for (std::uint64_t i = 0; i < c.n_orders; ++i) {
    const RecordDraws d = draw_record(c, i);
    const OrderSpec order{d.sign, 0.0, c.t_buckets[d.t_index]};
    by_bucket[d.t_index].push_back(sample_price_change(order, c.market, c.model, d.eta, d.xi));
  }
  REQUIRE(by_bucket.size() == c.t_buckets.size());
  for (const auto& [k, xs] : by_bucket) {
    const double want = c.market.sigma * c.market.sigma * c.t_buckets[k];
    CHECK(std::abs(oracle::two_pass(xs).variance() / want - 1.0) < 0.01);
  }
}

TEST_CASE("noise draws have zero mean and unit variance") {
  for (NoiseKind kind : {NoiseKind::Normal, NoiseKind::Uniform}) {
    SimConfig c;
    c.seed = 21;
    c.noise = kind;
    const std::size_t n = 1000000;
    std::vector<double> eta(n), xi(n);
    for (std::size_t i = 0; i < n; ++i) {
      const RecordDraws d = draw_record(c, i);
      eta[i] = d.eta;
      xi[i] = d.xi;
    }
    // Fourth central moment of the draw distribution: 3 (normal), 9/5 (uniform).
    const double mu4 = kind == NoiseKind::Normal ? 3.0 : 1.8;
    const double se_mean = std::sqrt(1.0 / n);
    const double se_var = std::sqrt((mu4 - 1.0) / n);
    for (const auto* xs : {&eta, &xi}) {
      const auto m = oracle::two_pass(*xs);
      CHECK(std::abs(m.mean) < 5 * se_mean);
      CHECK(std::abs(m.variance() - 1.0) < 5 * se_var);
    }
    // eta and xi are uncorrelated.
    double cross = 0.0;
    for (std::size_t i = 0; i < n; ++i) cross += eta[i] * xi[i];
    CHECK(std::abs(cross / n) < 5 * se_mean);
  }
}

TEST_CASE("sampling follows the configured distributions") {
  SimConfig c;
  c.seed = 13;
  c.t_weights = {1, 0, 2, 0, 1};
  const std::size_t n = 400000;
  std::vector<std::size_t> counts(c.t_buckets.size());
  std::size_t below_mid = 0;
  const double mid = std::sqrt(c.q_over_v_lo * c.q_over_v_hi);
  for (std::size_t i = 0; i < n; ++i) {
    const RecordDraws d = draw_record(c, i);
    ++counts[d.t_index];
    below_mid += d.q_over_v < mid;
  }
  CHECK(counts[1] == 0);
  CHECK(counts[3] == 0);
  for (auto [k, p] : {std::pair{0, 0.25}, {2, 0.5}, {4, 0.25}}) {
    const double se = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(static_cast<double>(counts[k]) / n - p) < 5 * se);
  }
  CHECK(std::abs(static_cast<double>(below_mid) / n - 0.5) < 5 * std::sqrt(0.25 / n));
}

TEST_CASE("conditional moments at fixed (Q, T) match the model") {
  const SimConfig c;
  const std::size_t n = 200000;
  // Linear regime, crossover and deep plateau, at short and long durations.
  for (auto [qv, t] : {std::pair{1e-4, 1.0}, {1e-2, 1.0}, {1.0, 1.0 / 16}, {10.0, 1.0 / 16},
                       {1e-3, 1.0 / 4}}) {
    const OrderSpec order{1, qv * c.market.daily_volume, t};
    std::vector<double> signed_dp(n);
    for (std::size_t i = 0; i < n; ++i) {
      const RecordDraws d = draw_record(c, i + 7 * n);
      OrderSpec o = order;
      o.sign = d.sign;
      signed_dp[i] = d.sign * sample_price_change(o, c.market, c.model, d.eta, d.xi);
    }
    const auto m = oracle::two_pass(signed_dp);
    const double var = m.variance();
    const double mean_se = std::sqrt(var / n);
    const double var_se = std::sqrt((m.m4 / n - var * var) / n);
    INFO("Q/V=" << qv << " T=" << t);
    CHECK(std::abs(m.mean - expected_impact(order, c.market, c.model)) < 5 * mean_se);
    CHECK(std::abs(var - conditional_variance(order, c.market, c.model)) < 5 * var_se);
  }
}
