#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "impactlab/bucket_stats.hpp"
#include "impactlab/errors.hpp"
#include "impactlab/estimator.hpp"
#include "impactlab/fit.hpp"
#include "oracles.hpp"

using namespace impactlab;

namespace {

MetaorderRecord record(std::uint64_t id, double qv, double t, double signed_dp, int sign = 1) {
  MetaorderRecord r;
  r.order_id = id;
  r.sign = sign;
  r.quantity = qv * 1e6;
  r.duration = t;
  r.start_logprice = 0.0;
  r.end_logprice = sign * signed_dp;
  r.sigma = 0.02;
  r.daily_volume = 1e6;
  return r;
}

BucketGrid small_grid() { return BucketGrid::log_spaced(1e-4, 1e-2, 2, {0.25, 0.5, 1.0}); }

bool close(double a, double b, double tol) {
  if (a == b) return true;
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

void check_stats_close(const BucketStats& a, const BucketStats& b, double tol) {
  CHECK(a.count() == b.count());
  CHECK(close(a.mean(), b.mean(), tol));
  CHECK(close(a.m2(), b.m2(), tol));
  CHECK(close(a.m3(), b.m3(), 1e3 * tol));
  CHECK(close(a.m4(), b.m4(), tol));
}

void check_matrix_close(const BucketMatrix& a, const BucketMatrix& b, double tol) {
  REQUIRE(a.grid() == b.grid());
  for (std::size_t t = 0; t < a.grid().n_t(); ++t)
    for (std::size_t bin = 0; bin < a.grid().n_bins(); ++bin)
      check_stats_close(a.at(bin, t), b.at(bin, t), tol);
  CHECK(a.out_of_range_q() == b.out_of_range_q());
  CHECK(a.out_of_range_t() == b.out_of_range_t());
}

}  // namespace

TEST_CASE("BucketStats two-point arithmetic") {
  BucketStats s;
  CHECK(s.empty());
  CHECK(std::isnan(s.variance()));
  s.add(1e-3);
  CHECK(std::isnan(s.variance()));
  CHECK(std::isnan(s.std_err_mean()));
  s.add(3e-3);
  CHECK(s.count() == 2);
  CHECK(s.mean() == doctest::Approx(2e-3).epsilon(1e-15));
  CHECK(s.variance() == doctest::Approx(2e-6).epsilon(1e-15));
  CHECK(s.std_err_mean() == doctest::Approx(1e-3).epsilon(1e-15));
}

TEST_CASE("BucketStats matches two-pass moments") {
  std::mt19937_64 rng(4);
  std::lognormal_distribution<double> dist(0.0, 0.7);
  std::vector<double> xs(5000);
  for (auto& x : xs) x = 1e-3 * dist(rng) - 2e-3;
  BucketStats s;
  for (double x : xs) s.add(x);
  const auto m = oracle::two_pass(xs);
  CHECK(close(s.mean(), m.mean, 1e-12));
  CHECK(close(s.m2(), m.m2, 1e-12));
  CHECK(close(s.m3(), m.m3, 1e-9));
  CHECK(close(s.m4(), m.m4, 1e-12));

  // Variance standard error from the fourth moment.
  const double n = static_cast<double>(xs.size());
  const double var = m.m2 / (n - 1);
  const double mu4 = m.m4 / n;
  CHECK(close(s.std_err_variance(), std::sqrt((mu4 - var * var * (n - 3) / (n - 1)) / n), 1e-9));
}

TEST_CASE("merge with empty is the identity") {
  BucketStats s;
  for (double x : {1.0, 4.0, -2.0}) s.add(x);
  BucketStats a = s;
  a.merge(BucketStats{});
  check_stats_close(a, s, 0.0);
  BucketStats b;
  b.merge(s);
  check_stats_close(b, s, 0.0);
}

TEST_CASE("merge of two single observations equals accumulating both") {
  BucketStats a, b, both;
  a.add(1e-3);
  b.add(3e-3);
  both.add(1e-3);
  both.add(3e-3);
  a.merge(b);
  check_stats_close(a, both, 1e-15);
}

TEST_CASE("merge is exact for arbitrary shardings") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> dist(1e-3, 5e-3);
  std::vector<double> xs(20000);
  for (auto& x : xs) x = dist(rng);
  const auto m = oracle::two_pass(xs);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> cuts{0, xs.size()};
    std::uniform_int_distribution<std::size_t> pos(0, xs.size());
    for (int k = 0; k < trial; ++k) cuts.push_back(pos(rng));
    std::sort(cuts.begin(), cuts.end());
    BucketStats total;
    for (std::size_t k = 1; k < cuts.size(); ++k) {
      BucketStats shard;
      for (std::size_t i = cuts[k - 1]; i < cuts[k]; ++i) shard.add(xs[i]);
      total.merge(shard);
    }
    CHECK(total.count() == xs.size());
    CHECK(close(total.mean(), m.mean, 1e-12));
    CHECK(close(total.m2(), m.m2, 1e-12));
    CHECK(close(total.m4(), m.m4, 1e-11));
  }
}

TEST_CASE("grid construction and validation") {
  const auto g = BucketGrid::log_spaced(1e-6, 1e2, 20, {1.0 / 16, 0.125, 0.25, 0.5, 1.0});
  CHECK(g.n_bins() == 20);
  CHECK(g.q_over_v_edges.front() == 1e-6);
  CHECK(g.q_over_v_edges.back() == 1e2);
  CHECK(g.center(0) == doctest::Approx(std::sqrt(1e-6 * g.q_over_v_edges[1])));
  CHECK_NOTHROW(g.validate());

  CHECK_THROWS_AS(BucketGrid::log_spaced(1e-2, 1e-4, 4, {1.0}), ConfigError);
  CHECK_THROWS_AS(BucketGrid::log_spaced(0.0, 1e-4, 4, {1.0}), ConfigError);
  CHECK_THROWS_AS(BucketGrid::log_spaced(1e-4, 1e-2, 0, {1.0}), ConfigError);
  CHECK_THROWS_AS(BucketGrid::log_spaced(1e-4, 1e-2, 2, {}), ConfigError);
  CHECK(BucketGrid::log_spaced(1e-4, 1e-2, 2, {1.0, 0.5}).t_buckets == std::vector{0.5, 1.0});
  CHECK_THROWS_AS(BucketGrid::log_spaced(1e-4, 1e-2, 2, {0.5, 0.5}), ConfigError);
  BucketGrid unsorted{{1e-3, 1e-2}, {1.0, 0.5}};
  CHECK_THROWS_AS(unsorted.validate(), ConfigError);
  CHECK_THROWS_AS(BucketGrid::log_spaced(1e-4, 1e-2, 2, {-1.0}), ConfigError);
  BucketGrid bad{{1e-3, 1e-3, 1e-2}, {1.0}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  BucketGrid one_edge{{1e-3}, {1.0}};
  CHECK_THROWS_AS(one_edge.validate(), ConfigError);
}

TEST_CASE("bin edges are left-closed and right-open, top edge closed") {
  const BucketGrid g{{1e-4, 1e-3, 1e-2}, {1.0}};
  CHECK(g.bin_of(1e-4) == 0u);
  CHECK(g.bin_of(1e-3) == 1u);
  CHECK(g.bin_of(std::nextafter(1e-3, 0.0)) == 0u);
  CHECK(g.bin_of(1e-2) == 1u);
  CHECK_FALSE(g.bin_of(std::nextafter(1e-4, 0.0) * (1 - 1e-9)).has_value());
  CHECK_FALSE(g.bin_of(2e-2).has_value());

  const BucketGrid h{{1e-4, 1e-2}, {0.25, 1.0}};
  CHECK(h.bucket_of(0.25) == 0u);
  CHECK(h.bucket_of(0.25 * (1 + 5e-7)) == 0u);
  CHECK_FALSE(h.bucket_of(0.25 * (1 + 5e-6)).has_value());
  CHECK_FALSE(h.bucket_of(0.5).has_value());
}

TEST_CASE("accumulate: two records in one cell") {
  const BucketGrid g = small_grid();
  const std::vector<MetaorderRecord> rs{record(1, 2e-4, 0.5, 1e-3), record(2, 3e-4, 0.5, 3e-3, -1)};
  const BucketMatrix m = accumulate(g, rs);
  const BucketStats& c = m.at(0, 1);
  CHECK(c.count() == 2);
  CHECK(c.mean() == doctest::Approx(2e-3).epsilon(1e-15));
  CHECK(c.variance() == doctest::Approx(2e-6).epsilon(1e-15));
  CHECK(m.total_in_grid() == 2);
}

TEST_CASE("accumulate: empty input and out-of-range tallies") {
  const BucketGrid g = small_grid();
  const BucketMatrix empty = accumulate(g, {});
  for (std::size_t t = 0; t < g.n_t(); ++t)
    for (std::size_t b = 0; b < g.n_bins(); ++b) {
      CHECK(empty.at(b, t).empty());
      CHECK(std::isnan(empty.at(b, t).variance()));
    }
  CHECK(curves_from_stats(empty).empty());

  const std::vector<MetaorderRecord> rs{record(1, 2e-4, 0.5, 1e-3), record(2, 2e-4, 0.3, 1e-3),
                                        record(3, 0.5, 0.5, 1e-3), record(4, 1e-9, 0.7, 0.0)};
  const BucketMatrix m = accumulate(g, rs);
  CHECK(m.total_in_grid() == 1);
  CHECK(m.out_of_range_t() == 2);
  CHECK(m.out_of_range_q() == 1);
  CHECK(m.out_of_range() == 3);
}

TEST_CASE("rescale_by_sigma divides by each row's sigma") {
  const BucketGrid g = small_grid();
  auto r1 = record(1, 2e-4, 0.5, 1e-3);
  auto r2 = record(2, 2e-4, 0.5, 2e-3);
  r2.sigma = 0.04;
  const std::vector<MetaorderRecord> rs{r1, r2};
  const BucketMatrix m = accumulate(g, rs, {true});
  CHECK(m.at(0, 1).mean() == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(m.at(0, 1).variance() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("accumulate is invariant to order, sharding and threads") {
  SimConfig c;
  c.n_orders = 200000;
  c.seed = 31;
  auto records = simulate_panel(c);
  const BucketGrid g = BucketGrid::log_spaced(1e-6, 1e2, 20, c.t_buckets);
  const BucketMatrix ref = accumulate(g, records);

  std::vector<MetaorderRecord> shuffled = records;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(1));
  check_matrix_close(accumulate(g, shuffled), ref, 1e-12);

  // Seven uneven shards merged in a scrambled order.
  const std::vector<std::size_t> cuts{0, 1, 1000, 50000, 50001, 120000, 199999, 200000};
  std::vector<BucketMatrix> shards;
  for (std::size_t k = 1; k < cuts.size(); ++k)
    shards.push_back(accumulate(
        g, std::span<const MetaorderRecord>(records).subspan(cuts[k - 1], cuts[k] - cuts[k - 1])));
  BucketMatrix merged(g);
  for (std::size_t k : {3, 0, 6, 2, 5, 1, 4}) merged = merge(merged, shards[k]);
  check_matrix_close(merged, ref, 1e-12);

  // Thread count does not change a single bit.
  const BucketMatrix m8 = accumulate(g, records, {}, 8);
  const BucketMatrix m3 = accumulate(g, records, {}, 3);
  for (std::size_t t = 0; t < g.n_t(); ++t)
    for (std::size_t b = 0; b < g.n_bins(); ++b) {
      CHECK(m8.at(b, t).mean() == ref.at(b, t).mean());
      CHECK(m8.at(b, t).m2() == ref.at(b, t).m2());
      CHECK(m3.at(b, t).m4() == ref.at(b, t).m4());
    }
}

TEST_CASE("merge rejects different grids") {
  const BucketMatrix a(small_grid());
  const BucketMatrix b(BucketGrid::log_spaced(1e-4, 1e-2, 3, {0.25, 0.5, 1.0}));
  CHECK_THROWS_AS(merge(a, b), ConfigError);
}

TEST_CASE("per-cell means agree with the model on a default run") {
  const BucketMatrix& m = fixtures::cached_default_matrix();
  const BucketGrid& g = m.grid();
  const SimConfig defaults;
  int cells = 0, outside = 0;
  for (std::size_t t = 0; t < g.n_t(); ++t)
    for (std::size_t b = 0; b < g.n_bins(); ++b) {
      const BucketStats& c = m.at(b, t);
      if (c.count() < 50) continue;
      ++cells;
      // Expected impact averaged over the bin (log-uniform Q/V within it).
      const double want = predict_cell(g.lower_edge(b), g.upper_edge(b), g.t_buckets[t],
                                       defaults.market, defaults.model)
                              .mean;
      outside += std::abs(c.mean() - want) > 5 * c.std_err_mean();
    }
  CHECK(cells == 100);
  CHECK(outside == 0);
}

TEST_CASE("bin-center evaluation is biased only where the bin is wide relative to curvature") {
  // Cell averages differ from bin-center values by at most the Jensen factor
  // of a power law with exponent 1 over a 0.4-decade bin.
  const SimConfig d;
  const BucketGrid g = BucketGrid::log_spaced(1e-6, 1e2, 20, d.t_buckets);
  const double half = 0.5 * std::log(g.upper_edge(0) / g.lower_edge(0));
  const double bound = std::sinh(half) / half - 1.0;
  for (std::size_t t = 0; t < g.n_t(); ++t)
    for (std::size_t b = 0; b < g.n_bins(); ++b) {
      const double avg =
          predict_cell(g.lower_edge(b), g.upper_edge(b), g.t_buckets[t], d.market, d.model).mean;
      const double center = expected_impact({1, g.center(b) * d.market.daily_volume, g.t_buckets[t]},
                                            d.market, d.model);
      CHECK(avg >= center);
      CHECK(avg / center - 1.0 <= bound * (1 + 1e-9));
    }
}

TEST_CASE("collapse: equal means give zero spread") {
  BucketMatrix m(BucketGrid{{10.0, 100.0}, {0.25, 0.5, 1.0}});
  for (std::size_t t = 0; t < 3; ++t) m.at(0, t) = BucketStats::from_moments(100, 1e-3, 1e-6);
  const CollapseResult r = collapse_diagnostic(m, 1.0);
  REQUIRE(r.bins.size() == 1);
  CHECK(r.bins[0].spread == 0.0);
  CHECK(r.bins[0].n_buckets == 3);
  CHECK(r.status == "ok");
}

TEST_CASE("collapse: no qualifying bins gives an empty result with a status") {
  BucketMatrix m(BucketGrid{{10.0, 100.0}, {0.25, 0.5, 1.0}});
  const CollapseResult r = collapse_diagnostic(m, 1.0);
  CHECK(r.empty());
  CHECK(r.status != "ok");
  CHECK_FALSE(r.status.empty());
  CHECK_THROWS_AS(collapse_diagnostic(m, 0.0), DomainError);
}

TEST_CASE("collapse on a default run separates the two regimes") {
  const BucketMatrix& m = fixtures::cached_default_matrix();
  const double phi0 = SimConfig{}.model.phi0;
  const CollapseResult plateau = collapse_diagnostic(m, 1e3 * phi0, PhiSide::AtLeast);
  REQUIRE_FALSE(plateau.empty());
  CHECK(plateau.max_spread() < 0.05);
  const CollapseResult linear = collapse_diagnostic(m, 1e-2 * phi0, PhiSide::AtMost);
  REQUIRE_FALSE(linear.empty());
  CHECK(linear.min_spread() > 0.05);
}

TEST_CASE("plateau line through exact points") {
  std::vector<PlateauPoint> pts;
  for (double t : {0.25, 0.5, 1.0}) pts.push_back({t, 1000, 4e-4 * t, 1e-6});
  const PlateauFit f = fit_plateau_line(pts);
  CHECK(f.slope == doctest::Approx(4e-4).epsilon(1e-14));
  CHECK(std::abs(f.intercept) < 1e-18);
  CHECK(f.r_squared == doctest::Approx(1.0));
  CHECK_FALSE(f.degenerate);

  const PlateauFit two = fit_plateau_line({{0.5, 10, 3e-4, 0}, {1.0, 10, 5e-4, 0}});
  CHECK(two.degenerate);
  CHECK(two.r_squared == 1.0);
  CHECK(two.slope == doctest::Approx(4e-4));
  CHECK(two.intercept == doctest::Approx(1e-4));

  CHECK_THROWS_AS(fit_plateau_line({{0.5, 10, 3e-4, 0}}), DataError);
  CHECK_THROWS_AS(fit_plateau_line({{0.5, 10, 3e-4, 0}, {0.5, 10, 4e-4, 0}}), DataError);
  CHECK_THROWS_AS(variance_plateau_slope(BucketMatrix(small_grid()), 1e-2), DataError);
}

TEST_CASE("plateau slope on a default run") {
  const PlateauFit f = variance_plateau_slope(fixtures::cached_default_matrix(), 1e-4);
  const double s2 = 4e-4;
  CHECK(std::abs(f.slope / s2 - 1.0) < 0.02);
  CHECK(std::abs(f.intercept / s2) < 0.02);
  CHECK(f.points.size() == 5);
}

TEST_CASE("errors shrink with the square root of the sample size") {
  const BucketMatrix small = fixtures::default_matrix(3, 10000);
  const BucketMatrix& large = fixtures::cached_default_matrix();
  const BucketGrid& g = large.grid();
  const SimConfig d;
  double ss_small = 0.0, ss_large = 0.0;
  int cells = 0;
  for (std::size_t t = 0; t < g.n_t(); ++t)
    for (std::size_t b = 0; b < g.n_bins(); ++b) {
      if (small.at(b, t).count() < 20) continue;
      const double truth =
          predict_cell(g.lower_edge(b), g.upper_edge(b), g.t_buckets[t], d.market, d.model).mean;
      ss_small += std::pow(small.at(b, t).mean() - truth, 2);
      ss_large += std::pow(large.at(b, t).mean() - truth, 2);
      ++cells;
    }
  CHECK(cells >= 90);
  const double ratio = std::sqrt(ss_small / ss_large);
  INFO("rms error ratio " << ratio);
  CHECK(ratio > 6.0);
  CHECK(ratio < 16.0);
}

TEST_CASE("curves list populated cells by bucket then Q/V") {
  const BucketMatrix& m = fixtures::cached_default_matrix();
  const auto rows = curves_from_stats(m, 50);
  CHECK(rows.size() == 100);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const bool ordered = rows[i - 1].t_bucket < rows[i].t_bucket ||
                         (rows[i - 1].t_bucket == rows[i].t_bucket &&
                          rows[i - 1].q_over_v_center < rows[i].q_over_v_center);
    CHECK(ordered);
  }
}
