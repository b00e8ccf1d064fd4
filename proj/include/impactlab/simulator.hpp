#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "impactlab/model.hpp"

namespace impactlab {

// Distribution of the unit-variance draws eta and xi.
enum class NoiseKind { Normal, Uniform };

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view name);

struct SimConfig {
  std::uint64_t n_orders = 1'000'000;
  std::uint64_t seed = 0;
  MarketParams market;
  ImpactModel model;
  // Q/V is drawn log-uniformly on [lo, hi].
  double q_over_v_lo = 1.0e-6;
  double q_over_v_hi = 1.0e2;
  std::vector<double> t_buckets{1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0};
  std::vector<double> t_weights{1, 1, 1, 1, 1};
  NoiseKind noise = NoiseKind::Normal;

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;
};

struct MetaorderRecord {
  std::uint64_t order_id = 0;
  int sign = 1;
  double quantity = 0.0;
  double duration = 1.0;
  double start_logprice = 0.0;
  double end_logprice = 0.0;
  double sigma = 0.0;
  double daily_volume = 0.0;

  double price_change() const { return end_logprice - start_logprice; }
  double signed_price_change() const { return sign * price_change(); }
  double q_over_v() const { return quantity / daily_volume; }
  OrderSpec order() const { return {sign, quantity, duration}; }
  MarketParams market() const { return {sigma, daily_volume}; }

  bool operator==(const MetaorderRecord&) const = default;
};

// The random inputs of one record, all drawn from Philox keyed on
// (seed, order_id).
struct RecordDraws {
  int sign = 1;
  double q_over_v = 0.0;
  std::size_t t_index = 0;
  double eta = 0.0;
  double xi = 0.0;
};

RecordDraws draw_record(const SimConfig& config, std::uint64_t order_id);

/// sign * I(Q,T) * (1 + a eta) + sigma sqrt(T) xi.
double sample_price_change(const OrderSpec& order, const MarketParams& market,
                           const ImpactModel& model, double eta, double xi);

MetaorderRecord make_record(const SimConfig& config, std::uint64_t order_id);

/// Fills `out` with records first_id, first_id + 1, ... Config is assumed valid.
void simulate_range(const SimConfig& config, std::uint64_t first_id,
                    std::span<MetaorderRecord> out);

/// All n_orders records in order_id order. Content does not depend on
/// `threads`.
std::vector<MetaorderRecord> simulate_panel(const SimConfig& config, unsigned threads = 1);

/// Streams records in order_id order, chunk_size at a time; each chunk is
/// generated in parallel.
void simulate_chunks(const SimConfig& config, std::size_t chunk_size, unsigned threads,
                     const std::function<void(std::span<const MetaorderRecord>)>& sink);

}  // namespace impactlab
