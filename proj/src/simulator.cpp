#include "impactlab/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "impactlab/errors.hpp"
#include "impactlab/philox.hpp"
#include "parallel.hpp"

namespace impactlab {

namespace {

constexpr std::size_t kBlockSize = 1 << 14;

void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("simulation config: " + what);
}

}  // namespace

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Normal: return "normal";
    case NoiseKind::Uniform: return "uniform";
  }
  return "normal";
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "normal") return NoiseKind::Normal;
  if (name == "uniform") return NoiseKind::Uniform;
  throw ConfigError("unknown noise kind '" + std::string(name) + "' (expected normal|uniform)");
}

void SimConfig::validate() const {
  check(n_orders >= 1, "n_orders must be >= 1");
  try {
    market.validate();
    model.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("simulation config: ") + e.what());
  }
  check(std::isfinite(q_over_v_lo) && std::isfinite(q_over_v_hi) && q_over_v_lo > 0.0 &&
            q_over_v_lo < q_over_v_hi,
        "q_over_v range must satisfy 0 < lo < hi");
  check(!t_buckets.empty(), "t_buckets must be nonempty");
  check(t_weights.size() == t_buckets.size(), "t_weights must have one entry per t_bucket");
  for (double t : t_buckets) check(std::isfinite(t) && t > 0.0, "every duration must be > 0");
  double total = 0.0;
  for (double w : t_weights) {
    check(std::isfinite(w) && w >= 0.0, "weights must be finite and >= 0");
    total += w;
  }
  check(total > 0.0, "weights must not all be zero");
}

RecordDraws draw_record(const SimConfig& config, std::uint64_t order_id) {
  const auto key = Philox4x32::key_from_seed(config.seed);
  const auto lo = static_cast<std::uint32_t>(order_id);
  const auto hi = static_cast<std::uint32_t>(order_id >> 32);
  const auto sizes = Philox4x32::generate({lo, hi, 0, 0}, key);
  const auto noise = Philox4x32::generate({lo, hi, 1, 0}, key);
  const auto flags = Philox4x32::generate({lo, hi, 2, 0}, key);

  RecordDraws d;
  d.sign = (flags[0] & 1u) ? 1 : -1;

  const double u_q = unit_open_closed(join64(sizes[0], sizes[1]));
  const double log_lo = std::log(config.q_over_v_lo);
  const double log_hi = std::log(config.q_over_v_hi);
  d.q_over_v = std::clamp(std::exp(log_lo + u_q * (log_hi - log_lo)), config.q_over_v_lo,
                          config.q_over_v_hi);

  const double u_t = unit_open_closed(join64(sizes[2], sizes[3]));
  const double total = std::accumulate(config.t_weights.begin(), config.t_weights.end(), 0.0);
  const double target = u_t * total;
  double cumulative = 0.0;
  d.t_index = config.t_buckets.size() - 1;
  for (std::size_t i = 0; i < config.t_weights.size(); ++i) {
    if (config.t_weights[i] <= 0.0) continue;
    cumulative += config.t_weights[i];
    if (target <= cumulative) {
      d.t_index = i;
      break;
    }
  }
  // Guard against rounding in the cumulative sum leaving a zero-weight tail.
  while (config.t_weights[d.t_index] <= 0.0 && d.t_index > 0) --d.t_index;

  const double u1 = unit_open_closed(join64(noise[0], noise[1]));
  const double u2 = unit_open_closed(join64(noise[2], noise[3]));
  switch (config.noise) {
    case NoiseKind::Normal: {
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double theta = 2.0 * std::numbers::pi * u2;
      d.eta = r * std::cos(theta);
      d.xi = r * std::sin(theta);
      break;
    }
    case NoiseKind::Uniform:
      d.eta = std::numbers::sqrt3 * (2.0 * u1 - 1.0);
      d.xi = std::numbers::sqrt3 * (2.0 * u2 - 1.0);
      break;
  }
  return d;
}

double sample_price_change(const OrderSpec& order, const MarketParams& market,
                           const ImpactModel& model, double eta, double xi) {
  if (!std::isfinite(eta) || !std::isfinite(xi)) throw DomainError("eta and xi must be finite");
  const double impact = expected_impact(order, market, model);
  return order.sign * impact * (1.0 + model.a_fluct * eta) +
         market.sigma * std::sqrt(order.duration) * xi;
}

MetaorderRecord make_record(const SimConfig& config, std::uint64_t order_id) {
  const RecordDraws d = draw_record(config, order_id);
  MetaorderRecord r;
  r.order_id = order_id;
  r.sign = d.sign;
  r.quantity = d.q_over_v * config.market.daily_volume;
  r.duration = config.t_buckets[d.t_index];
  r.sigma = config.market.sigma;
  r.daily_volume = config.market.daily_volume;
  r.start_logprice = 0.0;
  r.end_logprice = sample_price_change(r.order(), config.market, config.model, d.eta, d.xi);
  return r;
}

void simulate_range(const SimConfig& config, std::uint64_t first_id,
                    std::span<MetaorderRecord> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = make_record(config, first_id + i);
}

std::vector<MetaorderRecord> simulate_panel(const SimConfig& config, unsigned threads) {
  config.validate();
  std::vector<MetaorderRecord> records(config.n_orders);
  const std::size_t n_blocks = (records.size() + kBlockSize - 1) / kBlockSize;
  detail::parallel_for_blocks(n_blocks, threads, [&](std::size_t b) {
    const std::size_t begin = b * kBlockSize;
    const std::size_t end = std::min(records.size(), begin + kBlockSize);
    simulate_range(config, begin, std::span(records).subspan(begin, end - begin));
  });
  return records;
}

void simulate_chunks(const SimConfig& config, std::size_t chunk_size, unsigned threads,
                     const std::function<void(std::span<const MetaorderRecord>)>& sink) {
  config.validate();
  if (chunk_size == 0) throw ConfigError("chunk_size must be > 0");
  std::vector<MetaorderRecord> chunk;
  for (std::uint64_t first = 0; first < config.n_orders; first += chunk_size) {
    const std::size_t count =
        static_cast<std::size_t>(std::min<std::uint64_t>(chunk_size, config.n_orders - first));
    chunk.resize(count);
    const std::size_t n_blocks = (count + kBlockSize - 1) / kBlockSize;
    detail::parallel_for_blocks(n_blocks, threads, [&](std::size_t b) {
      const std::size_t begin = b * kBlockSize;
      const std::size_t end = std::min(count, begin + kBlockSize);
      simulate_range(config, first + begin, std::span(chunk).subspan(begin, end - begin));
    });
    sink(chunk);
  }
}

}  // namespace impactlab
