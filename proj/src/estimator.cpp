#include "impactlab/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "impactlab/errors.hpp"
#include "parallel.hpp"

namespace impactlab {

namespace {

constexpr std::size_t kAccumulateBlock = 1 << 16;
constexpr double kEdgeSlack = 1e-12;

void grid_check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("bucket grid: " + what);
}

}  // namespace

// ---- grid ----------------------------------------------------------------

BucketGrid BucketGrid::log_spaced(double q_lo, double q_hi, std::size_t n_bins,
                                  std::vector<double> t_buckets) {
  grid_check(n_bins >= 1, "need at least one Q/V bin");
  grid_check(std::isfinite(q_lo) && std::isfinite(q_hi) && q_lo > 0.0 && q_lo < q_hi,
             "Q/V range must satisfy 0 < lo < hi");
  BucketGrid g;
  g.q_over_v_edges.resize(n_bins + 1);
  const double log_lo = std::log(q_lo);
  const double step = (std::log(q_hi) - log_lo) / static_cast<double>(n_bins);
  for (std::size_t k = 0; k <= n_bins; ++k)
    g.q_over_v_edges[k] = std::exp(log_lo + step * static_cast<double>(k));
  g.q_over_v_edges.front() = q_lo;
  g.q_over_v_edges.back() = q_hi;
  std::sort(t_buckets.begin(), t_buckets.end());
  g.t_buckets = std::move(t_buckets);
  g.validate();
  return g;
}

void BucketGrid::validate() const {
  grid_check(q_over_v_edges.size() >= 2, "need at least 2 Q/V edges");
  for (std::size_t k = 0; k < q_over_v_edges.size(); ++k) {
    grid_check(std::isfinite(q_over_v_edges[k]) && q_over_v_edges[k] > 0.0,
               "Q/V edges must be finite and positive");
    if (k > 0)
      grid_check(q_over_v_edges[k] > q_over_v_edges[k - 1], "Q/V edges must strictly increase");
  }
  grid_check(!t_buckets.empty(), "t_buckets must be nonempty");
  for (std::size_t k = 0; k < t_buckets.size(); ++k) {
    grid_check(std::isfinite(t_buckets[k]) && t_buckets[k] > 0.0, "t_buckets must be positive");
    if (k > 0) grid_check(t_buckets[k] > t_buckets[k - 1], "t_buckets must strictly increase");
  }
  grid_check(std::isfinite(t_tolerance) && t_tolerance >= 0.0, "t_tolerance must be >= 0");
}

double BucketGrid::center(std::size_t bin) const {
  return std::sqrt(lower_edge(bin) * upper_edge(bin));
}

std::optional<std::size_t> BucketGrid::bin_of(double q) const {
  const double lo = q_over_v_edges.front();
  const double hi = q_over_v_edges.back();
  if (!(q >= lo * (1.0 - kEdgeSlack) && q <= hi * (1.0 + kEdgeSlack))) return std::nullopt;
  if (q >= hi) return n_bins() - 1;
  const auto it = std::upper_bound(q_over_v_edges.begin(), q_over_v_edges.end(), q);
  if (it == q_over_v_edges.begin()) return 0;
  return static_cast<std::size_t>(it - q_over_v_edges.begin()) - 1;
}

std::optional<std::size_t> BucketGrid::bucket_of(double duration) const {
  std::optional<std::size_t> best;
  double best_rel = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < t_buckets.size(); ++k) {
    const double rel = std::abs(duration - t_buckets[k]) / t_buckets[k];
    if (rel <= t_tolerance && rel < best_rel) {
      best = k;
      best_rel = rel;
    }
  }
  return best;
}

// ---- matrix --------------------------------------------------------------

BucketMatrix::BucketMatrix(BucketGrid grid) : grid_(std::move(grid)) {
  grid_.validate();
  cells_.resize(grid_.n_bins() * grid_.n_t());
}

void BucketMatrix::add(const MetaorderRecord& record, const AccumulateOptions& options) {
  const auto t = grid_.bucket_of(record.duration);
  if (!t) {
    ++out_of_range_t_;
    return;
  }
  const auto bin = grid_.bin_of(record.q_over_v());
  if (!bin) {
    ++out_of_range_q_;
    return;
  }
  double value = record.signed_price_change();
  if (options.rescale_by_sigma) value /= record.sigma;
  at(*bin, *t).add(value);
}

void BucketMatrix::merge(const BucketMatrix& other) {
  if (!(grid_ == other.grid_)) throw ConfigError("merge: bucket grids differ");
  for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i].merge(other.cells_[i]);
  out_of_range_q_ += other.out_of_range_q_;
  out_of_range_t_ += other.out_of_range_t_;
}

std::uint64_t BucketMatrix::total_in_grid() const {
  std::uint64_t n = 0;
  for (const auto& c : cells_) n += c.count();
  return n;
}

BucketMatrix accumulate(const BucketGrid& grid, std::span<const MetaorderRecord> records,
                        const AccumulateOptions& options, unsigned threads) {
  const std::size_t n_blocks = (records.size() + kAccumulateBlock - 1) / kAccumulateBlock;
  std::vector<BucketMatrix> partial(n_blocks, BucketMatrix(grid));
  detail::parallel_for_blocks(n_blocks, threads, [&](std::size_t b) {
    const std::size_t begin = b * kAccumulateBlock;
    const std::size_t end = std::min(records.size(), begin + kAccumulateBlock);
    for (std::size_t i = begin; i < end; ++i) partial[b].add(records[i], options);
  });
  BucketMatrix total(grid);
  for (const auto& p : partial) total.merge(p);
  return total;
}

BucketMatrix merge(const BucketMatrix& a, const BucketMatrix& b) {
  BucketMatrix out = a;
  out.merge(b);
  return out;
}

// ---- diagnostics -----------------------------------------------------------

double CollapseResult::max_spread() const {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& b : bins) m = std::max(m, b.spread);
  return m;
}

double CollapseResult::min_spread() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& b : bins) m = std::min(m, b.spread);
  return m;
}

CollapseResult collapse_diagnostic(const BucketMatrix& stats, double phi_threshold,
                                   PhiSide side, std::uint64_t n_min) {
  if (!(std::isfinite(phi_threshold) && phi_threshold > 0.0))
    throw DomainError("phi_threshold must be finite and > 0");
  const BucketGrid& grid = stats.grid();
  CollapseResult result;
  result.phi_threshold = phi_threshold;
  result.side = side;
  for (std::size_t bin = 0; bin < grid.n_bins(); ++bin) {
    std::vector<const BucketStats*> included;
    bool qualifies = true;
    for (std::size_t t = 0; t < grid.n_t(); ++t) {
      const BucketStats& cell = stats.at(bin, t);
      if (cell.count() < n_min || cell.count() < 2) continue;
      const double duration = grid.t_buckets[t];
      const bool ok = side == PhiSide::AtLeast
                          ? grid.lower_edge(bin) / duration >= phi_threshold
                          : grid.upper_edge(bin) / duration <= phi_threshold;
      if (!ok) {
        qualifies = false;
        break;
      }
      included.push_back(&cell);
    }
    if (!qualifies || included.size() < 2) continue;

    BucketStats pooled;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const BucketStats* c : included) {
      pooled.merge(*c);
      lo = std::min(lo, c->mean());
      hi = std::max(hi, c->mean());
    }
    CollapseBin out;
    out.bin = bin;
    out.q_over_v_center = grid.center(bin);
    out.n_buckets = included.size();
    out.pooled_mean = pooled.mean();
    out.spread = pooled.mean() != 0.0 ? (hi - lo) / std::abs(pooled.mean())
                                      : (hi > lo ? std::numeric_limits<double>::infinity() : 0.0);
    result.bins.push_back(out);
  }
  result.status = result.bins.empty()
                      ? "no Q/V bin has at least two populated T buckets on the requested side "
                        "of the phi threshold"
                      : "ok";
  return result;
}

PlateauFit fit_plateau_line(std::vector<PlateauPoint> points) {
  if (points.size() < 2)
    throw DataError("plateau fit: need at least two T buckets with populated small-Q cells");
  const double n = static_cast<double>(points.size());
  double sx = 0, sy = 0;
  for (const auto& p : points) {
    sx += p.t_bucket;
    sy += p.variance;
  }
  const double mx = sx / n;
  const double my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& p : points) {
    const double dx = p.t_bucket - mx;
    const double dy = p.variance - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw DataError("plateau fit: all T buckets coincide");
  PlateauFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (const auto& p : points) {
    const double r = p.variance - (fit.slope * p.t_bucket + fit.intercept);
    ss_res += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  fit.degenerate = points.size() == 2;
  if (fit.degenerate) fit.r_squared = 1.0;
  fit.points = std::move(points);
  return fit;
}

PlateauFit variance_plateau_slope(const BucketMatrix& stats, double q_over_v_max,
                                  std::uint64_t n_min) {
  const BucketGrid& grid = stats.grid();
  std::vector<PlateauPoint> points;
  for (std::size_t t = 0; t < grid.n_t(); ++t) {
    BucketStats pooled;
    for (std::size_t bin = 0; bin < grid.n_bins(); ++bin) {
      if (grid.upper_edge(bin) <= q_over_v_max * (1.0 + 1e-9)) pooled.merge(stats.at(bin, t));
    }
    if (pooled.count() < std::max<std::uint64_t>(n_min, 2)) continue;
    points.push_back({grid.t_buckets[t], pooled.count(), pooled.variance(),
                      pooled.std_err_variance()});
  }
  return fit_plateau_line(std::move(points));
}

std::vector<CurveRow> curves_from_stats(const BucketMatrix& stats, std::uint64_t min_count) {
  const BucketGrid& grid = stats.grid();
  std::vector<CurveRow> rows;
  for (std::size_t t = 0; t < grid.n_t(); ++t) {
    for (std::size_t bin = 0; bin < grid.n_bins(); ++bin) {
      const BucketStats& c = stats.at(bin, t);
      if (c.count() < std::max<std::uint64_t>(min_count, 2)) continue;
      rows.push_back({grid.center(bin), grid.t_buckets[t], c.count(), c.mean(), c.variance(),
                      c.std_err_mean(), grid.lower_edge(bin), grid.upper_edge(bin),
                      c.std_err_variance()});
    }
  }
  return rows;
}

}  // namespace impactlab
