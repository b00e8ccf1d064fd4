#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "impactlab/bucket_stats.hpp"
#include "impactlab/dataio.hpp"
#include "impactlab/simulator.hpp"

namespace impactlab {

inline constexpr std::size_t kDefaultBins = 20;
inline constexpr double kDefaultTTolerance = 1e-6;
inline constexpr std::uint64_t kDefaultMinCount = 50;

// Conditioning grid: log-spaced Q/V bins (left-closed, right-open, top edge
// closed) and duration buckets matched within a relative tolerance.
struct BucketGrid {
  std::vector<double> q_over_v_edges;
  std::vector<double> t_buckets;
  double t_tolerance = kDefaultTTolerance;

  static BucketGrid log_spaced(double q_lo, double q_hi, std::size_t n_bins,
                               std::vector<double> t_buckets);

  void validate() const;

  std::size_t n_bins() const { return q_over_v_edges.size() - 1; }
  std::size_t n_t() const { return t_buckets.size(); }
  double lower_edge(std::size_t bin) const { return q_over_v_edges[bin]; }
  double upper_edge(std::size_t bin) const { return q_over_v_edges[bin + 1]; }
  /// Geometric center.
  double center(std::size_t bin) const;

  std::optional<std::size_t> bin_of(double q_over_v) const;
  std::optional<std::size_t> bucket_of(double duration) const;

  bool operator==(const BucketGrid&) const = default;
};

struct AccumulateOptions {
  // Divide each price change by its row's sigma (multi-asset panels).
  bool rescale_by_sigma = false;
};

// One BucketStats per (Q/V bin, T bucket) plus tallies of records that fell
// outside the grid.
class BucketMatrix {
 public:
  BucketMatrix() = default;
  explicit BucketMatrix(BucketGrid grid);

  const BucketGrid& grid() const { return grid_; }
  BucketStats& at(std::size_t bin, std::size_t t) { return cells_[t * grid_.n_bins() + bin]; }
  const BucketStats& at(std::size_t bin, std::size_t t) const {
    return cells_[t * grid_.n_bins() + bin];
  }

  void add(const MetaorderRecord& record, const AccumulateOptions& options = {});
  void merge(const BucketMatrix& other);

  std::uint64_t out_of_range_q() const { return out_of_range_q_; }
  std::uint64_t out_of_range_t() const { return out_of_range_t_; }
  std::uint64_t out_of_range() const { return out_of_range_q_ + out_of_range_t_; }
  std::uint64_t total_in_grid() const;

 private:
  BucketGrid grid_;
  std::vector<BucketStats> cells_;
  std::uint64_t out_of_range_q_ = 0;
  std::uint64_t out_of_range_t_ = 0;
};

/// Single pass over `records`. Records are split into fixed-size blocks that
/// are merged in block order, so the result does not depend on `threads`.
BucketMatrix accumulate(const BucketGrid& grid, std::span<const MetaorderRecord> records,
                        const AccumulateOptions& options = {}, unsigned threads = 1);

/// Cellwise merge; throws ConfigError when the grids differ.
BucketMatrix merge(const BucketMatrix& a, const BucketMatrix& b);

enum class PhiSide { AtLeast, AtMost };

struct CollapseBin {
  std::size_t bin = 0;
  double q_over_v_center = 0.0;
  std::size_t n_buckets = 0;
  double pooled_mean = 0.0;
  double spread = 0.0;  // (max - min) / |pooled mean| across T buckets
};

struct CollapseResult {
  double phi_threshold = 0.0;
  PhiSide side = PhiSide::AtLeast;
  std::vector<CollapseBin> bins;
  std::string status;  // "ok" or the reason no bin qualified

  bool empty() const { return bins.empty(); }
  double max_spread() const;
  double min_spread() const;
};

/// For every Q/V bin where the whole bin lies on `side` of phi_threshold in
/// each T bucket holding at least n_min observations (and at least two such
/// buckets exist), the relative spread of mean impact across those buckets.
CollapseResult collapse_diagnostic(const BucketMatrix& stats, double phi_threshold,
                                   PhiSide side = PhiSide::AtLeast,
                                   std::uint64_t n_min = kDefaultMinCount);

struct PlateauPoint {
  double t_bucket = 0.0;
  std::uint64_t n_obs = 0;
  double variance = 0.0;
  double std_err = 0.0;
};

struct PlateauFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  bool degenerate = false;  // exactly two points
  std::vector<PlateauPoint> points;
};

/// Pools the cells lying entirely below q_over_v_max in each T bucket and
/// fits variance = slope * T + intercept by ordinary least squares. Throws
/// DataError when fewer than two buckets have n_min pooled observations.
PlateauFit variance_plateau_slope(const BucketMatrix& stats, double q_over_v_max,
                                  std::uint64_t n_min = kDefaultMinCount);

/// Least-squares line through explicit points (exposed for testing and for
/// curve files).
PlateauFit fit_plateau_line(std::vector<PlateauPoint> points);

/// Cells with at least min_count observations, ordered by T bucket then Q/V.
std::vector<CurveRow> curves_from_stats(const BucketMatrix& stats, std::uint64_t min_count = 2);

}  // namespace impactlab
