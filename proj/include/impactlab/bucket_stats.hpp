#pragma once

#include <cstdint>

namespace impactlab {

// Streaming, mergeable count/mean/central moments up to fourth order
// (Welford/Terriberry update, Pebay pairwise merge).
class BucketStats {
 public:
  BucketStats() = default;

  /// Stats of a sample with the given moments (m2..m4 are the summed centered
  /// powers). Used for synthetic cells and round-tripping curve files.
  static BucketStats from_moments(std::uint64_t n, double mean, double m2, double m3 = 0.0,
                                  double m4 = 0.0);

  void add(double x);
  void merge(const BucketStats& other);

  std::uint64_t count() const noexcept { return n_; }
  bool empty() const noexcept { return n_ == 0; }
  double mean() const noexcept { return mean_; }
  double m2() const noexcept { return m2_; }
  double m3() const noexcept { return m3_; }
  double m4() const noexcept { return m4_; }

  /// Unbiased variance; NaN for n < 2.
  double variance() const noexcept;
  /// sqrt(variance / n); NaN for n < 2.
  double std_err_mean() const noexcept;
  /// Standard error of the unbiased variance using the sample fourth moment,
  /// falling back to the Gaussian value when the estimate is not positive.
  double std_err_variance() const noexcept;

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double m3_ = 0.0;
  double m4_ = 0.0;
};

}  // namespace impactlab
