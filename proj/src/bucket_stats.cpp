#include "impactlab/bucket_stats.hpp"

#include <cmath>
#include <limits>

namespace impactlab {

BucketStats BucketStats::from_moments(std::uint64_t n, double mean, double m2, double m3,
                                      double m4) {
  BucketStats s;
  s.n_ = n;
  s.mean_ = n ? mean : 0.0;
  s.m2_ = n ? m2 : 0.0;
  s.m3_ = n ? m3 : 0.0;
  s.m4_ = n ? m4 : 0.0;
  return s;
}

void BucketStats::add(double x) {
  const double n1 = static_cast<double>(n_);
  ++n_;
  const double n = static_cast<double>(n_);
  const double delta = x - mean_;
  const double delta_n = delta / n;
  const double delta_n2 = delta_n * delta_n;
  const double term1 = delta * delta_n * n1;
  mean_ += delta_n;
  m4_ += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * m2_ - 4.0 * delta_n * m3_;
  m3_ += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * m2_;
  m2_ += term1;
}

void BucketStats::merge(const BucketStats& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(other.n_);
  const double n = na + nb;
  const double delta = other.mean_ - mean_;
  const double delta2 = delta * delta;

  const double m2 = m2_ + other.m2_ + delta2 * na * nb / n;
  const double m3 = m3_ + other.m3_ + delta2 * delta * na * nb * (na - nb) / (n * n) +
                    3.0 * delta * (na * other.m2_ - nb * m2_) / n;
  const double m4 = m4_ + other.m4_ +
                    delta2 * delta2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n) +
                    6.0 * delta2 * (na * na * other.m2_ + nb * nb * m2_) / (n * n) +
                    4.0 * delta * (na * other.m3_ - nb * m3_) / n;

  mean_ += delta * nb / n;
  m2_ = m2;
  m3_ = m3;
  m4_ = m4;
  n_ += other.n_;
}

double BucketStats::variance() const noexcept {
  if (n_ < 2) return std::numeric_limits<double>::quiet_NaN();
  return m2_ / static_cast<double>(n_ - 1);
}

double BucketStats::std_err_mean() const noexcept {
  if (n_ < 2) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(variance() / static_cast<double>(n_));
}

double BucketStats::std_err_variance() const noexcept {
  if (n_ < 2) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(n_);
  const double var = variance();
  const double gaussian = var * std::sqrt(2.0 / (n - 1.0));
  if (n_ < 4) return gaussian;
  const double mu4 = m4_ / n;
  const double v = (mu4 - var * var * (n - 3.0) / (n - 1.0)) / n;
  return v > 0.0 ? std::sqrt(v) : gaussian;
}

}  // namespace impactlab
