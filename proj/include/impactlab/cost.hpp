#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "impactlab/errors.hpp"
#include "impactlab/model.hpp"

namespace impactlab {

struct Breakpoint {
  double t = 0.0;         // days since the start of execution
  double quantity = 0.0;  // shares executed by time t

  bool operator==(const Breakpoint&) const = default;
};

// Piecewise-linear execution trajectory Q(t) on [0, T] with Q(0) = 0 and
// Q(T) = total_quantity.
struct Schedule {
  double total_quantity = 0.0;
  double duration = 1.0;
  std::vector<Breakpoint> breakpoints;

  static Schedule constant_rate(double total_quantity, double duration);

  /// Throws DomainError for a non-positive duration and DataError naming the
  /// offending breakpoint for any other violation.
  void validate() const;

  double quantity_at(double t) const;
};

// Which time enters I(Q(t), .) along the path.
enum class DurationArgument {
  Elapsed,  // t, so that phi(t) = Q(t) / (V t)
  Planned,  // the schedule's total duration T
};

std::string to_string(DurationArgument arg);
DurationArgument parse_duration_argument(std::string_view name);

struct CostOptions {
  DurationArgument duration_argument = DurationArgument::Elapsed;
  double relative_tolerance = 1e-8;
  unsigned max_depth = 20;
};

struct CostIntegral {
  double value = 0.0;
  double error_bound = 0.0;
};

// Quadrature did not meet its error target.
class QuadratureError : public NumericError {
 public:
  QuadratureError(const std::string& what, CostIntegral achieved)
      : NumericError(what), achieved_(achieved) {}
  CostIntegral achieved() const noexcept { return achieved_; }

 private:
  CostIntegral achieved_;
};

/// int_0^T dQ(t)/dt I(Q(t), tau) dt by adaptive Gauss-Kronrod on each linear
/// segment. Segments starting from zero inventory are integrated in
/// u = sqrt(t - t_start), which removes the square-root endpoint behavior.
/// Units: log-price times shares.
CostIntegral integrate_cost(const Schedule& schedule, const MarketParams& market,
                            const ImpactModel& model, const CostOptions& options = {});

double expected_cost(const Schedule& schedule, const MarketParams& market,
                     const ImpactModel& model, const CostOptions& options = {});

struct CostRiskReport {
  double expected_cost = 0.0;
  double expected_cost_per_share = 0.0;
  double execution_risk = 0.0;
  double ratio = 0.0;  // per-share cost / execution risk
};

CostRiskReport cost_vs_risk_report(const Schedule& schedule, const MarketParams& market,
                                   const ImpactModel& model, const CostOptions& options = {});

}  // namespace impactlab
