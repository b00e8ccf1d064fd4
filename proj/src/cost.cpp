#include "impactlab/cost.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

namespace impactlab {

namespace {

[[noreturn]] void bad_breakpoint(std::size_t index, const std::string& what) {
  throw DataError("schedule breakpoint " + std::to_string(index) + ": " + what);
}

}  // namespace

Schedule Schedule::constant_rate(double total_quantity, double duration) {
  Schedule s;
  s.total_quantity = total_quantity;
  s.duration = duration;
  s.breakpoints = {{0.0, 0.0}, {duration, total_quantity}};
  return s;
}

void Schedule::validate() const {
  if (!(std::isfinite(duration) && duration > 0.0))
    throw DomainError("schedule duration must be finite and > 0");
  if (!(std::isfinite(total_quantity) && total_quantity >= 0.0))
    throw DataError("schedule total_quantity must be finite and >= 0");
  if (breakpoints.size() < 2) throw DataError("schedule needs at least two breakpoints");
  for (std::size_t i = 0; i < breakpoints.size(); ++i) {
    const auto& b = breakpoints[i];
    if (!std::isfinite(b.t) || !std::isfinite(b.quantity)) bad_breakpoint(i, "not finite");
    if (i > 0) {
      if (!(b.t > breakpoints[i - 1].t)) bad_breakpoint(i, "time must strictly increase");
      if (b.quantity < breakpoints[i - 1].quantity)
        bad_breakpoint(i, "executed quantity must not decrease");
    }
  }
  if (breakpoints.front().t != 0.0 || breakpoints.front().quantity != 0.0)
    bad_breakpoint(0, "must be (0, 0)");
  const std::size_t last = breakpoints.size() - 1;
  if (breakpoints.back().t != duration) bad_breakpoint(last, "time must equal duration_days");
  if (breakpoints.back().quantity != total_quantity)
    bad_breakpoint(last, "quantity must equal total_quantity");
}

double Schedule::quantity_at(double t) const {
  if (t <= breakpoints.front().t) return breakpoints.front().quantity;
  for (std::size_t i = 1; i < breakpoints.size(); ++i) {
    const auto& a = breakpoints[i - 1];
    const auto& b = breakpoints[i];
    if (t <= b.t) return a.quantity + (b.quantity - a.quantity) * (t - a.t) / (b.t - a.t);
  }
  return breakpoints.back().quantity;
}

std::string to_string(DurationArgument arg) {
  return arg == DurationArgument::Elapsed ? "elapsed" : "planned";
}

DurationArgument parse_duration_argument(std::string_view name) {
  if (name == "elapsed") return DurationArgument::Elapsed;
  if (name == "planned") return DurationArgument::Planned;
  throw ConfigError("unknown duration argument '" + std::string(name) +
                    "' (expected elapsed|planned)");
}

CostIntegral integrate_cost(const Schedule& schedule, const MarketParams& market,
                            const ImpactModel& model, const CostOptions& options) {
  schedule.validate();
  market.validate();
  model.validate();
  using Quad = boost::math::quadrature::gauss_kronrod<double, 15>;

  const double sigma = market.sigma;
  const double volume = market.daily_volume;
  const bool elapsed = options.duration_argument == DurationArgument::Elapsed;
  // Inner tolerance is tighter than the target so the summed bound meets it.
  const double inner_tol = std::min(options.relative_tolerance * 1e-2, 1e-10);

  CostIntegral total;
  double l1_total = 0.0;
  for (std::size_t k = 1; k < schedule.breakpoints.size(); ++k) {
    const Breakpoint& a = schedule.breakpoints[k - 1];
    const Breakpoint& b = schedule.breakpoints[k];
    const double rate = (b.quantity - a.quantity) / (b.t - a.t);
    if (rate == 0.0) continue;

    auto rate_times_impact = [&](double t) {
      const double q = a.quantity + rate * (t - a.t);
      if (!(q > 0.0) || !(t > 0.0)) return 0.0;
      const double tau = elapsed ? t : schedule.duration;
      const double phi = q / (volume * tau);
      const double f = model.y_const * std::sqrt(phi / (phi + model.phi0));
      return rate * sigma * std::sqrt(q / volume) * f;
    };

    double error = 0.0;
    double l1 = 0.0;
    double value = 0.0;
    if (a.quantity == 0.0) {
      const double u_max = std::sqrt(b.t - a.t);
      value = Quad::integrate(
          [&](double u) { return 2.0 * u * rate_times_impact(a.t + u * u); }, 0.0, u_max,
          options.max_depth, inner_tol, &error, &l1);
    } else {
      value = Quad::integrate(rate_times_impact, a.t, b.t, options.max_depth, inner_tol, &error,
                              &l1);
    }
    total.value += value;
    total.error_bound += error;
    l1_total += l1;
  }
  if (total.error_bound > options.relative_tolerance * l1_total) {
    throw QuadratureError("cost quadrature: error bound " + std::to_string(total.error_bound) +
                              " exceeds target for estimate " + std::to_string(total.value),
                          total);
  }
  return total;
}

double expected_cost(const Schedule& schedule, const MarketParams& market,
                     const ImpactModel& model, const CostOptions& options) {
  return integrate_cost(schedule, market, model, options).value;
}

CostRiskReport cost_vs_risk_report(const Schedule& schedule, const MarketParams& market,
                                   const ImpactModel& model, const CostOptions& options) {
  CostRiskReport r;
  r.expected_cost = expected_cost(schedule, market, model, options);
  r.execution_risk = execution_risk(schedule.duration, market);
  if (schedule.total_quantity > 0.0) {
    r.expected_cost_per_share = r.expected_cost / schedule.total_quantity;
    r.ratio = r.execution_risk > 0.0 ? r.expected_cost_per_share / r.execution_risk : 0.0;
  }
  return r;
}

}  // namespace impactlab
