#include "impactlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "impactlab/errors.hpp"

namespace impactlab {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw DomainError(what);
}

bool positive(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

void MarketParams::validate() const {
  require(positive(sigma), "sigma must be finite and > 0");
  require(positive(daily_volume), "daily_volume must be finite and > 0");
}

void ImpactModel::validate() const {
  require(positive(y_const), "y_const must be finite and > 0");
  require(positive(phi0), "phi0 must be finite and > 0");
  require(std::isfinite(a_fluct) && a_fluct >= 0.0, "a_fluct must be finite and >= 0");
}

void OrderSpec::validate() const {
  require(sign == 1 || sign == -1, "sign must be +1 or -1");
  require(std::isfinite(quantity) && quantity >= 0.0, "quantity must be finite and >= 0");
  require(positive(duration), "duration must be finite and > 0");
}

double participation(const OrderSpec& order, const MarketParams& market) {
  order.validate();
  market.validate();
  const double phi = order.quantity / (market.daily_volume * order.duration);
  require(std::isfinite(phi), "participation is not finite");
  return phi;
}

double scaling_function(double phi, const ImpactModel& model) {
  require(std::isfinite(phi) && phi >= 0.0, "phi must be finite and >= 0");
  model.validate();
  if (phi == 0.0) return 0.0;
  return model.y_const * std::sqrt(phi / (phi + model.phi0));
}

double expected_impact(const OrderSpec& order, const MarketParams& market,
                       const ImpactModel& model) {
  const double phi = participation(order, market);
  return market.sigma * std::sqrt(order.quantity / market.daily_volume) *
         scaling_function(phi, model);
}

double conditional_variance(const OrderSpec& order, const MarketParams& market,
                            const ImpactModel& model) {
  const double phi = participation(order, market);
  const double f = scaling_function(phi, model);
  const double a = model.a_fluct;
  return market.sigma * market.sigma * order.duration * (1.0 + a * a * phi * f * f);
}

double execution_risk(double duration, const MarketParams& market) {
  require(std::isfinite(duration) && duration >= 0.0, "duration must be finite and >= 0");
  market.validate();
  return market.sigma * std::sqrt(duration);
}

double impact_r_squared(double q_over_v, const ImpactModel& model) {
  require(std::isfinite(q_over_v) && q_over_v >= 0.0, "q_over_v must be finite and >= 0");
  model.validate();
  return std::min(model.y_const * model.y_const * q_over_v, kRSquaredCeiling);
}

}  // namespace impactlab
