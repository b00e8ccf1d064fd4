#pragma once

// Closed-form quantities of the square-root impact law with a participation
// crossover. Units: durations in trading days, prices in log-price units,
// sigma per sqrt(day), volumes in shares (per day for daily_volume).

namespace impactlab {

struct MarketParams {
  double sigma = 0.02;            // daily volatility
  double daily_volume = 1.0e6;    // shares per day

  void validate() const;
};

struct ImpactModel {
  double y_const = 0.5;   // plateau amplitude Y
  double phi0 = 0.01;     // crossover participation
  double a_fluct = 0.1;   // impact-fluctuation amplitude a

  void validate() const;
};

struct OrderSpec {
  int sign = 1;           // +1 buy, -1 sell
  double quantity = 0.0;  // shares
  double duration = 1.0;  // days

  void validate() const;
};

/// Participation Q / (V T). Throws DomainError when T <= 0.
double participation(const OrderSpec& order, const MarketParams& market);

/// F(phi) = Y sqrt(phi / (phi + phi0)). Behaves as Y sqrt(phi/phi0) for
/// phi << phi0 and tends to Y for phi >> phi0.
double scaling_function(double phi, const ImpactModel& model);

/// I(Q,T) = sigma sqrt(Q/V) F(Q/(V T)).
double expected_impact(const OrderSpec& order, const MarketParams& market,
                       const ImpactModel& model);

/// sigma^2 T (1 + a^2 phi F(phi)^2), the variance of sign * price change.
double conditional_variance(const OrderSpec& order, const MarketParams& market,
                            const ImpactModel& model);

/// sigma sqrt(T).
double execution_risk(double duration, const MarketParams& market);

/// Fraction of daily price variance explained by impact in the plateau:
/// Y^2 Q/V, clamped to 1 - 1e-12.
double impact_r_squared(double q_over_v, const ImpactModel& model);

inline constexpr double kRSquaredCeiling = 1.0 - 1.0e-12;

}  // namespace impactlab
