#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "impactlab/dataio.hpp"
#include "impactlab/errors.hpp"
#include "impactlab/estimator.hpp"
#include "impactlab/model.hpp"

namespace impactlab {

// One conditioning cell as seen by the fitter: the Q/V interval it spans,
// its duration bucket, and the sample moments of sign * price change.
struct CellObservation {
  double q_over_v_lo = 0.0;
  double q_over_v_hi = 0.0;
  double t_bucket = 0.0;
  std::uint64_t n_obs = 0;
  double mean = 0.0;
  double std_err_mean = 0.0;
  double variance = 0.0;
  double std_err_variance = 0.0;

  double q_over_v_center() const;
};

std::vector<CellObservation> cells_from_stats(const BucketMatrix& stats,
                                              std::uint64_t n_min = kDefaultMinCount);
std::vector<CellObservation> cells_from_curves(std::span<const CurveRow> rows,
                                               std::uint64_t n_min = kDefaultMinCount);

// Model moments of a cell, averaging over Q/V log-uniformly within the bin:
// mean = <I>, variance = sigma^2 T + (1 + a^2) <I^2> - <I>^2.
struct CellPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

CellPrediction predict_cell(double q_over_v_lo, double q_over_v_hi, double t_bucket,
                            const MarketParams& market, const ImpactModel& model);

enum class FitMode {
  Joint,         // (Y, phi0, a) against both panels
  MeanOnly,      // (Y, phi0) against the mean panel; a held fixed
  VarianceOnly,  // a against the variance panel; Y and phi0 held fixed
};

std::string to_string(FitMode mode);
FitMode parse_fit_mode(std::string_view name);

struct FitOptions {
  FitMode mode = FitMode::Joint;
  std::uint64_t n_min = kDefaultMinCount;
  // Per start, counting objective evaluations.
  int max_evaluations = 20000;
  // Values of parameters not free in the chosen mode.
  ImpactModel fixed;
  // Best-of-restarts over these starting points.
  std::vector<ImpactModel> starts = default_starts();

  static std::vector<ImpactModel> default_starts();
};

struct StartOutcome {
  ImpactModel start;
  ImpactModel end;
  double objective = 0.0;
  int evaluations = 0;
  bool converged = false;
};

struct FitResult {
  FitMode mode = FitMode::Joint;
  ImpactModel model;
  // Standard errors of (Y, phi0, a) and of their logarithms; NaN for fixed
  // parameters, +inf when the curvature is not positive definite.
  std::array<double, 3> std_err{};
  std::array<double, 3> std_err_log{};
  // Profile-likelihood interval for phi0 (chi^2 within 1 of the minimum with
  // the other free parameters re-minimized); an end sitting on the parameter
  // box means the profile never rose that far. NaN in variance-only mode.
  std::array<double, 2> phi0_interval{};
  // The phi0 interval spans more than a decade or is open on either side.
  bool phi0_weakly_identified = false;
  double objective = 0.0;
  double reduced_chi2 = 0.0;
  std::size_t n_cells = 0;
  std::size_t n_residuals = 0;
  std::size_t n_free = 0;
  int evaluations = 0;
  int iterations = 0;
  std::vector<StartOutcome> starts;
};

// Optimizer ran out of budget on every start; carries the best point found.
class ConvergenceError : public NumericError {
 public:
  ConvergenceError(const std::string& what, FitResult best)
      : NumericError(what), best_(std::move(best)) {}
  const FitResult& best_so_far() const noexcept { return best_; }

 private:
  FitResult best_;
};

/// Weighted least squares (chi^2 with inverse squared standard errors) of
/// the cell moments against the cell-averaged model, minimized by
/// Nelder-Mead in log-parameter space. Requires at least 10 cells with
/// n_min observations spanning at least one decade of Q/V.
FitResult fit_cells(std::span<const CellObservation> cells, const MarketParams& market,
                    const FitOptions& options = {});

FitResult fit_model(const BucketMatrix& stats, const MarketParams& market,
                    const FitOptions& options = {});

/// The fit objective at an arbitrary model (for diagnostics and tests).
double fit_objective(std::span<const CellObservation> cells, const MarketParams& market,
                     const ImpactModel& model, FitMode mode = FitMode::Joint);


}  // namespace impactlab
