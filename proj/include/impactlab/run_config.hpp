#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "impactlab/cost.hpp"
#include "impactlab/estimator.hpp"
#include "impactlab/fit.hpp"
#include "impactlab/json_io.hpp"
#include "impactlab/simulator.hpp"

namespace impactlab {

// Fully resolved settings for one CLI invocation. Precedence: built-in
// defaults, then the --config file, then command-line flags.
struct RunConfig {
  SimConfig sim;

  struct Grid {
    std::size_t n_bins = kDefaultBins;
    // Defaults to the simulation's Q/V range when unset.
    std::optional<double> q_over_v_lo;
    std::optional<double> q_over_v_hi;
    double t_tolerance = kDefaultTTolerance;
  } grid;

  struct Estimate {
    std::uint64_t n_min = kDefaultMinCount;
    // Thresholds are multiples of the configured phi0.
    double collapse_phi_factor = 1e3;
    double linear_phi_factor = 1e-2;
    double plateau_q_over_v_max = 1e-4;
    bool rescale_by_sigma = false;
  } estimate;

  struct Fit {
    FitMode mode = FitMode::Joint;
    int max_evaluations = 20000;
  } fit;

  struct Cost {
    DurationArgument duration_argument = DurationArgument::Elapsed;
  } cost;

  std::filesystem::path out_dir = "impactlab_out";
  // Execution detail only: never part of the echoed config.
  unsigned threads = 1;

  BucketGrid make_grid() const;
  /// Market used for fitting; sigma is 1 when prices are rescaled by sigma.
  MarketParams fit_market() const;
  FitOptions fit_options() const;

  void validate() const;

  /// Everything that determines outputs (excludes threads and out_dir).
  Json to_json() const;
  /// Applies the keys present in `j` on top of `base`. Unknown keys and wrong
  /// types raise ConfigError.
  static RunConfig from_json(const Json& j, RunConfig base);
  static RunConfig from_json(const Json& j);
  static RunConfig from_file(const std::filesystem::path& path, RunConfig base);
};

/// --threads value, else IMPACTLAB_THREADS, else hardware concurrency.
unsigned resolve_threads(std::optional<unsigned> flag);

}  // namespace impactlab
