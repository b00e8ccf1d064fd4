#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "impactlab/cost.hpp"
#include "impactlab/estimator.hpp"
#include "impactlab/fit.hpp"
#include "impactlab/json_io.hpp"
#include "impactlab/run_config.hpp"

namespace impactlab::app {

inline constexpr const char* kFillsFile = "fills.csv";
inline constexpr const char* kResolvedConfigFile = "resolved_config.json";
inline constexpr const char* kCurvesFile = "curves.csv";
inline constexpr const char* kDiagnosticsFile = "diagnostics.json";
inline constexpr const char* kFitSummaryFile = "fit_summary.json";
inline constexpr const char* kCostReportFile = "cost_report.json";
inline constexpr const char* kBundleDir = "bundle";

// Stages files next to their final names and renames them on commit.
// Without a commit every staged file, and any directory this object
// created, is removed.
class OutputTransaction {
 public:
  explicit OutputTransaction(std::filesystem::path dir);
  ~OutputTransaction();
  OutputTransaction(const OutputTransaction&) = delete;
  OutputTransaction& operator=(const OutputTransaction&) = delete;

  /// Temporary path to write; `relative` is relative to the output directory.
  std::filesystem::path stage(const std::filesystem::path& relative);
  void commit();

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> created_dirs_;
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged_;
  bool committed_ = false;
};

struct SimulateSummary {
  std::uint64_t rows = 0;
  double seconds = 0.0;
};

SimulateSummary run_simulate(const RunConfig& config, std::ostream& log);

/// Diagnostics JSON for a populated matrix (collapse in both regimes,
/// variance plateau, out-of-range tallies).
Json estimate_diagnostics(const BucketMatrix& stats, const RunConfig& config,
                          std::uint64_t n_records);

Json run_estimate(const RunConfig& config, const std::filesystem::path& fills,
                  std::ostream& log);

FitResult run_fit(const RunConfig& config, const std::filesystem::path& input,
                  std::ostream& log);

CostRiskReport run_cost(const RunConfig& config, const std::filesystem::path& schedule,
                        std::ostream& out);

/// Builds <out>/bundle from the outputs of simulate, estimate and fit.
/// Returns the checks document.
Json run_report(const RunConfig& config, std::ostream& log);

}  // namespace impactlab::app
