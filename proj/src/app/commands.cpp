#include "impactlab/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "impactlab/dataio.hpp"
#include "impactlab/errors.hpp"

namespace fs = std::filesystem;

namespace impactlab::app {

namespace {

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  return out;
}

void write_json_file(const fs::path& path, const Json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw WriteError("write failed: " + path.string(), 0);
}

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DataError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void stage_resolved_config(OutputTransaction& tx, const RunConfig& config) {
  write_json_file(tx.stage(kResolvedConfigFile), config.to_json());
}

std::vector<CurveRow> read_curves_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open curves file " + path.string());
  return read_curves(in);
}

}  // namespace

// ---- OutputTransaction ---------------------------------------------------

OutputTransaction::OutputTransaction(fs::path dir) : dir_(std::move(dir)) {}

OutputTransaction::~OutputTransaction() {
  if (committed_) return;
  std::error_code ec;
  for (const auto& [tmp, final_path] : staged_) fs::remove(tmp, ec);
  for (auto it = created_dirs_.rbegin(); it != created_dirs_.rend(); ++it) {
    if (fs::is_empty(*it, ec)) fs::remove(*it, ec);
  }
}

fs::path OutputTransaction::stage(const fs::path& relative) {
  const fs::path final_path = dir_ / relative;
  std::vector<fs::path> missing;
  for (fs::path p = final_path.parent_path(); !p.empty() && !fs::exists(p); p = p.parent_path())
    missing.push_back(p);
  for (auto it = missing.rbegin(); it != missing.rend(); ++it) {
    fs::create_directory(*it);
    created_dirs_.push_back(*it);
  }
  fs::path tmp = final_path;
  tmp += ".partial";
  staged_.emplace_back(tmp, final_path);
  return tmp;
}

void OutputTransaction::commit() {
  for (const auto& [tmp, final_path] : staged_) fs::rename(tmp, final_path);
  committed_ = true;
}

// ---- simulate --------------------------------------------------------------

SimulateSummary run_simulate(const RunConfig& config, std::ostream& log) {
  config.validate();
  OutputTransaction tx(config.out_dir);
  const auto start = std::chrono::steady_clock::now();
  {
    auto out = open_output(tx.stage(kFillsFile));
    FillsWriter writer(out);
    simulate_chunks(config.sim, 1 << 18, config.threads,
                    [&](std::span<const MetaorderRecord> chunk) { writer.write(chunk); });
    out.flush();
    if (!out) throw WriteError("fills: flush failed", writer.bytes_written());
  }
  stage_resolved_config(tx, config);
  tx.commit();
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  log << "simulate: " << config.sim.n_orders << " orders in " << std::fixed
      << std::setprecision(3) << seconds << " s (" << std::scientific << std::setprecision(3)
      << static_cast<double>(config.sim.n_orders) / std::max(seconds, 1e-9) << " orders/s)\n"
      << std::defaultfloat;
  return {config.sim.n_orders, seconds};
}

// ---- estimate --------------------------------------------------------------

Json estimate_diagnostics(const BucketMatrix& stats, const RunConfig& config,
                          std::uint64_t n_records) {
  const double phi0 = config.sim.model.phi0;
  const auto n_min = config.estimate.n_min;
  Json warnings = Json::array();

  const auto collapse = collapse_diagnostic(stats, config.estimate.collapse_phi_factor * phi0,
                                            PhiSide::AtLeast, n_min);
  const auto linear = collapse_diagnostic(stats, config.estimate.linear_phi_factor * phi0,
                                          PhiSide::AtMost, n_min);
  if (collapse.empty()) warnings.push_back("collapse: " + collapse.status);
  if (linear.empty()) warnings.push_back("linear regime: " + linear.status);

  Json plateau;
  try {
    plateau = to_json(variance_plateau_slope(stats, config.estimate.plateau_q_over_v_max, n_min));
  } catch (const DataError& e) {
    plateau = Json{{"status", std::string("unavailable: ") + e.what()}};
    warnings.push_back(std::string("plateau: ") + e.what());
  }
  plateau["q_over_v_max"] = config.estimate.plateau_q_over_v_max;

  if (n_records == 0) warnings.push_back("no records in input");
  if (stats.out_of_range() > 0)
    warnings.push_back(std::to_string(stats.out_of_range()) + " record(s) outside the grid");

  return Json{{"status", warnings.empty() ? "ok" : "warning"},
              {"warnings", warnings},
              {"n_records", n_records},
              {"n_in_grid", stats.total_in_grid()},
              {"out_of_range",
               {{"q_over_v", stats.out_of_range_q()},
                {"duration", stats.out_of_range_t()},
                {"total", stats.out_of_range()}}},
              {"rescaled_by_sigma", config.estimate.rescale_by_sigma},
              {"collapse", to_json(collapse)},
              {"linear_regime", to_json(linear)},
              {"plateau", plateau}};
}

Json run_estimate(const RunConfig& config, const fs::path& fills, std::ostream& log) {
  config.validate();
  const BucketGrid grid = config.make_grid();
  const auto records = read_fills_file(fills);
  AccumulateOptions options;
  options.rescale_by_sigma = config.estimate.rescale_by_sigma;
  const BucketMatrix stats = accumulate(grid, records, options, config.threads);
  const Json diagnostics = estimate_diagnostics(stats, config, records.size());

  OutputTransaction tx(config.out_dir);
  {
    auto out = open_output(tx.stage(kCurvesFile));
    write_curves(curves_from_stats(stats), out);
  }
  write_json_file(tx.stage(kDiagnosticsFile), diagnostics);
  stage_resolved_config(tx, config);
  tx.commit();
  log << "estimate: " << records.size() << " records, " << stats.out_of_range()
      << " out of range, status " << diagnostics["status"].get<std::string>() << '\n';
  for (const auto& w : diagnostics["warnings"]) log << "  warning: " << w.get<std::string>() << '\n';
  return diagnostics;
}

// ---- fit ---------------------------------------------------------------------

FitResult run_fit(const RunConfig& config, const fs::path& input, std::ostream& log) {
  config.validate();
  std::vector<CellObservation> cells;
  if (looks_like_fills(input)) {
    const auto records = read_fills_file(input);
    AccumulateOptions options;
    options.rescale_by_sigma = config.estimate.rescale_by_sigma;
    const auto stats = accumulate(config.make_grid(), records, options, config.threads);
    cells = cells_from_stats(stats, config.estimate.n_min);
  } else {
    const auto rows = read_curves_file(input);
    cells = cells_from_curves(rows, config.estimate.n_min);
  }
  const FitResult fit = fit_cells(cells, config.fit_market(), config.fit_options());

  OutputTransaction tx(config.out_dir);
  Json summary = to_json(fit);
  summary["market"] = to_json(config.fit_market());
  summary["input"] = input.filename().string();
  write_json_file(tx.stage(kFitSummaryFile), summary);
  stage_resolved_config(tx, config);
  tx.commit();
  log << "fit: Y=" << fit.model.y_const << " phi0=" << fit.model.phi0
      << " a=" << fit.model.a_fluct << " reduced_chi2=" << fit.reduced_chi2
      << (fit.phi0_weakly_identified ? " (phi0 weakly identified)" : "") << '\n';
  return fit;
}

// ---- cost ----------------------------------------------------------------------

CostRiskReport run_cost(const RunConfig& config, const fs::path& schedule_path,
                        std::ostream& out) {
  const Schedule schedule = read_schedule_file(schedule_path);
  CostOptions options;
  options.duration_argument = config.cost.duration_argument;
  const CostRiskReport report =
      cost_vs_risk_report(schedule, config.sim.market, config.sim.model, options);

  Json j = to_json(report);
  j["duration_argument"] = to_string(options.duration_argument);
  j["schedule"] = to_json(schedule);
  j["market"] = to_json(config.sim.market);
  j["model"] = to_json(config.sim.model);

  OutputTransaction tx(config.out_dir);
  write_json_file(tx.stage(kCostReportFile), j);
  tx.commit();
  out << j.dump(2) << '\n';
  return report;
}

// ---- report --------------------------------------------------------------------

Json run_report(const RunConfig& base, std::ostream& log) {
  const fs::path dir = base.out_dir;
  std::vector<std::string> missing;
  for (const char* name : {kResolvedConfigFile, kCurvesFile, kDiagnosticsFile, kFitSummaryFile})
    if (!fs::exists(dir / name)) missing.push_back(name);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw DataError("report: missing prerequisite artifacts in " + dir.string() + ": " + list);
  }

  RunConfig config = RunConfig::from_json(read_json_file(dir / kResolvedConfigFile), base);
  config.out_dir = base.out_dir;
  config.threads = base.threads;
  const auto rows = read_curves_file(dir / kCurvesFile);
  const Json diagnostics = read_json_file(dir / kDiagnosticsFile);
  const Json fit_summary = read_json_file(dir / kFitSummaryFile);
  const ImpactModel fitted = fitted_model_from_json(fit_summary);
  const ImpactModel reference = config.sim.model;
  const MarketParams market = config.fit_market();
  const double sigma2 = market.sigma * market.sigma;

  OutputTransaction tx(dir);
  std::size_t variance_ok = 0;
  std::size_t variance_cells = 0;
  {
    auto left = open_output(tx.stage(fs::path(kBundleDir) / "left_panel.csv"));
    auto right = open_output(tx.stage(fs::path(kBundleDir) / "right_panel.csv"));
    left << "q_over_v_bin_center,t_bucket_days,n_obs,mean_impact,std_err_mean,model_mean_impact\n";
    right << "q_over_v_bin_center,t_bucket_days,n_obs,var_price_change,std_err_var,model_variance\n";
    for (const auto& r : rows) {
      const CellPrediction p = predict_cell(r.q_over_v_lo, r.q_over_v_hi, r.t_bucket, market, fitted);
      const std::string head =
          format_double(r.q_over_v_center) + ',' + format_double(r.t_bucket) + ',' +
          std::to_string(r.n_obs) + ',';
      left << head << format_double(r.mean_impact) << ',' << format_double(r.std_err_mean) << ','
           << format_double(p.mean) << '\n';
      right << head << format_double(r.var_price_change) << ',' << format_double(r.std_err_var)
            << ',' << format_double(p.variance) << '\n';
      if (r.n_obs >= config.estimate.n_min && r.std_err_var > 0.0) {
        ++variance_cells;
        if (std::abs(r.var_price_change - p.variance) <= 5.0 * r.std_err_var) ++variance_ok;
      }
    }
    if (!left || !right) throw WriteError("report: panel write failed", 0);
  }

  // Inset: pooled small-Q variance per duration bucket.
  const Json& plateau = diagnostics.at("plateau");
  const bool have_line = plateau.value("status", "") == "ok";
  {
    std::map<double, BucketStats> pooled;
    for (const auto& r : rows) {
      if (r.q_over_v_hi > config.estimate.plateau_q_over_v_max * (1.0 + 1e-9)) continue;
      pooled[r.t_bucket].merge(BucketStats::from_moments(
          r.n_obs, r.mean_impact, r.var_price_change * static_cast<double>(r.n_obs - 1)));
    }
    auto inset = open_output(tx.stage(fs::path(kBundleDir) / "inset.csv"));
    inset << "t_bucket_days,n_obs,plateau_variance,std_err,fitted_line\n";
    for (const auto& [t, s] : pooled) {
      const double line = have_line ? plateau.at("slope").get<double>() * t +
                                          plateau.at("intercept").get<double>()
                                    : std::nan("");
      inset << format_double(t) << ',' << s.count() << ',' << format_double(s.variance()) << ','
            << format_double(s.variance() * std::sqrt(2.0 / static_cast<double>(s.count() - 1)))
            << ',' << format_double(line) << '\n';
    }
    if (!inset) throw WriteError("report: inset write failed", 0);
  }
  write_json_file(tx.stage(fs::path(kBundleDir) / "fit_summary.json"), fit_summary);

  Json checks = Json::array();
  auto add_check = [&](const std::string& name, bool pass, Json value, Json threshold,
                       const std::string& detail) {
    checks.push_back(Json{{"name", name},
                          {"pass", pass},
                          {"value", std::move(value)},
                          {"threshold", std::move(threshold)},
                          {"detail", detail}});
  };
  auto spread_of = [&](const char* key, const char* which) -> Json {
    const Json& c = diagnostics.at(key);
    return c.at(which);
  };
  {
    const Json v = spread_of("collapse", "max_spread");
    add_check("collapse_square_root_regime", v.is_number() && v.get<double>() < 0.05, v, 0.05,
              "max relative spread of mean impact across T buckets, phi >= " +
                  format_double(diagnostics.at("collapse").at("phi_threshold").get<double>()));
  }
  {
    const Json v = spread_of("linear_regime", "min_spread");
    add_check("t_dependence_linear_regime", v.is_number() && v.get<double>() > 0.05, v, 0.05,
              "min relative spread across T buckets, phi <= " +
                  format_double(diagnostics.at("linear_regime").at("phi_threshold").get<double>()));
  }
  if (have_line) {
    const double slope_err = std::abs(plateau.at("slope").get<double>() - sigma2) / sigma2;
    const double icpt_err = std::abs(plateau.at("intercept").get<double>()) / sigma2;
    add_check("plateau_slope", slope_err < 0.02, slope_err, 0.02,
              "relative error of plateau slope against sigma^2");
    add_check("plateau_intercept", icpt_err < 0.02, icpt_err, 0.02,
              "plateau intercept relative to sigma^2");
  } else {
    add_check("plateau_slope", false, nullptr, 0.02, plateau.value("status", ""));
    add_check("plateau_intercept", false, nullptr, 0.02, plateau.value("status", ""));
  }
  const double frac =
      variance_cells ? static_cast<double>(variance_ok) / static_cast<double>(variance_cells) : 0.0;
  add_check("variance_formula", variance_cells > 0 && frac >= 0.95, frac, 0.95,
            "fraction of cells whose variance is within 5 standard errors of the fitted model");
  const double rel_y = std::abs(fitted.y_const / reference.y_const - 1.0);
  const double rel_phi0 = std::abs(fitted.phi0 / reference.phi0 - 1.0);
  const double rel_a = reference.a_fluct > 0 ? std::abs(fitted.a_fluct / reference.a_fluct - 1.0)
                                             : std::abs(fitted.a_fluct);
  add_check("recovery_y_const", rel_y < 0.02, rel_y, 0.02, "relative to the configured model");
  add_check("recovery_phi0", rel_phi0 < 0.10, rel_phi0, 0.10, "relative to the configured model");
  add_check("recovery_a_fluct", rel_a < 0.15, rel_a, 0.15, "relative to the configured model");

  bool all_pass = true;
  for (const auto& c : checks) all_pass = all_pass && c.at("pass").get<bool>();
  const Json doc{{"all_pass", all_pass}, {"checks", checks}};
  write_json_file(tx.stage(fs::path(kBundleDir) / "checks.json"), doc);
  tx.commit();

  log << "report: bundle written to " << (dir / kBundleDir).string() << '\n';
  for (const auto& c : checks) {
    log << "  [" << (c.at("pass").get<bool>() ? "PASS" : "FAIL") << "] "
        << c.at("name").get<std::string>() << '\n';
  }
  return doc;
}

}  // namespace impactlab::app
