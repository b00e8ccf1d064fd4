#include "impactlab/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <optional>
#include <ostream>

#include "impactlab/commands.hpp"
#include "impactlab/dataio.hpp"
#include "impactlab/errors.hpp"

namespace impactlab::app {

namespace {

struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out;

  std::optional<std::uint64_t> n_orders;
  std::optional<double> sigma, daily_volume, y_const, phi0, a_fluct;
  std::optional<double> q_lo, q_hi;
  std::optional<std::string> noise;

  std::optional<std::size_t> bins;
  std::optional<std::uint64_t> n_min;
  bool rescale_by_sigma = false;

  std::optional<std::string> mode;
  std::optional<int> max_evaluations;

  std::optional<std::string> duration_argument;

  std::string fills;
  std::string input;
  std::string schedule;
};

void add_market_model_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--sigma", f.sigma, "Daily volatility (log-price per sqrt(day))");
  cmd->add_option("--daily-volume", f.daily_volume, "Daily volume (shares)");
  cmd->add_option("--y-const", f.y_const, "Plateau amplitude Y");
  cmd->add_option("--phi0", f.phi0, "Crossover participation phi0");
  cmd->add_option("--a-fluct", f.a_fluct, "Impact-fluctuation amplitude a");
}

// Precedence: defaults, the config echoed into the output directory by an
// earlier stage (when `inherit`), --config, flags.
RunConfig resolve(const Flags& f, bool inherit) {
  RunConfig c;
  if (f.out) c.out_dir = *f.out;
  const auto echoed = c.out_dir / kResolvedConfigFile;
  if (inherit && std::filesystem::exists(echoed)) c = RunConfig::from_file(echoed, c);
  if (f.config) c = RunConfig::from_file(*f.config, c);
  if (f.seed) c.sim.seed = *f.seed;
  if (f.n_orders) c.sim.n_orders = *f.n_orders;
  if (f.sigma) c.sim.market.sigma = *f.sigma;
  if (f.daily_volume) c.sim.market.daily_volume = *f.daily_volume;
  if (f.y_const) c.sim.model.y_const = *f.y_const;
  if (f.phi0) c.sim.model.phi0 = *f.phi0;
  if (f.a_fluct) c.sim.model.a_fluct = *f.a_fluct;
  if (f.q_lo) c.sim.q_over_v_lo = *f.q_lo;
  if (f.q_hi) c.sim.q_over_v_hi = *f.q_hi;
  if (f.noise) c.sim.noise = parse_noise_kind(*f.noise);
  if (f.bins) c.grid.n_bins = *f.bins;
  if (f.n_min) c.estimate.n_min = *f.n_min;
  if (f.rescale_by_sigma) c.estimate.rescale_by_sigma = true;
  if (f.mode) c.fit.mode = parse_fit_mode(*f.mode);
  if (f.max_evaluations) c.fit.max_evaluations = *f.max_evaluations;
  if (f.duration_argument) c.cost.duration_argument = parse_duration_argument(*f.duration_argument);
  c.threads = resolve_threads(f.threads);
  try {
    c.sim.market.validate();
    c.sim.model.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

std::filesystem::path default_fit_input(const RunConfig& c) {
  const auto curves = c.out_dir / kCurvesFile;
  if (std::filesystem::exists(curves)) return curves;
  return c.out_dir / kFillsFile;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Square-root impact law: simulate metaorder panels, estimate conditional "
               "impact/variance curves, fit, and evaluate execution cost."};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "Random seed (u64)");
  app.add_option("--threads", f.threads, "Worker threads (default: IMPACTLAB_THREADS or all cores)");
  app.add_option("--out", f.out, "Output directory (default: impactlab_out)");

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic fills CSV");
  simulate->fallthrough();
  simulate->add_option("--n-orders", f.n_orders, "Number of metaorders");
  simulate->add_option("--q-over-v-lo", f.q_lo, "Lower end of the log-uniform Q/V range");
  simulate->add_option("--q-over-v-hi", f.q_hi, "Upper end of the log-uniform Q/V range");
  simulate->add_option("--noise", f.noise, "normal|uniform");
  add_market_model_flags(simulate, f);

  auto* estimate = app.add_subcommand("estimate", "Bucket fills into impact/variance curves");
  estimate->fallthrough();
  estimate->add_option("--fills", f.fills, "Fills CSV (default: <out>/fills.csv)");
  estimate->add_option("--bins", f.bins, "Number of log-spaced Q/V bins");
  estimate->add_option("--n-min", f.n_min, "Minimum cell occupancy for diagnostics");
  estimate->add_flag("--rescale-by-sigma", f.rescale_by_sigma,
                     "Divide each price change by its row's sigma");

  auto* fit = app.add_subcommand("fit", "Fit (Y, phi0, a) to curves or fills");
  fit->fallthrough();
  fit->add_option("--input", f.input, "Curves or fills CSV (default: <out>/curves.csv)");
  fit->add_option("--mode", f.mode, "joint|mean|variance");
  fit->add_option("--n-min", f.n_min, "Minimum cell occupancy");
  fit->add_option("--max-evaluations", f.max_evaluations, "Objective evaluations per start");
  fit->add_option("--bins", f.bins, "Number of Q/V bins when fitting from fills");
  fit->add_flag("--rescale-by-sigma", f.rescale_by_sigma,
                "Divide each price change by its row's sigma (fills input)");
  add_market_model_flags(fit, f);

  auto* cost = app.add_subcommand("cost", "Expected impact cost and execution risk of a schedule");
  cost->fallthrough();
  cost->add_option("--schedule", f.schedule, "Schedule JSON")->required();
  cost->add_option("--duration-argument", f.duration_argument, "elapsed|planned");
  add_market_model_flags(cost, f);

  auto* report = app.add_subcommand("report", "Assemble the reproduction bundle in <out>/bundle");
  report->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const bool inherit = estimate->parsed() || fit->parsed() || report->parsed();
    const RunConfig config = resolve(f, inherit);
    if (simulate->parsed()) {
      run_simulate(config, err);
    } else if (estimate->parsed()) {
      run_estimate(config, f.fills.empty() ? config.out_dir / kFillsFile : std::filesystem::path(f.fills), err);
    } else if (fit->parsed()) {
      run_fit(config, f.input.empty() ? default_fit_input(config) : std::filesystem::path(f.input), err);
    } else if (cost->parsed()) {
      run_cost(config, f.schedule, out);
    } else if (report->parsed()) {
      run_report(config, err);
    }
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << "\n  best so far: "
        << to_json(e.best_so_far()).dump() << '\n';
    return kExitNumeric;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const WriteError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace impactlab::app
