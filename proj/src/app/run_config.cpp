#include "impactlab/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <string>
#include <thread>
#include <type_traits>

#include "impactlab/errors.hpp"

namespace impactlab {

namespace {

void allow_keys(const Json& j, const char* section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(std::string("config: '") + section + "' must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key()))
      throw ConfigError(std::string("config: unknown key '") + item.key() + "' in " + section);
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out, const char* section) {
  if (!j.contains(key)) return;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!j.at(key).is_number_unsigned())
      throw ConfigError(std::string("config: ") + section + "." + key +
                        " must be a non-negative integer");
  }
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("config: ") + section + "." + key + " has the wrong type");
  }
}

void read_range(const Json& j, const char* key, double& lo, double& hi, const char* section) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(std::string("config: ") + section + "." + key + " must be [lo, hi]");
  lo = v[0].get<double>();
  hi = v[1].get<double>();
}

}  // namespace

BucketGrid RunConfig::make_grid() const {
  BucketGrid g = BucketGrid::log_spaced(grid.q_over_v_lo.value_or(sim.q_over_v_lo),
                                        grid.q_over_v_hi.value_or(sim.q_over_v_hi), grid.n_bins,
                                        sim.t_buckets);
  g.t_tolerance = grid.t_tolerance;
  g.validate();
  return g;
}

MarketParams RunConfig::fit_market() const {
  MarketParams m = sim.market;
  if (estimate.rescale_by_sigma) m.sigma = 1.0;
  return m;
}

FitOptions RunConfig::fit_options() const {
  FitOptions o;
  o.mode = fit.mode;
  o.n_min = estimate.n_min;
  o.max_evaluations = fit.max_evaluations;
  o.fixed = sim.model;
  return o;
}

void RunConfig::validate() const {
  sim.validate();
  make_grid();
  if (!(estimate.collapse_phi_factor > 0.0) || !(estimate.linear_phi_factor > 0.0))
    throw ConfigError("config: phi factors must be > 0");
  if (!(estimate.plateau_q_over_v_max > 0.0))
    throw ConfigError("config: plateau_q_over_v_max must be > 0");
  if (fit.max_evaluations < 10) throw ConfigError("config: max_evaluations must be >= 10");
}

Json RunConfig::to_json() const {
  const BucketGrid g = make_grid();
  return Json{
      {"seed", sim.seed},
      {"simulation",
       {{"n_orders", sim.n_orders},
        {"q_over_v_range", {sim.q_over_v_lo, sim.q_over_v_hi}},
        {"t_buckets", sim.t_buckets},
        {"t_weights", sim.t_weights},
        {"noise", to_string(sim.noise)}}},
      {"market", impactlab::to_json(sim.market)},
      {"model", impactlab::to_json(sim.model)},
      {"grid",
       {{"n_bins", grid.n_bins},
        {"q_over_v_range", {g.q_over_v_edges.front(), g.q_over_v_edges.back()}},
        {"t_tolerance", grid.t_tolerance}}},
      {"estimate",
       {{"n_min", estimate.n_min},
        {"collapse_phi_factor", estimate.collapse_phi_factor},
        {"linear_phi_factor", estimate.linear_phi_factor},
        {"plateau_q_over_v_max", estimate.plateau_q_over_v_max},
        {"rescale_by_sigma", estimate.rescale_by_sigma}}},
      {"fit", {{"mode", to_string(fit.mode)}, {"max_evaluations", fit.max_evaluations}}},
      {"cost", {{"duration_argument", to_string(cost.duration_argument)}}}};
}

RunConfig RunConfig::from_json(const Json& j, RunConfig c) {
  allow_keys(j, "config",
             {"seed", "simulation", "market", "model", "grid", "estimate", "fit", "cost"});
  read(j, "seed", c.sim.seed, "config");
  if (j.contains("simulation")) {
    const Json& s = j.at("simulation");
    allow_keys(s, "simulation", {"n_orders", "q_over_v_range", "t_buckets", "t_weights", "noise"});
    read(s, "n_orders", c.sim.n_orders, "simulation");
    read_range(s, "q_over_v_range", c.sim.q_over_v_lo, c.sim.q_over_v_hi, "simulation");
    read(s, "t_buckets", c.sim.t_buckets, "simulation");
    if (s.contains("t_buckets") && !s.contains("t_weights"))
      c.sim.t_weights.assign(c.sim.t_buckets.size(), 1.0);
    read(s, "t_weights", c.sim.t_weights, "simulation");
    std::string noise = to_string(c.sim.noise);
    read(s, "noise", noise, "simulation");
    c.sim.noise = parse_noise_kind(noise);
  }
  if (j.contains("market")) {
    const Json& m = j.at("market");
    allow_keys(m, "market", {"sigma", "daily_volume"});
    read(m, "sigma", c.sim.market.sigma, "market");
    read(m, "daily_volume", c.sim.market.daily_volume, "market");
  }
  if (j.contains("model")) {
    const Json& m = j.at("model");
    allow_keys(m, "model", {"y_const", "phi0", "a_fluct"});
    read(m, "y_const", c.sim.model.y_const, "model");
    read(m, "phi0", c.sim.model.phi0, "model");
    read(m, "a_fluct", c.sim.model.a_fluct, "model");
  }
  if (j.contains("grid")) {
    const Json& g = j.at("grid");
    allow_keys(g, "grid", {"n_bins", "q_over_v_range", "t_tolerance"});
    read(g, "n_bins", c.grid.n_bins, "grid");
    if (g.contains("q_over_v_range")) {
      double lo = 0, hi = 0;
      read_range(g, "q_over_v_range", lo, hi, "grid");
      c.grid.q_over_v_lo = lo;
      c.grid.q_over_v_hi = hi;
    }
    read(g, "t_tolerance", c.grid.t_tolerance, "grid");
  }
  if (j.contains("estimate")) {
    const Json& e = j.at("estimate");
    allow_keys(e, "estimate",
               {"n_min", "collapse_phi_factor", "linear_phi_factor", "plateau_q_over_v_max",
                "rescale_by_sigma"});
    read(e, "n_min", c.estimate.n_min, "estimate");
    read(e, "collapse_phi_factor", c.estimate.collapse_phi_factor, "estimate");
    read(e, "linear_phi_factor", c.estimate.linear_phi_factor, "estimate");
    read(e, "plateau_q_over_v_max", c.estimate.plateau_q_over_v_max, "estimate");
    read(e, "rescale_by_sigma", c.estimate.rescale_by_sigma, "estimate");
  }
  if (j.contains("fit")) {
    const Json& f = j.at("fit");
    allow_keys(f, "fit", {"mode", "max_evaluations"});
    std::string mode = to_string(c.fit.mode);
    read(f, "mode", mode, "fit");
    c.fit.mode = parse_fit_mode(mode);
    read(f, "max_evaluations", c.fit.max_evaluations, "fit");
  }
  if (j.contains("cost")) {
    const Json& k = j.at("cost");
    allow_keys(k, "cost", {"duration_argument"});
    std::string arg = to_string(c.cost.duration_argument);
    read(k, "duration_argument", arg, "cost");
    c.cost.duration_argument = parse_duration_argument(arg);
  }
  return c;
}

RunConfig RunConfig::from_json(const Json& j) { return from_json(j, RunConfig{}); }

RunConfig RunConfig::from_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config: invalid JSON in " + path.string() + ": " + e.what());
  }
  return from_json(j, std::move(base));
}

unsigned resolve_threads(std::optional<unsigned> flag) {
  if (flag) {
    if (*flag == 0) throw ConfigError("--threads must be >= 1");
    return *flag;
  }
  if (const char* env = std::getenv("IMPACTLAB_THREADS"); env && *env) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("IMPACTLAB_THREADS must be a positive integer, got '") + env +
                      "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace impactlab
