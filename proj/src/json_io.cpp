#include "impactlab/json_io.hpp"

#include <cmath>
#include <fstream>

namespace impactlab {

namespace {

// JSON has no inf/nan; those serialize as null.
Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

double require_number(const Json& j, const char* key, const char* where) {
  if (!j.contains(key)) throw DataError(std::string(where) + ": missing '" + key + "'");
  const Json& v = j.at(key);
  if (!v.is_number()) throw DataError(std::string(where) + ": '" + key + "' must be a number");
  return v.get<double>();
}

const char* side_name(PhiSide side) { return side == PhiSide::AtLeast ? "at_least" : "at_most"; }

}  // namespace

Schedule schedule_from_json(const Json& j) {
  if (!j.is_object()) throw DataError("schedule: expected a JSON object");
  Schedule s;
  s.total_quantity = require_number(j, "total_quantity", "schedule");
  s.duration = require_number(j, "duration_days", "schedule");
  if (!j.contains("breakpoints") || !j.at("breakpoints").is_array())
    throw DataError("schedule: 'breakpoints' must be an array of [t, Q] pairs");
  std::size_t index = 0;
  for (const Json& bp : j.at("breakpoints")) {
    if (!bp.is_array() || bp.size() != 2 || !bp[0].is_number() || !bp[1].is_number()) {
      throw DataError("schedule breakpoint " + std::to_string(index) +
                      ": expected [t, Q] with numeric entries");
    }
    s.breakpoints.push_back({bp[0].get<double>(), bp[1].get<double>()});
    ++index;
  }
  s.validate();
  return s;
}

Json to_json(const Schedule& schedule) {
  Json bps = Json::array();
  for (const auto& b : schedule.breakpoints) bps.push_back(Json::array({b.t, b.quantity}));
  return Json{{"total_quantity", schedule.total_quantity},
              {"duration_days", schedule.duration},
              {"breakpoints", bps}};
}

Schedule read_schedule_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schedule file " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DataError("schedule: invalid JSON: " + std::string(e.what()));
  }
  return schedule_from_json(j);
}

Json to_json(const CostRiskReport& r) {
  return Json{{"expected_cost", number(r.expected_cost)},
              {"expected_cost_per_share", number(r.expected_cost_per_share)},
              {"execution_risk", number(r.execution_risk)},
              {"ratio", number(r.ratio)}};
}

Json to_json(const ImpactModel& m) {
  return Json{{"y_const", m.y_const}, {"phi0", m.phi0}, {"a_fluct", m.a_fluct}};
}

Json to_json(const MarketParams& m) {
  return Json{{"sigma", m.sigma}, {"daily_volume", m.daily_volume}};
}

Json to_json(const FitResult& fit) {
  static constexpr const char* kNames[3] = {"y_const", "phi0", "a_fluct"};
  const double values[3] = {fit.model.y_const, fit.model.phi0, fit.model.a_fluct};
  Json params = Json::object();
  for (int i = 0; i < 3; ++i) {
    params[kNames[i]] = Json{{"value", values[i]},
                             {"std_err", number(fit.std_err[i])},
                             {"std_err_log", number(fit.std_err_log[i])}};
  }
  Json starts = Json::array();
  for (const auto& s : fit.starts) {
    starts.push_back(Json{{"start", to_json(s.start)},
                          {"end", to_json(s.end)},
                          {"objective", number(s.objective)},
                          {"evaluations", s.evaluations},
                          {"converged", s.converged}});
  }
  return Json{{"mode", to_string(fit.mode)},
              {"parameters", params},
              {"phi0_interval", Json::array({number(fit.phi0_interval[0]),
                                             number(fit.phi0_interval[1])})},
              {"phi0_weakly_identified", fit.phi0_weakly_identified},
              {"objective", number(fit.objective)},
              {"reduced_chi2", number(fit.reduced_chi2)},
              {"n_cells", fit.n_cells},
              {"n_residuals", fit.n_residuals},
              {"n_free", fit.n_free},
              {"iterations", fit.iterations},
              {"evaluations", fit.evaluations},
              {"starts", starts}};
}

Json to_json(const CollapseResult& c) {
  Json bins = Json::array();
  for (const auto& b : c.bins) {
    bins.push_back(Json{{"q_over_v_center", b.q_over_v_center},
                        {"n_buckets", b.n_buckets},
                        {"pooled_mean", b.pooled_mean},
                        {"spread", number(b.spread)}});
  }
  Json out{{"phi_threshold", c.phi_threshold},
           {"side", side_name(c.side)},
           {"status", c.status},
           {"bins", bins}};
  out["max_spread"] = c.empty() ? Json(nullptr) : number(c.max_spread());
  out["min_spread"] = c.empty() ? Json(nullptr) : number(c.min_spread());
  return out;
}

Json to_json(const PlateauFit& p) {
  Json points = Json::array();
  for (const auto& pt : p.points) {
    points.push_back(Json{{"t_bucket_days", pt.t_bucket},
                          {"n_obs", pt.n_obs},
                          {"variance", number(pt.variance)},
                          {"std_err", number(pt.std_err)}});
  }
  return Json{{"status", "ok"},
              {"slope", p.slope},
              {"intercept", p.intercept},
              {"r_squared", number(p.r_squared)},
              {"degenerate", p.degenerate},
              {"points", points}};
}

ImpactModel fitted_model_from_json(const Json& summary) {
  try {
    const Json& p = summary.at("parameters");
    return {p.at("y_const").at("value").get<double>(), p.at("phi0").at("value").get<double>(),
            p.at("a_fluct").at("value").get<double>()};
  } catch (const Json::exception& e) {
    throw DataError("fit summary: " + std::string(e.what()));
  }
}

}  // namespace impactlab
