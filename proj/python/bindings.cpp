#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <sstream>

#include "impactlab/cli.hpp"
#include "impactlab/cost.hpp"
#include "impactlab/dataio.hpp"
#include "impactlab/estimator.hpp"
#include "impactlab/fit.hpp"
#include "impactlab/json_io.hpp"
#include "impactlab/model.hpp"
#include "impactlab/simulator.hpp"

namespace py = pybind11;
using namespace impactlab;

namespace {

struct Panel {
  std::vector<MetaorderRecord> records;
};

py::object to_python(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

template <typename T, typename Get>
py::array_t<T> column(const Panel& p, Get get) {
  py::array_t<T> out(static_cast<py::ssize_t>(p.records.size()));
  auto view = out.template mutable_unchecked<1>();
  for (std::size_t i = 0; i < p.records.size(); ++i) view(i) = get(p.records[i]);
  return out;
}

Panel panel_from_columns(const py::dict& cols) {
  auto get = [&](const char* key) {
    if (!cols.contains(key)) throw DataError(std::string("missing column '") + key + "'");
    return py::array_t<double, py::array::c_style | py::array::forcecast>(cols[key]);
  };
  const auto sign = get("sign"), quantity = get("quantity"), duration = get("duration_days"),
             start = get("start_logprice"), end = get("end_logprice"), sigma = get("sigma"),
             volume = get("daily_volume");
  const py::ssize_t n = sign.size();
  for (const auto* a : {&quantity, &duration, &start, &end, &sigma, &volume})
    if (a->size() != n) throw DataError("columns have different lengths");
  Panel p;
  p.records.resize(static_cast<std::size_t>(n));
  for (py::ssize_t i = 0; i < n; ++i) {
    auto& r = p.records[static_cast<std::size_t>(i)];
    r.order_id = static_cast<std::uint64_t>(i);
    r.sign = sign.at(i) < 0 ? -1 : 1;
    r.quantity = quantity.at(i);
    r.duration = duration.at(i);
    r.start_logprice = start.at(i);
    r.end_logprice = end.at(i);
    r.sigma = sigma.at(i);
    r.daily_volume = volume.at(i);
  }
  if (cols.contains("order_id")) {
    const auto ids = py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>(
        cols["order_id"]);
    if (ids.size() != n) throw DataError("columns have different lengths");
    for (py::ssize_t i = 0; i < n; ++i) p.records[static_cast<std::size_t>(i)].order_id = ids.at(i);
  }
  return p;
}

py::dict cell_dict(const BucketMatrix& m, std::size_t bin, std::size_t t) {
  const BucketStats& s = m.at(bin, t);
  py::dict d;
  d["q_over_v_lo"] = m.grid().lower_edge(bin);
  d["q_over_v_hi"] = m.grid().upper_edge(bin);
  d["t_bucket"] = m.grid().t_buckets[t];
  d["n_obs"] = s.count();
  d["mean"] = s.mean();
  d["variance"] = s.variance();
  d["std_err_mean"] = s.std_err_mean();
  d["std_err_variance"] = s.std_err_variance();
  return d;
}

}  // namespace

PYBIND11_MODULE(_impactlab, m) {
  m.doc() = "Square-root market impact: model, simulator, estimator, fit and cost engine.";
  m.attr("__version__") = "0.1.0";

  // Registered most-derived last: pybind11 tries translators newest first.
  auto domain_error = py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  auto data_error = py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<SchemaError>(m, "SchemaError", data_error);
  auto numeric_error = py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", numeric_error);
  py::register_exception<QuadratureError>(m, "QuadratureError", numeric_error);
  py::register_exception<WriteError>(m, "WriteError", PyExc_OSError);
  (void)domain_error;

  py::class_<MarketParams>(m, "MarketParams")
      .def(py::init([](double sigma, double daily_volume) {
             MarketParams p{sigma, daily_volume};
             p.validate();
             return p;
           }),
           py::arg("sigma") = 0.02, py::arg("daily_volume") = 1.0e6)
      .def_readwrite("sigma", &MarketParams::sigma)
      .def_readwrite("daily_volume", &MarketParams::daily_volume)
      .def("__repr__", [](const MarketParams& p) {
        return "MarketParams(sigma=" + format_double(p.sigma) +
               ", daily_volume=" + format_double(p.daily_volume) + ")";
      });

  py::class_<ImpactModel>(m, "ImpactModel")
      .def(py::init([](double y_const, double phi0, double a_fluct) {
             ImpactModel p{y_const, phi0, a_fluct};
             p.validate();
             return p;
           }),
           py::arg("y_const") = 0.5, py::arg("phi0") = 0.01, py::arg("a_fluct") = 0.1)
      .def_readwrite("y_const", &ImpactModel::y_const)
      .def_readwrite("phi0", &ImpactModel::phi0)
      .def_readwrite("a_fluct", &ImpactModel::a_fluct)
      .def("__repr__", [](const ImpactModel& p) {
        return "ImpactModel(y_const=" + format_double(p.y_const) +
               ", phi0=" + format_double(p.phi0) + ", a_fluct=" + format_double(p.a_fluct) + ")";
      });

  py::class_<OrderSpec>(m, "OrderSpec")
      .def(py::init([](double quantity, double duration, int sign) {
             OrderSpec o{sign, quantity, duration};
             o.validate();
             return o;
           }),
           py::arg("quantity"), py::arg("duration"), py::arg("sign") = 1)
      .def_readwrite("sign", &OrderSpec::sign)
      .def_readwrite("quantity", &OrderSpec::quantity)
      .def_readwrite("duration", &OrderSpec::duration);

  m.def("participation", &participation, py::arg("order"), py::arg("market"));
  m.def("scaling_function", &scaling_function, py::arg("phi"), py::arg("model"));
  m.def("expected_impact", &expected_impact, py::arg("order"), py::arg("market"),
        py::arg("model"));
  m.def("conditional_variance", &conditional_variance, py::arg("order"), py::arg("market"),
        py::arg("model"));
  m.def("execution_risk", &execution_risk, py::arg("duration"), py::arg("market"));
  m.def("impact_r_squared", &impact_r_squared, py::arg("q_over_v"), py::arg("model"));
  m.def("sample_price_change", &sample_price_change, py::arg("order"), py::arg("market"),
        py::arg("model"), py::arg("eta"), py::arg("xi"));

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_readwrite("n_orders", &SimConfig::n_orders)
      .def_readwrite("seed", &SimConfig::seed)
      .def_readwrite("market", &SimConfig::market)
      .def_readwrite("model", &SimConfig::model)
      .def_readwrite("q_over_v_lo", &SimConfig::q_over_v_lo)
      .def_readwrite("q_over_v_hi", &SimConfig::q_over_v_hi)
      .def_readwrite("t_buckets", &SimConfig::t_buckets)
      .def_readwrite("t_weights", &SimConfig::t_weights)
      .def_property(
          "noise", [](const SimConfig& c) { return to_string(c.noise); },
          [](SimConfig& c, const std::string& name) { c.noise = parse_noise_kind(name); })
      .def("validate", &SimConfig::validate);

  py::class_<Panel>(m, "Panel", "Metaorder records in order_id order.")
      .def("__len__", [](const Panel& p) { return p.records.size(); })
      .def("columns", [](const Panel& p) {
        py::dict d;
        d["order_id"] = column<std::uint64_t>(p, [](const auto& r) { return r.order_id; });
        d["sign"] = column<int>(p, [](const auto& r) { return r.sign; });
        d["quantity"] = column<double>(p, [](const auto& r) { return r.quantity; });
        d["duration_days"] = column<double>(p, [](const auto& r) { return r.duration; });
        d["start_logprice"] = column<double>(p, [](const auto& r) { return r.start_logprice; });
        d["end_logprice"] = column<double>(p, [](const auto& r) { return r.end_logprice; });
        d["sigma"] = column<double>(p, [](const auto& r) { return r.sigma; });
        d["daily_volume"] = column<double>(p, [](const auto& r) { return r.daily_volume; });
        return d;
      }, "Dict of numpy arrays, one per fills column.")
      .def_static("from_columns", &panel_from_columns, py::arg("columns"),
                  "Builds a panel from a dict of array-likes with the fills column names.");

  m.def("simulate", [](const SimConfig& config, unsigned threads) {
        config.validate();
        Panel p;
        py::gil_scoped_release release;
        p.records = simulate_panel(config, threads);
        return p;
      }, py::arg("config"), py::arg("threads") = 1,
      "Simulated panel; the content does not depend on `threads`.");

  m.def("read_fills", [](const std::filesystem::path& path) {
        return Panel{read_fills_file(path)};
      }, py::arg("path"));
  m.def("write_fills", [](const Panel& p, const std::filesystem::path& path) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw WriteError("cannot open " + path.string(), 0);
        return write_fills(p.records, out);
      }, py::arg("panel"), py::arg("path"));

  py::class_<BucketGrid>(m, "BucketGrid")
      .def_static("log_spaced", &BucketGrid::log_spaced, py::arg("q_over_v_lo"),
                  py::arg("q_over_v_hi"), py::arg("n_bins"), py::arg("t_buckets"))
      .def_readonly("q_over_v_edges", &BucketGrid::q_over_v_edges)
      .def_readonly("t_buckets", &BucketGrid::t_buckets)
      .def_readwrite("t_tolerance", &BucketGrid::t_tolerance)
      .def_property_readonly("n_bins", &BucketGrid::n_bins)
      .def_property_readonly("n_t", &BucketGrid::n_t);

  py::class_<BucketMatrix>(m, "BucketMatrix")
      .def_property_readonly("grid", &BucketMatrix::grid)
      .def_property_readonly("out_of_range_q", &BucketMatrix::out_of_range_q)
      .def_property_readonly("out_of_range_t", &BucketMatrix::out_of_range_t)
      .def_property_readonly("total_in_grid", &BucketMatrix::total_in_grid)
      .def("cell", [](const BucketMatrix& mx, std::size_t bin, std::size_t t) {
        if (bin >= mx.grid().n_bins() || t >= mx.grid().n_t()) throw py::index_error("cell index");
        return cell_dict(mx, bin, t);
      }, py::arg("bin"), py::arg("t"))
      .def("curves", [](const BucketMatrix& mx, std::uint64_t min_count) {
        py::list rows;
        for (const CurveRow& r : curves_from_stats(mx, min_count)) {
          py::dict d;
          d["q_over_v_center"] = r.q_over_v_center;
          d["t_bucket"] = r.t_bucket;
          d["n_obs"] = r.n_obs;
          d["mean_impact"] = r.mean_impact;
          d["var_price_change"] = r.var_price_change;
          d["std_err_mean"] = r.std_err_mean;
          d["q_over_v_lo"] = r.q_over_v_lo;
          d["q_over_v_hi"] = r.q_over_v_hi;
          d["std_err_var"] = r.std_err_var;
          rows.append(d);
        }
        return rows;
      }, py::arg("min_count") = 2)
      .def("merge", [](const BucketMatrix& a, const BucketMatrix& b) { return merge(a, b); });

  m.def("accumulate", [](const BucketGrid& grid, const Panel& p, bool rescale_by_sigma,
                         unsigned threads) {
        py::gil_scoped_release release;
        return accumulate(grid, p.records, AccumulateOptions{rescale_by_sigma}, threads);
      }, py::arg("grid"), py::arg("panel"), py::arg("rescale_by_sigma") = false,
      py::arg("threads") = 1);

  m.def("collapse_diagnostic", [](const BucketMatrix& mx, double phi_threshold,
                                  const std::string& side, std::uint64_t n_min) {
        PhiSide s;
        if (side == "at_least") s = PhiSide::AtLeast;
        else if (side == "at_most") s = PhiSide::AtMost;
        else throw ConfigError("side must be at_least|at_most");
        return to_python(to_json(collapse_diagnostic(mx, phi_threshold, s, n_min)));
      }, py::arg("matrix"), py::arg("phi_threshold"), py::arg("side") = "at_least",
      py::arg("n_min") = kDefaultMinCount);

  m.def("variance_plateau_slope", [](const BucketMatrix& mx, double q_over_v_max,
                                     std::uint64_t n_min) {
        return to_python(to_json(variance_plateau_slope(mx, q_over_v_max, n_min)));
      }, py::arg("matrix"), py::arg("q_over_v_max"), py::arg("n_min") = kDefaultMinCount);

  m.def("predict_cell", [](double lo, double hi, double t, const MarketParams& market,
                           const ImpactModel& model) {
        const CellPrediction p = predict_cell(lo, hi, t, market, model);
        return py::make_tuple(p.mean, p.variance);
      }, py::arg("q_over_v_lo"), py::arg("q_over_v_hi"), py::arg("t_bucket"), py::arg("market"),
      py::arg("model"), "(mean, variance) of sign * price change averaged over the cell.");

  m.def("fit", [](const BucketMatrix& mx, const MarketParams& market, const std::string& mode,
                  std::uint64_t n_min, int max_evaluations, const ImpactModel& fixed) {
        FitOptions o;
        o.mode = parse_fit_mode(mode);
        o.n_min = n_min;
        o.max_evaluations = max_evaluations;
        o.fixed = fixed;
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit_model(mx, market, o);
        }
        return to_python(to_json(r));
      }, py::arg("matrix"), py::arg("market"), py::arg("mode") = "joint",
      py::arg("n_min") = kDefaultMinCount, py::arg("max_evaluations") = 20000,
      py::arg("fixed") = ImpactModel{},
      "Fit summary dict (parameters with standard errors, phi0 interval, chi^2).");

  py::class_<Schedule>(m, "Schedule")
      .def(py::init([](double total_quantity, double duration,
                       const std::vector<std::pair<double, double>>& breakpoints) {
             Schedule s;
             s.total_quantity = total_quantity;
             s.duration = duration;
             for (const auto& [t, q] : breakpoints) s.breakpoints.push_back({t, q});
             s.validate();
             return s;
           }),
           py::arg("total_quantity"), py::arg("duration"), py::arg("breakpoints"))
      .def_static("constant_rate", &Schedule::constant_rate, py::arg("total_quantity"),
                  py::arg("duration"))
      .def_static("from_file", &read_schedule_file, py::arg("path"))
      .def_readonly("total_quantity", &Schedule::total_quantity)
      .def_readonly("duration", &Schedule::duration)
      .def_property_readonly("breakpoints", [](const Schedule& s) {
        std::vector<std::pair<double, double>> out;
        for (const auto& b : s.breakpoints) out.emplace_back(b.t, b.quantity);
        return out;
      })
      .def("quantity_at", &Schedule::quantity_at, py::arg("t"));

  auto cost_options = [](const std::string& duration_argument, double rel_tol) {
    CostOptions o;
    o.duration_argument = parse_duration_argument(duration_argument);
    o.relative_tolerance = rel_tol;
    return o;
  };
  m.def("expected_cost", [cost_options](const Schedule& s, const MarketParams& market,
                                        const ImpactModel& model, const std::string& arg,
                                        double rel_tol) {
        return expected_cost(s, market, model, cost_options(arg, rel_tol));
      }, py::arg("schedule"), py::arg("market"), py::arg("model"),
      py::arg("duration_argument") = "elapsed", py::arg("relative_tolerance") = 1e-8);
  m.def("cost_vs_risk", [cost_options](const Schedule& s, const MarketParams& market,
                                       const ImpactModel& model, const std::string& arg,
                                       double rel_tol) {
        return to_python(to_json(cost_vs_risk_report(s, market, model, cost_options(arg, rel_tol))));
      }, py::arg("schedule"), py::arg("market"), py::arg("model"),
      py::arg("duration_argument") = "elapsed", py::arg("relative_tolerance") = 1e-8);

  m.def("run_cli", [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"impactlab"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = app::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      }, py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
