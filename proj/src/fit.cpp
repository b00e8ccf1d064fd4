#include "impactlab/fit.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace impactlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Box constraints on (ln Y, ln phi0, ln a).
constexpr std::array<double, 3> kLogLower = {-13.815510557964274, -18.420680743952367,
                                             -18.420680743952367};
constexpr std::array<double, 3> kLogUpper = {6.907755278982137, 9.210340371976184,
                                             4.605170185988092};

double impact_at(double q_over_v, double t, double sigma, const ImpactModel& m) {
  const double phi = q_over_v / t;
  return sigma * std::sqrt(q_over_v) * m.y_const * std::sqrt(phi / (phi + m.phi0));
}

// ---- Nelder-Mead ---------------------------------------------------------

struct SimplexResult {
  std::vector<double> x;
  double f = kInf;
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
};

using Objective = std::function<double(const std::vector<double>&)>;

SimplexResult nelder_mead(const Objective& raw_f, std::vector<double> x0, double step,
                          int max_evals, const std::vector<double>& lower,
                          const std::vector<double>& upper) {
  const std::size_t dim = x0.size();
  SimplexResult out;
  auto project = [&](std::vector<double> x) {
    for (std::size_t i = 0; i < dim; ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
    return x;
  };
  auto f = [&](const std::vector<double>& x) {
    ++out.evaluations;
    const double v = raw_f(x);
    return std::isfinite(v) ? v : kInf;
  };

  std::vector<std::vector<double>> simplex(dim + 1, project(x0));
  for (std::size_t i = 0; i < dim; ++i) {
    simplex[i + 1][i] += step;
    simplex[i + 1] = project(simplex[i + 1]);
    if (simplex[i + 1] == simplex[0]) {
      simplex[i + 1][i] -= 2 * step;
      simplex[i + 1] = project(simplex[i + 1]);
    }
  }
  std::vector<double> values(dim + 1);
  for (std::size_t i = 0; i <= dim; ++i) values[i] = f(simplex[i]);

  std::vector<std::size_t> order(dim + 1);
  while (out.evaluations < max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[dim - 1];

    double diameter = 0.0;
    for (std::size_t i = 0; i <= dim; ++i)
      for (std::size_t k = 0; k < dim; ++k)
        diameter = std::max(diameter, std::abs(simplex[i][k] - simplex[best][k]));
    const double f_range = values[worst] - values[best];
    if ((f_range <= 1e-12 * (1.0 + std::abs(values[best])) && diameter <= 1e-4) ||
        diameter <= 1e-10) {
      out.converged = true;
      break;
    }
    ++out.iterations;

    std::vector<double> centroid(dim, 0.0);
    for (std::size_t i = 0; i <= dim; ++i) {
      if (i == worst) continue;
      for (std::size_t k = 0; k < dim; ++k) centroid[k] += simplex[i][k] / dim;
    }
    auto along = [&](double coeff) {
      std::vector<double> x(dim);
      for (std::size_t k = 0; k < dim; ++k)
        x[k] = centroid[k] + coeff * (simplex[worst][k] - centroid[k]);
      return project(x);
    };

    const auto reflected = along(-1.0);
    const double f_reflected = f(reflected);
    if (f_reflected < values[best]) {
      const auto expanded = along(-2.0);
      const double f_expanded = f(expanded);
      if (f_expanded < f_reflected) {
        simplex[worst] = expanded;
        values[worst] = f_expanded;
      } else {
        simplex[worst] = reflected;
        values[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < values[second]) {
      simplex[worst] = reflected;
      values[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected < values[worst];
    const auto contracted = along(outside ? -0.5 : 0.5);
    const double f_contracted = f(contracted);
    if (f_contracted < (outside ? f_reflected : values[worst])) {
      simplex[worst] = contracted;
      values[worst] = f_contracted;
      continue;
    }
    for (std::size_t i = 0; i <= dim; ++i) {
      if (i == best) continue;
      for (std::size_t k = 0; k < dim; ++k)
        simplex[i][k] = simplex[best][k] + 0.5 * (simplex[i][k] - simplex[best][k]);
      values[i] = f(simplex[i]);
    }
  }
  const auto best_it = std::min_element(values.begin(), values.end());
  out.x = simplex[static_cast<std::size_t>(best_it - values.begin())];
  out.f = *best_it;
  return out;
}

// Inverse of a small symmetric matrix via Cholesky; false when not positive
// definite.
bool invert_spd(std::vector<std::vector<double>> a, std::vector<std::vector<double>>& inv) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= l[j][k] * l[j][k];
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    l[j][j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      l[i][j] = s / l[j][j];
    }
  }
  inv.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<double> y(n), x(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = (i == c) ? 1.0 : 0.0;
      for (std::size_t k = 0; k < i; ++k) s -= l[i][k] * y[k];
      y[i] = s / l[i][i];
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = y[i];
      for (std::size_t k = i + 1; k < n; ++k) s -= l[k][i] * x[k];
      x[i] = s / l[i][i];
    }
    for (std::size_t i = 0; i < n; ++i) inv[i][c] = x[i];
  }
  return true;
}

// Indices into (ln Y, ln phi0, ln a) that are free in `mode`.
std::vector<std::size_t> free_indices(FitMode mode) {
  switch (mode) {
    case FitMode::Joint: return {0, 1, 2};
    case FitMode::MeanOnly: return {0, 1};
    case FitMode::VarianceOnly: return {2};
  }
  return {0, 1, 2};
}

std::array<double, 3> to_log(const ImpactModel& m) {
  return {std::log(m.y_const), std::log(m.phi0), std::log(m.a_fluct)};
}

ImpactModel from_log(const std::array<double, 3>& v) {
  return {std::exp(v[0]), std::exp(v[1]), std::exp(v[2])};
}

}  // namespace

double CellObservation::q_over_v_center() const {
  return std::sqrt(q_over_v_lo * q_over_v_hi);
}

std::vector<CellObservation> cells_from_stats(const BucketMatrix& stats, std::uint64_t n_min) {
  const BucketGrid& grid = stats.grid();
  std::vector<CellObservation> cells;
  for (std::size_t t = 0; t < grid.n_t(); ++t) {
    for (std::size_t bin = 0; bin < grid.n_bins(); ++bin) {
      const BucketStats& c = stats.at(bin, t);
      if (c.count() < std::max<std::uint64_t>(n_min, 2)) continue;
      cells.push_back({grid.lower_edge(bin), grid.upper_edge(bin), grid.t_buckets[t], c.count(),
                       c.mean(), c.std_err_mean(), c.variance(), c.std_err_variance()});
    }
  }
  return cells;
}

std::vector<CellObservation> cells_from_curves(std::span<const CurveRow> rows,
                                               std::uint64_t n_min) {
  std::vector<CellObservation> cells;
  for (const auto& r : rows) {
    if (r.n_obs < std::max<std::uint64_t>(n_min, 2)) continue;
    cells.push_back({r.q_over_v_lo, r.q_over_v_hi, r.t_bucket, r.n_obs, r.mean_impact,
                     r.std_err_mean, r.var_price_change, r.std_err_var});
  }
  return cells;
}

CellPrediction predict_cell(double lo, double hi, double t, const MarketParams& market,
                            const ImpactModel& model) {
  using boost::math::quadrature::gauss;
  const double sigma = market.sigma;
  double mean = 0.0;
  double second = 0.0;
  if (!(hi > lo * (1.0 + 1e-12))) {
    const double q = std::sqrt(lo * hi);
    mean = impact_at(q, t, sigma, model);
    second = mean * mean;
  } else {
    const double a = std::log(lo);
    const double b = std::log(hi);
    const double width = b - a;
    mean = gauss<double, 20>::integrate(
               [&](double x) { return impact_at(std::exp(x), t, sigma, model); }, a, b) /
           width;
    second = gauss<double, 20>::integrate(
                 [&](double x) {
                   const double i = impact_at(std::exp(x), t, sigma, model);
                   return i * i;
                 },
                 a, b) /
             width;
  }
  const double aa = model.a_fluct * model.a_fluct;
  return {mean, sigma * sigma * t + (1.0 + aa) * second - mean * mean};
}

std::string to_string(FitMode mode) {
  switch (mode) {
    case FitMode::Joint: return "joint";
    case FitMode::MeanOnly: return "mean";
    case FitMode::VarianceOnly: return "variance";
  }
  return "joint";
}

FitMode parse_fit_mode(std::string_view name) {
  if (name == "joint") return FitMode::Joint;
  if (name == "mean") return FitMode::MeanOnly;
  if (name == "variance") return FitMode::VarianceOnly;
  throw ConfigError("unknown fit mode '" + std::string(name) + "' (expected joint|mean|variance)");
}

std::vector<ImpactModel> FitOptions::default_starts() {
  return {{0.5, 0.01, 0.1}, {1.0, 0.1, 0.3}, {0.2, 0.001, 0.03}};
}

double fit_objective(std::span<const CellObservation> cells, const MarketParams& market,
                     const ImpactModel& model, FitMode mode) {
  const bool use_mean = mode != FitMode::VarianceOnly;
  const bool use_var = mode != FitMode::MeanOnly;
  double chi2 = 0.0;
  for (const auto& c : cells) {
    const CellPrediction p =
        predict_cell(c.q_over_v_lo, c.q_over_v_hi, c.t_bucket, market, model);
    if (use_mean) {
      const double r = (c.mean - p.mean) / c.std_err_mean;
      chi2 += r * r;
    }
    if (use_var) {
      const double r = (c.variance - p.variance) / c.std_err_variance;
      chi2 += r * r;
    }
  }
  return chi2;
}

FitResult fit_cells(std::span<const CellObservation> all_cells, const MarketParams& market,
                    const FitOptions& options) {
  market.validate();
  std::vector<CellObservation> cells;
  for (const auto& c : all_cells) {
    if (c.n_obs < std::max<std::uint64_t>(options.n_min, 2)) continue;
    if (!(c.std_err_mean > 0.0) || !(c.std_err_variance > 0.0)) continue;
    if (!std::isfinite(c.mean) || !std::isfinite(c.variance)) continue;
    cells.push_back(c);
  }
  if (cells.size() < 10) {
    throw DataError("fit: need at least 10 cells with >= " + std::to_string(options.n_min) +
                    " observations, got " + std::to_string(cells.size()));
  }
  double q_min = kInf, q_max = 0.0;
  for (const auto& c : cells) {
    q_min = std::min(q_min, c.q_over_v_center());
    q_max = std::max(q_max, c.q_over_v_center());
  }
  if (q_max < 10.0 * q_min)
    throw DataError("fit: populated cells span less than one decade of Q/V");
  if (options.starts.empty()) throw ConfigError("fit: no starting points");

  const auto free = free_indices(options.mode);
  const auto fixed_log = to_log(options.fixed);
  auto assemble = [&](const std::vector<double>& x) {
    auto full = fixed_log;
    for (std::size_t i = 0; i < free.size(); ++i) full[free[i]] = x[i];
    return full;
  };
  auto objective = [&](const std::vector<double>& x) {
    return fit_objective(cells, market, from_log(assemble(x)), options.mode);
  };
  std::vector<double> lower, upper;
  for (std::size_t i : free) {
    lower.push_back(kLogLower[i]);
    upper.push_back(kLogUpper[i]);
  }

  FitResult result;
  result.mode = options.mode;
  result.n_cells = cells.size();
  result.n_residuals = cells.size() * (options.mode == FitMode::Joint ? 2 : 1);
  result.n_free = free.size();

  SimplexResult best;
  bool any_converged = false;
  for (const ImpactModel& start : options.starts) {
    start.validate();
    const auto start_log = to_log(start);
    std::vector<double> x0;
    for (std::size_t i : free) x0.push_back(start_log[i]);

    SimplexResult run = nelder_mead(objective, x0, 0.5, options.max_evaluations, lower, upper);
    int evaluations = run.evaluations;
    int iterations = run.iterations;
    // Restart from the best vertex until a fresh simplex no longer improves.
    for (int restart = 0; restart < 6 && run.converged; ++restart) {
      const int budget = options.max_evaluations - evaluations;
      if (budget <= 0) break;
      SimplexResult again = nelder_mead(objective, run.x, 0.05, budget, lower, upper);
      evaluations += again.evaluations;
      iterations += again.iterations;
      const bool improved = again.f < run.f - 1e-10 * (1.0 + std::abs(run.f));
      if (again.f <= run.f) run = again;
      if (!improved) break;
    }
    run.evaluations = evaluations;
    run.iterations = iterations;

    result.starts.push_back({start, from_log(assemble(run.x)), run.f, evaluations, run.converged});
    result.evaluations += evaluations;
    result.iterations += iterations;
    any_converged = any_converged || run.converged;
    if (run.f < best.f || best.x.empty()) best = run;
  }

  result.model = from_log(assemble(best.x));
  result.objective = best.f;
  const double dof = static_cast<double>(result.n_residuals) - static_cast<double>(free.size());
  result.reduced_chi2 = dof > 0 ? best.f / dof : kNaN;

  // Curvature of chi^2 in log space: cov(ln theta) = 2 H^{-1}.
  const std::size_t dim = free.size();
  const double h = 1e-3;
  std::vector<std::vector<double>> hess(dim, std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = i; j < dim; ++j) {
      auto shifted = [&](double di, double dj) {
        auto x = best.x;
        x[i] += di;
        x[j] += dj;
        return objective(x);
      };
      double v;
      if (i == j) {
        v = (shifted(h, 0) - 2.0 * best.f + shifted(-h, 0)) / (h * h);
      } else {
        v = (shifted(h, h) - shifted(h, -h) - shifted(-h, h) + shifted(-h, -h)) / (4.0 * h * h);
      }
      hess[i][j] = hess[j][i] = v;
    }
  }
  std::vector<std::vector<double>> inv;
  const bool spd = invert_spd(hess, inv);
  result.std_err_log = {kNaN, kNaN, kNaN};
  result.std_err = {kNaN, kNaN, kNaN};
  const auto fitted_log = to_log(result.model);
  for (std::size_t i = 0; i < dim; ++i) {
    const double se_log = spd ? std::sqrt(2.0 * inv[i][i]) : kInf;
    result.std_err_log[free[i]] = se_log;
    result.std_err[free[i]] = std::exp(fitted_log[free[i]]) * se_log;
  }
  result.phi0_interval = {kNaN, kNaN};
  if (options.mode != FitMode::VarianceOnly) {
    // Profile chi^2 over ln phi0 with the remaining free parameters
    // re-minimized, walked outward from the optimum on each side.
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < free.size(); ++i)
      if (free[i] != 1) others.push_back(i);
    const std::size_t phi_slot = static_cast<std::size_t>(
        std::find(free.begin(), free.end(), std::size_t{1}) - free.begin());
    const double target = best.f + 1.0;
    auto crossing = [&](double direction) {
      std::vector<double> warm;
      for (std::size_t i : others) warm.push_back(best.x[i]);
      auto profile = [&](double lp) {
        auto x = best.x;
        x[phi_slot] = lp;
        if (others.empty()) return objective(x);
        std::vector<double> lo, hi;
        for (std::size_t i : others) {
          lo.push_back(lower[i]);
          hi.push_back(upper[i]);
        }
        auto sub = [&](const std::vector<double>& y) {
          auto z = x;
          for (std::size_t k = 0; k < others.size(); ++k) z[others[k]] = y[k];
          return objective(z);
        };
        const SimplexResult r = nelder_mead(sub, warm, 0.05, 4000, lo, hi);
        warm = r.x;
        return r.f;
      };
      const double bound = direction > 0 ? upper[phi_slot] : lower[phi_slot];
      double inside = best.x[phi_slot];
      double step = 0.05;
      double outside = inside;
      for (;;) {
        outside = std::clamp(inside + direction * step, lower[phi_slot], upper[phi_slot]);
        if (profile(outside) >= target) break;
        if (outside == bound) return bound;
        inside = outside;
        step *= 2.0;
      }
      while (std::abs(outside - inside) > 1e-3) {
        const double mid = 0.5 * (inside + outside);
        (profile(mid) >= target ? outside : inside) = mid;
      }
      return 0.5 * (inside + outside);
    };
    const double lp_lo = crossing(-1.0);
    const double lp_hi = crossing(+1.0);
    result.phi0_interval = {std::exp(lp_lo), std::exp(lp_hi)};
    const bool open = lp_lo <= lower[phi_slot] || lp_hi >= upper[phi_slot];
    result.phi0_weakly_identified = open || lp_hi - lp_lo > std::log(10.0);
  }

  if (!any_converged) {
    throw ConvergenceError("fit: optimizer did not converge within " +
                               std::to_string(options.max_evaluations) +
                               " evaluations from any start",
                           result);
  }
  return result;
}

FitResult fit_model(const BucketMatrix& stats, const MarketParams& market,
                    const FitOptions& options) {
  const auto cells = cells_from_stats(stats, options.n_min);
  return fit_cells(cells, market, options);
}

}  // namespace impactlab
