#pragma once

#include <filesystem>
#include <json.hpp>

#include "impactlab/cost.hpp"
#include "impactlab/estimator.hpp"
#include "impactlab/fit.hpp"

namespace impactlab {

using Json = nlohmann::ordered_json;

/// Schedule JSON: {"total_quantity": Q, "duration_days": T,
/// "breakpoints": [[t, Q(t)], ...]}. Errors name the offending breakpoint.
Schedule schedule_from_json(const Json& j);
Json to_json(const Schedule& schedule);
Schedule read_schedule_file(const std::filesystem::path& path);

Json to_json(const CostRiskReport& report);
Json to_json(const ImpactModel& model);
Json to_json(const MarketParams& market);
Json to_json(const FitResult& fit);
Json to_json(const CollapseResult& collapse);
Json to_json(const PlateauFit& plateau);

/// Reads the parameters back from a fit summary.
ImpactModel fitted_model_from_json(const Json& summary);

}  // namespace impactlab
