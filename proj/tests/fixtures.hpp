#pragma once

#include <cstdint>
#include <vector>

#include "impactlab/estimator.hpp"
#include "impactlab/run_config.hpp"
#include "impactlab/simulator.hpp"

namespace fixtures {

// Default 10^6-order run accumulated on the default grid.
inline impactlab::BucketMatrix default_matrix(std::uint64_t seed, std::uint64_t n_orders = 1000000,
                                              unsigned threads = 1) {
  impactlab::RunConfig cfg;
  cfg.sim.seed = seed;
  cfg.sim.n_orders = n_orders;
  const auto records = impactlab::simulate_panel(cfg.sim, threads);
  return impactlab::accumulate(cfg.make_grid(), records, {}, threads);
}

inline const impactlab::BucketMatrix& cached_default_matrix() {
  static const impactlab::BucketMatrix m = default_matrix(1);
  return m;
}

}  // namespace fixtures
