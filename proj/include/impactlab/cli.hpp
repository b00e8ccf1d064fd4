#pragma once

#include <iosfwd>

namespace impactlab::app {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;    // usage or configuration error
inline constexpr int kExitData = 2;     // data or schema error
inline constexpr int kExitNumeric = 3;  // non-convergence, quadrature failure

/// Entry point of the impactlab tool: simulate | estimate | fit | cost | report.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace impactlab::app
