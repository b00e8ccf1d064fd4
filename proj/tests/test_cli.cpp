#include <doctest.h>

#include <cstdlib>
#include <json.hpp>

#include "cli_harness.hpp"
#include "impactlab/commands.hpp"
#include "impactlab/dataio.hpp"
#include "impactlab/run_config.hpp"

using harness::run;
using harness::slurp;
using harness::spit;
using harness::TempDir;
using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

TEST_CASE("simulate is deterministic") {
  TempDir a, b;
  REQUIRE(run({"simulate", "--n-orders", "1000", "--seed", "7", "--out", a / "o"}).code == 0);
  REQUIRE(run({"--seed", "7", "--threads", "4", "--out", b / "o", "simulate", "--n-orders",
               "1000"})
              .code == 0);
  const std::string fills = slurp(a / "o/fills.csv");
  CHECK(fills == slurp(b / "o/fills.csv"));
  CHECK(std::count(fills.begin(), fills.end(), '\n') == 1001);
  CHECK(slurp(a / "o/resolved_config.json") == slurp(b / "o/resolved_config.json"));
}

TEST_CASE("zero orders is a config error and leaves nothing behind") {
  TempDir d;
  const auto r = run({"simulate", "--n-orders", "0", "--out", d / "o"});
  CHECK(r.code == 1);
  CHECK(r.err.find("n_orders") != std::string::npos);
  CHECK_FALSE(fs::exists(d / "o"));
}

TEST_CASE("usage errors") {
  CHECK(run({}).code == 1);
  CHECK(run({"bogus"}).code == 1);
  CHECK(run({"simulate", "--n-orders", "ten"}).code == 1);
  CHECK(run({"simulate", "--noise", "cauchy", "--out", "/nonexistent/x"}).code == 1);
  CHECK(run({"cost"}).code == 1);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("header-only fills give empty curves and a warning") {
  TempDir d;
  spit(d / "fills.csv", std::string(impactlab::kFillsHeader) + "\n");
  const auto r = run({"estimate", "--fills", d / "fills.csv", "--out", d / "o"});
  REQUIRE(r.code == 0);
  CHECK(slurp(d / "o/curves.csv") == std::string(impactlab::kCurvesHeader) + "\n");
  const Json diag = Json::parse(slurp(d / "o/diagnostics.json"));
  CHECK(diag["status"] == "warning");
  CHECK(diag["n_records"] == 0);
}

TEST_CASE("one out-of-range duration is tallied") {
  TempDir d;
  REQUIRE(run({"simulate", "--n-orders", "500", "--seed", "1", "--out", d / "o"}).code == 0);
  std::string fills = slurp(d / "o/fills.csv");
  fills += "999999,+1,100,0.3,0,0.001,0.02,1000000\n";
  spit(d / "fills.csv", fills);
  REQUIRE(run({"estimate", "--fills", d / "fills.csv", "--out", d / "o"}).code == 0);
  const Json diag = Json::parse(slurp(d / "o/diagnostics.json"));
  CHECK(diag["out_of_range"]["duration"] == 1);
  CHECK(diag["out_of_range"]["total"] == 1);
  CHECK(diag["n_records"] == 501);
}

TEST_CASE("bad fills exit 2 with row context and keep earlier outputs intact") {
  TempDir d;
  spit(d / "fills.csv", std::string(impactlab::kFillsHeader) +
                            "\n1,+1,10000,0,0.0,0.000707,0.02,1000000\n");
  const auto r = run({"estimate", "--fills", d / "fills.csv", "--out", d / "o"});
  CHECK(r.code == 2);
  CHECK(r.err.find("row 2, duration_days: must be > 0") != std::string::npos);
  CHECK_FALSE(fs::exists(d / "o"));

  spit(d / "renamed.csv", "id,sign\n");
  CHECK(run({"estimate", "--fills", d / "renamed.csv", "--out", d / "o"}).code == 2);
  CHECK(run({"estimate", "--fills", d / "absent.csv", "--out", d / "o"}).code == 2);
}

TEST_CASE("fit on too little data exits nonzero with the estimator's message") {
  TempDir d;
  REQUIRE(run({"simulate", "--n-orders", "300", "--out", d / "o"}).code == 0);
  REQUIRE(run({"estimate", "--out", d / "o"}).code == 0);
  const auto r = run({"fit", "--out", d / "o"});
  CHECK(r.code == 2);
  CHECK(r.err.find("fit: need at least 10 cells") != std::string::npos);
  CHECK_FALSE(fs::exists(d / "o/fit_summary.json"));
}

TEST_CASE("fit budget exhaustion exits 3") {
  TempDir d;
  REQUIRE(run({"simulate", "--n-orders", "100000", "--out", d / "o"}).code == 0);
  const auto r = run({"fit", "--input", d / "o/fills.csv", "--max-evaluations", "10", "--out",
                      d / "o"});
  CHECK(r.code == 3);
  CHECK(r.err.find("best so far") != std::string::npos);
}

TEST_CASE("cost command") {
  TempDir d;
  spit(d / "s.json",
       R"({"total_quantity": 10000, "duration_days": 1.0, "breakpoints": [[0, 0], [1.0, 10000]]})");
  const auto r = run({"cost", "--schedule", d / "s.json", "--out", d / "o"});
  REQUIRE(r.code == 0);
  const Json j = Json::parse(r.out);
  CHECK(j["expected_cost_per_share"].get<double>() ==
        doctest::Approx(4.714045207910317e-4).epsilon(1e-9));
  CHECK(j["execution_risk"].get<double>() == 0.02);
  CHECK(j["ratio"].get<double>() < 0.03);
  CHECK(Json::parse(slurp(d / "o/cost_report.json")) == j);

  const auto p = run({"cost", "--schedule", d / "s.json", "--duration-argument", "planned",
                      "--out", d / "o"});
  CHECK(p.code == 0);

  spit(d / "bad.json",
       R"({"total_quantity": 10000, "duration_days": 1.0, "breakpoints": [[0, 0], [0.6, 7000], [0.5, 8000], [1.0, 10000]]})");
  const auto b = run({"cost", "--schedule", d / "bad.json", "--out", d / "o2"});
  CHECK(b.code == 2);
  CHECK(b.err.find("breakpoint 2") != std::string::npos);
  CHECK_FALSE(fs::exists(d / "o2"));

  spit(d / "zero.json", R"({"total_quantity": 0, "duration_days": 0, "breakpoints": [[0, 0], [0, 0]]})");
  CHECK(run({"cost", "--schedule", d / "zero.json", "--out", d / "o3"}).code == 1);
}

TEST_CASE("report without estimate lists the missing curves") {
  TempDir d;
  REQUIRE(run({"simulate", "--n-orders", "1000", "--out", d / "o"}).code == 0);
  const auto r = run({"report", "--out", d / "o"});
  CHECK(r.code == 2);
  CHECK(r.err.find("curves.csv") != std::string::npos);
  CHECK(r.err.find("diagnostics.json") != std::string::npos);
  CHECK_FALSE(fs::exists(d / "o/bundle"));
}

TEST_CASE("config file and flag precedence") {
  TempDir d;
  spit(d / "cfg.json", R"({"seed": 3, "simulation": {"n_orders": 500}, "model": {"phi0": 0.02}})");
  REQUIRE(run({"--config", d / "cfg.json", "--out", d / "o", "simulate", "--n-orders", "300"})
              .code == 0);
  const std::string fills = slurp(d / "o/fills.csv");
  CHECK(std::count(fills.begin(), fills.end(), '\n') == 301);
  const Json echoed = Json::parse(slurp(d / "o/resolved_config.json"));
  CHECK(echoed["simulation"]["n_orders"] == 300);
  CHECK(echoed["seed"] == 3);
  CHECK(echoed["model"]["phi0"] == 0.02);
  CHECK_FALSE(echoed.contains("threads"));

  // Later stages inherit the echoed configuration.
  REQUIRE(run({"estimate", "--out", d / "o"}).code == 0);
  const Json after = Json::parse(slurp(d / "o/resolved_config.json"));
  CHECK(after["model"]["phi0"] == 0.02);
  CHECK(after["simulation"]["n_orders"] == 300);

  spit(d / "typo.json", R"({"simulation": {"n_order": 5}})");
  const auto r = run({"--config", d / "typo.json", "--out", d / "p", "simulate"});
  CHECK(r.code == 1);
  CHECK(r.err.find("n_order") != std::string::npos);

  spit(d / "type.json", R"({"simulation": {"n_orders": -5}})");
  CHECK(run({"--config", d / "type.json", "--out", d / "p", "simulate"}).code == 1);
  CHECK(run({"--config", d / "missing.json", "simulate"}).code == 1);
}

TEST_CASE("thread count falls back to the environment") {
  CHECK(impactlab::resolve_threads(5u) == 5);
  ::setenv("IMPACTLAB_THREADS", "3", 1);
  CHECK(impactlab::resolve_threads(std::nullopt) == 3);
  ::setenv("IMPACTLAB_THREADS", "zero", 1);
  CHECK_THROWS(impactlab::resolve_threads(std::nullopt));
  ::unsetenv("IMPACTLAB_THREADS");
  CHECK(impactlab::resolve_threads(std::nullopt) >= 1);
}

TEST_CASE("full pipeline produces a complete, reproducible bundle") {
  TempDir a, b;
  for (const auto* dir : {&a, &b}) {
    const std::string out = *dir / "o";
    const std::string threads = dir == &a ? "1" : "8";
    REQUIRE(run({"simulate", "--n-orders", "300000", "--seed", "9", "--threads", threads,
                 "--out", out})
                .code == 0);
    REQUIRE(run({"estimate", "--threads", threads, "--out", out}).code == 0);
    REQUIRE(run({"fit", "--threads", threads, "--out", out}).code == 0);
    REQUIRE(run({"report", "--threads", threads, "--out", out}).code == 0);
  }
  for (const char* f : {"left_panel.csv", "right_panel.csv", "inset.csv", "fit_summary.json",
                        "checks.json"})
    CHECK(fs::exists(fs::path(a / "o/bundle") / f));
  CHECK(harness::snapshot(a / "o") == harness::snapshot(b / "o"));

  const Json checks = Json::parse(slurp(a / "o/bundle/checks.json"));
  CHECK(checks["checks"].size() == 8);
  for (const auto& c : checks["checks"]) {
    const std::string name = c["name"];
    // At 3e5 orders only the two diagnostics that need no statistics-limited
    // threshold are asserted here; the 1e6-order checks live in acceptance.
    if (name == "t_dependence_linear_regime" || name == "variance_formula")
      CHECK_MESSAGE(c["pass"].get<bool>(), name);
  }

  // Rerunning the report alone rewrites identical bytes.
  const auto before = harness::snapshot(a / "o");
  REQUIRE(run({"report", "--out", a / "o"}).code == 0);
  CHECK(harness::snapshot(a / "o") == before);
}
