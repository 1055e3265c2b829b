#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "flexgrid");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Outcome o;
    o.code = flexgrid::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

std::string golden(const std::string& name) {
    return testing::read_file(std::string(FLEXGRID_GOLDEN_DIR) + "/" + name);
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("flexgrid_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("help text matches the golden files") {
    const Outcome top = invoke({"--help"});
    CHECK(top.code == 0);
    CHECK(top.out == golden("help.txt"));
    const Outcome run = invoke({"run", "--help"});
    CHECK(run.code == 0);
    CHECK(run.out == golden("help_run.txt"));
    const Outcome flex = invoke({"flex", "--help"});
    CHECK(flex.code == 0);
    CHECK(flex.out == golden("help_flex.txt"));
}

TEST_CASE("validate reports the network size") {
    const Outcome o = invoke({"validate", "--network", testing::data_path("fixture.json"), "--profiles",
                              testing::data_path("profiles.csv")});
    CHECK(o.code == 0);
    CHECK(o.out.find("18 buses") != std::string::npos);
}

TEST_CASE("usage and input errors exit with 2") {
    CHECK(invoke({}).code == 2);
    CHECK(invoke({"frobnicate"}).code == 2);
    CHECK(invoke({"validate"}).code == 2);
    const Outcome missing = invoke({"validate", "--network", "/nonexistent/net.json"});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("input error") != std::string::npos);
    const Outcome grid = invoke({"flex", "--network", testing::data_path("fixture.json"), "--grid", "T9"});
    CHECK(grid.code == 2);
    CHECK(invoke({"flex", "--network", testing::data_path("fixture.json"), "--grid", "T1", "--method", "guess"})
              .code == 2);
}

TEST_CASE("flex prints a polygon for a fixture grid") {
    const Outcome o = invoke({"flex", "--network", testing::data_path("fixture.json"), "--profiles",
                              testing::data_path("profiles.csv"), "--timestep", "75", "--grid", "T3"});
    REQUIRE(o.code == 0);
    const nlohmann::json j = nlohmann::json::parse(o.out);
    CHECK(j.at("transformer_id") == "T3");
    CHECK(j.at("vertices").size() >= 3);

    const fs::path dir = scratch_dir("flex");
    const Outcome est = invoke({"flex", "--network", testing::data_path("fixture.json"), "--grid", "T1", "--method",
                                "estimated", "--out", dir.string()});
    CHECK(est.code == 0);
    CHECK(fs::exists(dir / "flex_T1.json"));
}

TEST_CASE("sens and pf write their tables") {
    const fs::path dir = scratch_dir("pf");
    CHECK(invoke({"pf", "--network", testing::data_path("fixture.json"), "--profiles",
                  testing::data_path("profiles.csv"), "--timestep", "2024-06-21T12:00:00Z", "--out", dir.string()})
              .code == 0);
    CHECK(fs::exists(dir / "pf_bus.csv"));
    CHECK(fs::exists(dir / "pf_branch.csv"));
    CHECK(invoke({"sens", "--network", testing::data_path("fixture.json"), "--grid", "T2", "--out", dir.string()})
              .code == 0);
    CHECK(fs::exists(dir / "sens_T2.csv"));
}

TEST_CASE("run and report produce the KPI table") {
    const fs::path dir = scratch_dir("run");
    const Outcome o = invoke({"run", "--config", testing::data_path("scenario.toml"), "--case", "base", "--scenario",
                              "current", "--jobs", "2", "--out", dir.string()});
    REQUIRE(o.code == 0);
    const fs::path report = dir / "report_base_current.json";
    REQUIRE(fs::exists(report));
    CHECK(fs::exists(dir / "timeseries_base_current.csv"));
    const nlohmann::json j = nlohmann::json::parse(testing::read_file(report.string()));
    CHECK(j.at("timesteps").size() == 144);
    CHECK(j.at("aggregates").at("flex_mv_lv_kw") == "undefined");

    CHECK(invoke({"report", report.string(), "--out", dir.string()}).code == 0);
    const std::string kpis = testing::read_file((dir / "kpis.csv").string());
    CHECK(kpis.rfind("case,scenario,losses_kwh,violation_chf,flex_mv_lv_kw,hosting_capacity_kwp\n", 0) == 0);
    CHECK(kpis.find("base,current,") != std::string::npos);

    CHECK(invoke({"report", (dir / "absent.json").string()}).code == 2);
}
