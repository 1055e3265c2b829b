#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <random>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "flexgrid/errors.hpp"
#include "flexgrid/grid_model.hpp"
#include "flexgrid/lv_flex.hpp"
#include "flexgrid/mv_opf.hpp"
#include "flexgrid/powerflow.hpp"
#include "flexgrid/scenario.hpp"
#include "flexgrid/sensitivity.hpp"

namespace flexgrid::cli {

namespace {

namespace fs = std::filesystem;

struct Options {
    std::string network;
    std::string profiles;
    std::string config;
    std::string out;
    std::string grid;
    std::string timestep;
    std::string case_kind;
    std::string loading;
    std::string method = "analytical";
    std::vector<std::string> inputs;
    std::uint64_t seed = 42;
    std::optional<std::uint64_t> run_seed;  // overrides the config when set
    std::optional<int> jobs;
    int directions = 8;
    double slack_v = 1.0;
    double noise = 0.0;
    int samples = 288;
};

fs::path output_dir(const Options& o) {
    fs::path dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw InputError("cannot create output directory", dir.string());
    return dir;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write file", path.string());
    f << content;
}

std::size_t resolve_timestep(const InjectionProfile& profile, const std::string& text) {
    if (text.empty()) return 0;
    if (text.find_first_not_of("0123456789") == std::string::npos) {
        const std::size_t t = std::stoul(text);
        if (t >= profile.size()) throw InputError("timestep index out of range", text);
        return t;
    }
    const std::int64_t ts = parse_rfc3339(text);
    for (std::size_t t = 0; t < profile.size(); ++t) {
        if (profile.timestamps[t] == ts) return t;
    }
    throw InputError("timestamp not found in profiles", text);
}

/// Network-only injections with every DER at its rating.
std::vector<cplx> nameplate_injections(const RadialSystem& sys, const LvGrid& lv, double s_base) {
    std::vector<cplx> s(sys.bus_count(), cplx(0.0, 0.0));
    for (const auto& d : lv.grid.ders) {
        const double sign = d.kind == DerKind::Load ? -1.0 : 1.0;
        s[static_cast<std::size_t>(sys.bus_index(d.bus))] += sign * d.p_rating_kw / s_base;
    }
    return s;
}

int cmd_validate(const Options& o, std::ostream& out) {
    const Network net = load_network(o.network);
    out << "network " << o.network << ": " << net.bus_count() << " buses, " << net.branch_count()
        << " branches, " << net.lv_grids.size() << " LV grids, " << net.der_count() << " DERs\n";
    if (!o.profiles.empty()) {
        const InjectionProfile p = load_profiles(o.profiles);
        out << "profiles " << o.profiles << ": " << p.size() << " timesteps, " << p.buses.size()
            << " buses\n";
    }
    return 0;
}

int cmd_pf(const Options& o, std::ostream& out) {
    const Network net = load_network(o.network);
    const InjectionProfile profile = load_profiles(o.profiles);
    const RadialSystem sys = combined_system(net);
    std::vector<std::size_t> steps;
    if (o.timestep.empty()) {
        for (std::size_t t = 0; t < profile.size(); ++t) steps.push_back(t);
    } else {
        steps.push_back(resolve_timestep(profile, o.timestep));
    }
    std::ostringstream bus, branch;
    write_bus_csv_header(bus);
    write_branch_csv_header(branch);
    double losses = 0.0;
    int max_iter = 0;
    for (std::size_t t : steps) {
        const PfSolution pf = solve_pf(sys, injections_pu(sys, profile, t), o.slack_v);
        const std::string ts = format_rfc3339(profile.timestamps[t]);
        write_bus_csv(bus, ts, sys, pf);
        write_branch_csv(branch, ts, sys, pf);
        losses += losses_kwh(sys, pf, profile.step_minutes());
        max_iter = std::max(max_iter, pf.iterations);
    }
    const fs::path dir = output_dir(o);
    write_file(dir / "pf_bus.csv", bus.str());
    write_file(dir / "pf_branch.csv", branch.str());
    out << steps.size() << " power flows, losses " << std::fixed << std::setprecision(3) << losses
        << " kWh, max " << max_iter << " iterations\n";
    return 0;
}

struct LvCase {
    const LvGrid* grid;
    RadialSystem sys;
    std::vector<cplx> s;
    std::vector<DerFlexLimits> limits;
};

LvCase lv_case(const Network& net, const Options& o) {
    const std::size_t g = net.lv_grid_index(o.grid);
    LvCase c{&net.lv_grids[g], lv_system(net, g), {}, {}};
    if (o.profiles.empty()) {
        c.s = nameplate_injections(c.sys, *c.grid, net.s_base_kva);
        c.limits = der_flex_limits_nameplate(*c.grid);
    } else {
        const InjectionProfile profile = load_profiles(o.profiles);
        const std::size_t t = resolve_timestep(profile, o.timestep);
        c.s = injections_pu(c.sys, profile, t);
        c.limits = der_flex_limits(*c.grid, profile, t);
    }
    return c;
}

SensitivityMatrix lv_sensitivities(const LvCase& c, const Options& o) {
    if (o.method == "analytical") {
        AnalyticalOptions opts;
        opts.compute_validity_radius = false;
        return analytical_sensitivities(c.sys, c.s, o.slack_v, opts);
    }
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> delta(-0.01, 0.01);
    std::vector<std::vector<cplx>> samples(static_cast<std::size_t>(o.samples), c.s);
    for (std::size_t r = 0; r + 1 < samples.size(); ++r) {
        for (std::size_t b = 1; b < c.s.size(); ++b) samples[r][b] += cplx(delta(rng), delta(rng));
    }
    const MeasurementWindow w =
        synthesize_measurements(c.sys, samples, o.slack_v, NoiseSpec{o.noise, o.seed + 1});
    return estimate_sensitivities(w);
}

int cmd_sens(const Options& o, std::ostream& out) {
    const Network net = load_network(o.network);
    const LvCase c = lv_case(net, o);
    const SensitivityMatrix k = lv_sensitivities(c, o);
    std::ostringstream csv;
    write_sensitivity_csv(csv, k);
    if (o.out.empty()) {
        out << csv.str();
    } else {
        const fs::path path = output_dir(o) / ("sens_" + o.grid + ".csv");
        write_file(path, csv.str());
        out << "wrote " << path.string() << "\n";
    }
    return 0;
}

int cmd_flex(const Options& o, std::ostream& out) {
    const Network net = load_network(o.network);
    const LvCase c = lv_case(net, o);
    const LvOperatingPoint op = make_operating_point(c.sys, lv_sensitivities(c, o));
    const FlexArea area =
        build_flex_area(c.grid->transformer.id, op, c.limits, FlexDirection::angular(o.directions));
    const std::string text = to_json(area).dump(2) + "\n";
    if (o.out.empty()) {
        out << text;
    } else {
        const fs::path path = output_dir(o) / ("flex_" + o.grid + ".json");
        write_file(path, text);
        out << "wrote " << path.string() << ": " << area.vertices.size() << " vertices, area "
            << std::fixed << std::setprecision(3) << area.area() << " kW*kvar\n";
    }
    return 0;
}

ScenarioConfig scenario_config(const Options& o) {
    ScenarioConfig cfg = o.config.empty() ? ScenarioConfig{} : load_config(o.config);
    if (!o.network.empty()) cfg.network_path = o.network;
    if (!o.profiles.empty()) cfg.profiles_path = o.profiles;
    if (!o.case_kind.empty()) cfg.case_kind = parse_case(o.case_kind);
    if (!o.loading.empty()) cfg.loading = parse_loading(o.loading);
    if (o.run_seed) cfg.seed = *o.run_seed;
    if (o.jobs) cfg.jobs = *o.jobs;
    if (cfg.network_path.empty()) throw InputError("no network given (--network or config 'network')");
    if (cfg.profiles_path.empty()) throw InputError("no profiles given (--profiles or config 'profiles')");
    cfg.validate();
    return cfg;
}

int cmd_opf(const Options& o, std::ostream& out) {
    const ScenarioConfig cfg = scenario_config(o);
    const Network net = load_network(cfg.network_path);
    const InjectionProfile profile = load_profiles(cfg.profiles_path);
    const std::size_t t = resolve_timestep(profile, o.timestep);
    OpfSolution opf;
    const TimestepResult r = run_timestep(cfg, net, profile, t, &opf);
    nlohmann::json j;
    j["case"] = to_string(cfg.case_kind);
    j["scenario"] = to_string(cfg.loading);
    j["result"] = to_json(r, cfg.case_kind);
    j["opf"] = to_json(opf);
    const std::string text = j.dump(2) + "\n";
    if (o.out.empty()) {
        out << text;
    } else {
        const fs::path path = output_dir(o) / (std::string("opf_") + to_string(cfg.case_kind) + "_" +
                                               to_string(cfg.loading) + "_" + std::to_string(t) + ".json");
        write_file(path, text);
        out << "wrote " << path.string() << "\n";
    }
    return 0;
}

int cmd_run(const Options& o, std::ostream& out) {
    const ScenarioConfig cfg = scenario_config(o);
    const Network net = load_network(cfg.network_path);
    const InjectionProfile profile = load_profiles(cfg.profiles_path);
    const ScenarioReport report = run_case(cfg, net, profile);
    const fs::path dir = output_dir(o);
    const std::string stem = std::string(to_string(cfg.case_kind)) + "_" + to_string(cfg.loading);
    write_file(dir / ("report_" + stem + ".json"), report.to_json().dump(2) + "\n");
    std::ostringstream csv;
    write_timeseries_csv(csv, report);
    write_file(dir / ("timeseries_" + stem + ".csv"), csv.str());
    out << stem << ": losses " << std::fixed << std::setprecision(3) << report.total_losses_kwh
        << " kWh, violations " << report.total_violation_chf << " CHF";
    if (report.flex_mv_lv_kw) out << ", flex " << *report.flex_mv_lv_kw << " kW";
    if (report.hosting_capacity_kwp) {
        out << ", hosting " << *report.hosting_capacity_kwp << " kWp"
            << (report.hosting_capacity_capped ? " (capped)" : "");
    }
    out << "\n";
    return 0;
}

std::string kpi_cell(const nlohmann::json& v) {
    if (v.is_number()) {
        std::ostringstream s;
        s << std::setprecision(12) << v.get<double>();
        return s.str();
    }
    return v.get<std::string>();
}

int cmd_report(const Options& o, std::ostream& out) {
    std::ostringstream csv;
    csv << "case,scenario,losses_kwh,violation_chf,flex_mv_lv_kw,hosting_capacity_kwp\n";
    for (const auto& path : o.inputs) {
        std::ifstream f(path);
        if (!f) throw InputError("cannot open file", path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(f);
            const auto& a = j.at("aggregates");
            csv << j.at("case").get<std::string>() << ',' << j.at("scenario").get<std::string>() << ','
                << kpi_cell(a.at("total_losses_kwh")) << ',' << kpi_cell(a.at("total_violation_chf"))
                << ',' << kpi_cell(a.at("flex_mv_lv_kw")) << ','
                << kpi_cell(a.at("hosting_capacity_kwp")) << '\n';
        } catch (const nlohmann::json::exception& e) {
            throw InputError(std::string("not a scenario report: ") + e.what(), path);
        }
    }
    const fs::path path = output_dir(o) / "kpis.csv";
    write_file(path, csv.str());
    out << csv.str();
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Flexibility-aware operation of MV/LV distribution grids", "flexgrid"};
    app.require_subcommand(1, 1);
    Options o;

    auto network = [&](CLI::App* sub, bool required) {
        auto* opt = sub->add_option("--network", o.network, "Network JSON file");
        if (required) opt->required();
    };
    auto profiles = [&](CLI::App* sub, const std::string& help) {
        sub->add_option("--profiles", o.profiles, help);
    };
    auto timestep = [&](CLI::App* sub) {
        sub->add_option("--timestep", o.timestep, "Profile row: index or RFC3339 timestamp (default: first)");
    };
    auto out_dir = [&](CLI::App* sub, const std::string& help) {
        sub->add_option("--out", o.out, help);
    };
    auto lv_method = [&](CLI::App* sub) {
        sub->add_option("--grid", o.grid, "LV grid, by transformer id")->required();
        sub->add_option("--method", o.method, "Sensitivity source")
            ->check(CLI::IsMember({"analytical", "estimated"}))
            ->capture_default_str();
        sub->add_option("--slack-v", o.slack_v, "LV root voltage, pu")->capture_default_str();
        sub->add_option("--seed", o.seed, "Seed of the probing window (estimated)")->capture_default_str();
        sub->add_option("--noise", o.noise, "Relative measurement noise (estimated)")->capture_default_str();
        sub->add_option("--samples", o.samples, "Probing window length (estimated)")
            ->check(CLI::Range(2, 1000000))
            ->capture_default_str();
    };
    auto scenario = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Scenario config file (key = value)");
        network(sub, false);
        profiles(sub, "Profiles CSV (overrides config)");
        sub->add_option("--case", o.case_kind, "Operating case (overrides config)")
            ->check(CLI::IsMember({"base", "monitoring", "control"}));
        sub->add_option("--scenario", o.loading, "Loading scenario (overrides config)")
            ->check(CLI::IsMember({"current", "future"}));
        sub->add_option("--seed", o.run_seed, "Seed of probing and noise (overrides config; default 42)");
        sub->add_option("--jobs", o.jobs, "Worker threads across timesteps (overrides config; default 1)")
            ->check(CLI::Range(1, 1024));
    };

    auto* validate = app.add_subcommand("validate", "Check a network (and optionally profiles)");
    network(validate, true);
    profiles(validate, "Profiles CSV");

    auto* pf = app.add_subcommand("pf", "Exact power flow of the whole network");
    network(pf, true);
    pf->add_option("--profiles", o.profiles, "Profiles CSV")->required();
    pf->add_option("--timestep", o.timestep, "Profile row: index or RFC3339 timestamp (default: all)");
    pf->add_option("--slack-v", o.slack_v, "Slack voltage, pu")->capture_default_str();
    out_dir(pf, "Output directory for pf_bus.csv and pf_branch.csv");

    auto* sens = app.add_subcommand("sens", "Voltage and current sensitivities of one LV grid");
    network(sens, true);
    profiles(sens, "Profiles CSV (default: DERs at nameplate)");
    timestep(sens);
    lv_method(sens);
    out_dir(sens, "Output directory for sens_<grid>.csv (default: stdout)");

    auto* flex = app.add_subcommand("flex", "PQ flexibility area of one LV grid");
    network(flex, true);
    profiles(flex, "Profiles CSV (default: DERs at nameplate)");
    timestep(flex);
    lv_method(flex);
    flex->add_option("--directions", o.directions, "Number of objective directions")
        ->check(CLI::Range(3, 3600))
        ->capture_default_str();
    out_dir(flex, "Output directory for flex_<grid>.json (default: stdout)");

    auto* opf = app.add_subcommand("opf", "MV OPF of one timestep");
    scenario(opf);
    timestep(opf);
    out_dir(opf, "Output directory for opf_<case>_<scenario>_<t>.json (default: stdout)");

    auto* run_cmd = app.add_subcommand("run", "Run one case over the configured horizon");
    scenario(run_cmd);
    out_dir(run_cmd, "Output directory for report and timeseries (default: .)");

    auto* report = app.add_subcommand("report", "Tabulate KPIs of scenario reports into kpis.csv");
    report->add_option("reports", o.inputs, "Report JSON files")->required()->check(CLI::ExistingFile);
    out_dir(report, "Output directory for kpis.csv (default: .)");

    try {
        std::vector<std::string> args;
        for (int k = argc - 1; k > 0; --k) args.emplace_back(argv[k]);
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (validate->parsed()) return cmd_validate(o, out);
        if (pf->parsed()) return cmd_pf(o, out);
        if (sens->parsed()) return cmd_sens(o, out);
        if (flex->parsed()) return cmd_flex(o, out);
        if (opf->parsed()) return cmd_opf(o, out);
        if (run_cmd->parsed()) return cmd_run(o, out);
        if (report->parsed()) return cmd_report(o, out);
    } catch (const InputError& e) {
        err << "input error: " << e.what() << "\n";
        return 2;
    } catch (const ConvergenceError& e) {
        err << "convergence error: " << e.what() << "\n";
        return 1;
    } catch (const InfeasibleError& e) {
        err << "infeasible: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace flexgrid::cli
