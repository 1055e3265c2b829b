#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "flexgrid/grid_model.hpp"
#include "flexgrid/lv_flex.hpp"
#include "flexgrid/mv_opf.hpp"

namespace flexgrid {

enum class CaseKind { Base, Monitoring, Control };
enum class Loading { Current, Future };

const char* to_string(CaseKind c);
const char* to_string(Loading l);
CaseKind parse_case(const std::string& s);
Loading parse_loading(const std::string& s);

struct ScenarioConfig {
    std::string network_path;
    std::string profiles_path;
    CaseKind case_kind = CaseKind::Base;
    Loading loading = Loading::Current;
    double future_load_kw = 500.0;   // added per LV grid in the future scenario
    double horizon_hours = 24.0;
    double step_minutes = 10.0;
    WeightConfig weights;
    SlackRange slack_range;
    int directions = 8;
    double noise_sigma = 0.001;      // relative measurement noise
    std::uint64_t seed = 42;
    double voltage_margin = 0.002;   // pu, MV OPF bounds tightened by this much
    int probe_samples = 288;
    double probe_amplitude = 0.01;   // pu, uniform injection deltas of the probing window
    double operating_slack_v = 1.03; // slack setpoint before optimization
    int jobs = 1;
    bool hosting_capacity = true;    // computed for the Control case only
    int hosting_timesteps = 3;       // highest-PV timesteps checked
    double hosting_max_factor = 8.0; // search cap, multiple of installed kWp

    void validate() const;
};

/// Flat `key = value` file; `#` starts a comment; relative paths resolve
/// against the file's directory. Unknown keys are errors.
ScenarioConfig parse_config(std::string_view text, const std::string& base_dir = ".",
                            const std::string& source = "<string>");
ScenarioConfig load_config(const std::string& path);

/// First branch on the path from the slack to each transformer's MV bus.
std::map<std::string, std::string> feeder_of_transformers(const Network& net);

/// Splits each feeder's series over its transformers by kVA rating.
/// Keys of `feeder_profiles` are feeder branch ids; result is keyed by
/// transformer id.
std::map<std::string, std::vector<cplx>> allocate_loads_by_rating(
    const Network& net, const std::map<std::string, std::vector<cplx>>& feeder_profiles);

/// Adds `kw_per_grid` of constant load to every LV grid, spread over its
/// load buses in proportion to their daily consumption; reactive power keeps
/// each bus's energy-weighted ratio.
InjectionProfile add_future_load(const Network& net, const InjectionProfile& profile,
                                 double kw_per_grid);

/// Multiplies every PV rating and PV generation series by `factor`.
void scale_pv(Network& net, InjectionProfile& profile, double factor);
double installed_pv_kwp(const Network& net);

struct FlexSummary {
    std::string transformer_id;
    double area = 0.0;        // kW * kvar
    double max_dp_kw = 0.0;
    std::string degeneracy;
    bool pre_existing_violation = false;
};

struct TimestepResult {
    std::int64_t timestamp = 0;
    double losses_kwh = 0.0;
    double violation_chf = 0.0;
    cplx slack_power_kw;      // kW / kvar drawn from the slack
    double slack_v = 0.0;
    double objective = 0.0;
    double max_soc_gap = 0.0;
    double opf_pf_v_mismatch = 0.0;  // max | |V|_PF - sqrt(v_OPF) | over MV buses
    std::vector<FlexSummary> flex;
    std::vector<FlexControl> controls;
};

struct ScenarioReport {
    CaseKind case_kind = CaseKind::Base;
    Loading loading = Loading::Current;
    std::uint64_t seed = 0;
    std::vector<TimestepResult> timesteps;
    double total_losses_kwh = 0.0;
    double total_violation_chf = 0.0;
    std::optional<double> flex_mv_lv_kw;         // Control only
    std::optional<double> hosting_capacity_kwp;  // Control only
    bool hosting_capacity_capped = false;

    nlohmann::json to_json() const;
};

/// Runs one case over the configured horizon. Scoring always re-simulates the
/// decided setpoints with the exact power flow of MV and LV together.
ScenarioReport run_case(const ScenarioConfig& config, const Network& net,
                        const InjectionProfile& profile);

/// One timestep of `config.case_kind` at profile index `t`; `opf`, if given,
/// receives the MV OPF solution behind the decision.
TimestepResult run_timestep(const ScenarioConfig& config, const Network& net,
                            const InjectionProfile& profile, std::size_t t,
                            OpfSolution* opf = nullptr);

nlohmann::json to_json(const TimestepResult& result, CaseKind kind);

/// Fills the aggregates of `report` from its timesteps.
void compute_kpis(ScenarioReport& report);

/// Largest integer x in [lo_ok, hi_bad) with ok(x), given ok(lo_ok) and
/// !ok(hi_bad); ok is assumed monotone.
long bisect_last_ok(long lo_ok, long hi_bad, const std::function<bool(long)>& ok);

struct HostingResult {
    double kwp = 0.0;
    bool capped = false;
};

/// Doubling then bisection on total kWp with 1 kWp resolution. `ok(kwp)`
/// reports whether that installed capacity is violation-free.
HostingResult search_hosting_capacity(double installed_kwp, double max_factor,
                                      const std::function<bool(double)>& ok);

/// Largest uniform PV scaling (expressed in kWp) for which the Control
/// pipeline keeps zero violations at the highest-PV timesteps. Returns
/// nullopt for Base and Monitoring.
std::optional<HostingResult> hosting_capacity(const ScenarioConfig& config, const Network& net,
                                              const InjectionProfile& profile);

void write_timeseries_csv(std::ostream& out, const ScenarioReport& report);

}  // namespace flexgrid
