#include "flexgrid/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <ostream>
#include <random>
#include <set>
#include <thread>

#include "flexgrid/errors.hpp"
#include "flexgrid/powerflow.hpp"
#include "flexgrid/sensitivity.hpp"

namespace flexgrid {

// ---------------------------------------------------------------------------
// Loading manipulation

std::map<std::string, std::string> feeder_of_transformers(const Network& net) {
    const RadialSystem mv = mv_system(net);
    std::map<std::string, std::string> out;
    for (const auto& lv : net.lv_grids) {
        int bus = mv.bus_index(lv.transformer.mv_bus);
        if (bus == 0) throw InputError("transformer sits on the slack bus; no feeder", lv.transformer.id);
        while (mv.edges[mv.parent_edge(bus)].from != 0) bus = mv.edges[mv.parent_edge(bus)].from;
        out[lv.transformer.id] = mv.edges[mv.parent_edge(bus)].id;
    }
    return out;
}

std::map<std::string, std::vector<cplx>> allocate_loads_by_rating(
    const Network& net, const std::map<std::string, std::vector<cplx>>& feeder_profiles) {
    const auto feeder = feeder_of_transformers(net);
    std::map<std::string, double> feeder_kva;
    for (const auto& lv : net.lv_grids) feeder_kva[feeder.at(lv.transformer.id)] += lv.transformer.kva_rating;
    for (const auto& [f, series] : feeder_profiles) {
        if (!(feeder_kva[f] > 0.0)) throw InputError("feeder has zero total kVA", f);
    }
    std::map<std::string, std::vector<cplx>> out;
    for (const auto& lv : net.lv_grids) {
        const std::string& f = feeder.at(lv.transformer.id);
        auto it = feeder_profiles.find(f);
        if (it == feeder_profiles.end()) {
            throw InputError("no feeder profile for transformer", lv.transformer.id + " on " + f);
        }
        const double share = lv.transformer.kva_rating / feeder_kva.at(f);
        std::vector<cplx> s;
        s.reserve(it->second.size());
        for (const cplx& x : it->second) s.push_back(share * x);
        out[lv.transformer.id] = std::move(s);
    }
    return out;
}

InjectionProfile add_future_load(const Network& net, const InjectionProfile& profile,
                                 double kw_per_grid) {
    InjectionProfile out = profile;
    if (kw_per_grid == 0.0) return out;
    const std::size_t n = profile.size();
    for (const auto& lv : net.lv_grids) {
        std::map<std::string, std::pair<double, double>> energy;  // p, q
        double total = 0.0;
        for (const auto& b : lv.grid.buses) {
            auto it = profile.buses.find(b.id);
            if (it == profile.buses.end()) continue;
            double p = 0.0, q = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                p += it->second.p_load[t];
                q += it->second.q_load[t];
            }
            if (p > 0.0) {
                energy[b.id] = {p, q};
                total += p;
            }
        }
        if (!(total > 0.0)) throw InputError("LV grid has no load to scale the future adder on", lv.transformer.id);
        for (const auto& [bus, pq] : energy) {
            const double add_p = kw_per_grid * pq.first / total;
            const double add_q = add_p * pq.second / pq.first;
            auto& s = out.buses.at(bus);
            for (std::size_t t = 0; t < n; ++t) {
                s.p_load[t] += add_p;
                s.q_load[t] += add_q;
            }
        }
    }
    return out;
}

void scale_pv(Network& net, InjectionProfile& profile, double factor) {
    std::set<std::string> pv_buses;
    for (auto& lv : net.lv_grids) {
        for (auto& d : lv.grid.ders) {
            if (d.kind != DerKind::PV) continue;
            d.p_rating_kw *= factor;
            pv_buses.insert(d.bus);
        }
    }
    for (auto& [bus, s] : profile.buses) {
        if (!pv_buses.count(bus)) continue;
        for (auto& p : s.p_gen) p *= factor;
        for (auto& q : s.q_gen) q *= factor;
    }
}

double installed_pv_kwp(const Network& net) {
    double kwp = 0.0;
    for (const auto& lv : net.lv_grids) {
        for (const auto& d : lv.grid.ders) {
            if (d.kind == DerKind::PV) kwp += d.p_rating_kw;
        }
    }
    return kwp;
}

// ---------------------------------------------------------------------------
// Per-timestep pipeline

namespace {

struct Context {
    const ScenarioConfig& cfg;
    const Network& net;
    InjectionProfile truth;
    InjectionProfile historical;  // current loading, the DSO's feeder records
    RadialSystem combined;
    RadialSystem mv;
    std::vector<RadialSystem> lv;
    std::vector<int> tx_edge;    // transformer link index in `combined`
    std::vector<int> tx_mv_bus;  // transformer MV bus index in `mv`
    std::map<std::string, std::string> feeder;
    std::vector<FlexDirection> directions;

    Context(const ScenarioConfig& c, const Network& n, const InjectionProfile& profile)
        : cfg(c), net(n),
          truth(c.loading == Loading::Future ? add_future_load(n, profile, c.future_load_kw) : profile),
          historical(profile), combined(combined_system(n)), mv(mv_system(n)),
          feeder(feeder_of_transformers(n)), directions(FlexDirection::angular(c.directions)) {
        for (std::size_t g = 0; g < n.lv_grids.size(); ++g) {
            lv.push_back(lv_system(n, g));
            tx_edge.push_back(combined.edge_index(n.lv_grids[g].transformer.id));
            tx_mv_bus.push_back(mv.bus_index(n.lv_grids[g].transformer.mv_bus));
        }
    }
};

std::seed_seq make_seed(std::uint64_t seed, std::size_t t, std::size_t grid, unsigned purpose) {
    return std::seed_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                         static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(grid), purpose};
}

std::uint64_t derive_seed(std::uint64_t seed, std::size_t t, std::size_t grid, unsigned purpose) {
    auto seq = make_seed(seed, t, grid, purpose);
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<cplx> mv_fixed_injections(const Context& ctx, std::size_t t) {
    return injections_pu(ctx.mv, ctx.truth, t);
}

FlexArea estimate_flex_area(const Context& ctx, std::size_t g, std::size_t t, double root_v) {
    const RadialSystem& lv = ctx.lv[g];
    const LvGrid& grid = ctx.net.lv_grids[g];
    const std::vector<cplx> s0 = injections_pu(lv, ctx.truth, t);
    const int n = ctx.cfg.probe_samples;

    std::mt19937_64 rng(derive_seed(ctx.cfg.seed, t, g, 1));
    std::uniform_real_distribution<double> delta(-ctx.cfg.probe_amplitude, ctx.cfg.probe_amplitude);
    std::vector<std::vector<cplx>> samples(static_cast<std::size_t>(n), s0);
    for (int r = 0; r + 1 < n; ++r) {
        for (std::size_t b = 1; b < s0.size(); ++b) {
            const double dp = delta(rng);
            const double dq = delta(rng);
            samples[static_cast<std::size_t>(r)][b] += cplx(dp, dq);
        }
    }
    const MeasurementWindow w = synthesize_measurements(
        lv, samples, root_v, NoiseSpec{ctx.cfg.noise_sigma, derive_seed(ctx.cfg.seed, t, g, 2)});
    LvOperatingPoint op = make_operating_point(lv, estimate_sensitivities(w));
    const auto limits = der_flex_limits(grid, ctx.truth, t);
    return build_flex_area(grid.transformer.id, op, limits, ctx.directions);
}

const char* degeneracy_name(Degeneracy d) {
    switch (d) {
        case Degeneracy::Polygon: return "polygon";
        case Degeneracy::Segment: return "segment";
        case Degeneracy::Point: return "point";
    }
    return "point";
}

TimestepResult evaluate_timestep(const Context& ctx, CaseKind kind, std::size_t t,
                                 OpfSolution* opf_out = nullptr) {
    const ScenarioConfig& cfg = ctx.cfg;
    const double sb = ctx.net.s_base_kva;
    const std::vector<cplx> s_true = injections_pu(ctx.combined, ctx.truth, t);
    const PfSolution measured = solve_pf(ctx.combined, s_true, cfg.operating_slack_v);

    std::vector<cplx> mv_inj = mv_fixed_injections(ctx, t);
    cplx baseline = measured.slack_power;
    if (kind == CaseKind::Base) {
        const std::vector<cplx> s_hist = injections_pu(ctx.combined, ctx.historical, t);
        const PfSolution hist = solve_pf(ctx.combined, s_hist, cfg.operating_slack_v);
        std::map<std::string, std::vector<cplx>> feeders;
        for (std::size_t g = 0; g < ctx.lv.size(); ++g) {
            auto& series = feeders[ctx.feeder.at(ctx.net.lv_grids[g].transformer.id)];
            if (series.empty()) series.assign(1, cplx(0.0, 0.0));
            series[0] += hist.send_power[static_cast<std::size_t>(ctx.tx_edge[g])];
        }
        const auto alloc = allocate_loads_by_rating(ctx.net, feeders);
        baseline = cplx(0.0, 0.0);
        for (const auto& s : mv_inj) baseline -= s;
        for (std::size_t g = 0; g < ctx.lv.size(); ++g) {
            const cplx flow = alloc.at(ctx.net.lv_grids[g].transformer.id)[0];
            mv_inj[static_cast<std::size_t>(ctx.tx_mv_bus[g])] -= flow;
            baseline += flow;
        }
    } else {
        for (std::size_t g = 0; g < ctx.lv.size(); ++g) {
            mv_inj[static_cast<std::size_t>(ctx.tx_mv_bus[g])] -=
                measured.send_power[static_cast<std::size_t>(ctx.tx_edge[g])];
        }
    }

    std::map<std::string, FlexArea> areas;
    std::map<std::string, std::size_t> grid_at_bus;
    for (std::size_t g = 0; g < ctx.lv.size(); ++g) {
        const auto& tx = ctx.net.lv_grids[g].transformer;
        grid_at_bus[tx.mv_bus] = g;
        if (kind == CaseKind::Control) {
            const int root = ctx.combined.bus_index(tx.lv_root);
            areas[tx.mv_bus] = estimate_flex_area(ctx, g, t, measured.v_mag(static_cast<std::size_t>(root)));
        } else {
            areas[tx.mv_bus] = hull_area(tx.id, {});
        }
    }

    MvOpfOptions opts;
    opts.voltage_margin = cfg.voltage_margin;
    opts.slack_baseline = baseline;
    const OpfSolution opf = solve_mv_opf(ctx.mv, mv_inj, areas, cfg.weights, cfg.slack_range, opts);
    if (opf_out) *opf_out = opf;

    TimestepResult r;
    r.timestamp = ctx.truth.timestamps[t];
    r.slack_v = opf.slack_v;
    r.objective = opf.objective.total();
    r.max_soc_gap = check_soc_exactness(opf);
    r.controls = opf.controls;
    {
        const PfSolution check = solve_pf(ctx.mv, opf.injections, opf.slack_v);
        for (std::size_t b = 0; b < ctx.mv.bus_count(); ++b) {
            r.opf_pf_v_mismatch = std::max(
                r.opf_pf_v_mismatch, std::abs(check.v_mag(b) - std::sqrt(std::max(0.0, opf.v[b]))));
        }
    }

    std::vector<cplx> s_score = s_true;
    if (kind == CaseKind::Control) {
        for (const auto& c : opf.controls) {
            const FlexArea& area = areas.at(c.bus);
            for (const auto& sp : setpoints_for(area, c.dp_kw, c.dq_kvar)) {
                s_score[static_cast<std::size_t>(ctx.combined.bus_index(sp.bus))] += cplx(sp.dp, sp.dq) / sb;
            }
        }
        for (std::size_t g = 0; g < ctx.lv.size(); ++g) {
            const FlexArea& area = areas.at(ctx.net.lv_grids[g].transformer.mv_bus);
            r.flex.push_back({area.transformer_id, area.area(), area.max_dp_reach(),
                              degeneracy_name(area.degeneracy), area.pre_existing_violation});
        }
    }
    const PfSolution scored = solve_pf(ctx.combined, s_score, opf.slack_v);
    r.losses_kwh = losses_kwh(ctx.combined, scored, cfg.step_minutes);
    r.violation_chf = evaluate_penalties(squared_state(scored), ctx.combined).chf;
    r.slack_power_kw = scored.slack_power * sb;
    return r;
}

[[noreturn]] void rethrow_with_context(const std::string& ctx) {
    try {
        throw;
    } catch (const TopologyError&) {
        throw;
    } catch (const InputError& e) {
        throw InputError(ctx + ": " + e.what());
    } catch (const ConvergenceError& e) {
        throw ConvergenceError(ctx + ": " + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(ctx + ": " + e.what(), e.condition_number());
    } catch (const InfeasibleError& e) {
        throw InfeasibleError(ctx + ": " + e.what());
    }
}

std::vector<std::size_t> horizon_steps(const ScenarioConfig& cfg, const InjectionProfile& profile) {
    const double base = profile.step_minutes();
    const double ratio = cfg.step_minutes / base;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0) {
        throw InputError("step_minutes must be a multiple of the profile spacing");
    }
    const auto stride = static_cast<std::size_t>(std::round(ratio));
    const auto count = static_cast<std::size_t>(std::round(cfg.horizon_hours * 60.0 / cfg.step_minutes));
    if ((count - 1) * stride >= profile.size()) {
        throw InputError("profiles do not cover the configured horizon");
    }
    std::vector<std::size_t> steps;
    for (std::size_t k = 0; k < count; ++k) steps.push_back(k * stride);
    return steps;
}

template <class Fn>
std::vector<TimestepResult> run_indexed(const std::vector<std::size_t>& steps, int jobs, Fn fn) {
    std::vector<TimestepResult> out(steps.size());
    std::vector<std::exception_ptr> errors(steps.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t k = next++; k < steps.size(); k = next++) {
            try {
                out[k] = fn(steps[k]);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const int n = std::max(1, std::min<int>(jobs, static_cast<int>(steps.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < n; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

}  // namespace

ScenarioReport run_case(const ScenarioConfig& cfg, const Network& net, const InjectionProfile& profile) {
    cfg.validate();
    const Context ctx(cfg, net, profile);
    const auto steps = horizon_steps(cfg, profile);
    ScenarioReport report;
    report.case_kind = cfg.case_kind;
    report.loading = cfg.loading;
    report.seed = cfg.seed;
    report.timesteps = run_indexed(steps, cfg.jobs, [&](std::size_t t) {
        try {
            return evaluate_timestep(ctx, cfg.case_kind, t);
        } catch (const Error&) {
            rethrow_with_context(std::string(to_string(cfg.case_kind)) + " case at " +
                                 format_rfc3339(profile.timestamps[t]));
        }
    });
    compute_kpis(report);
    if (cfg.case_kind == CaseKind::Control && cfg.hosting_capacity) {
        if (auto hc = hosting_capacity(cfg, net, profile)) {
            report.hosting_capacity_kwp = hc->kwp;
            report.hosting_capacity_capped = hc->capped;
        }
    }
    return report;
}

TimestepResult run_timestep(const ScenarioConfig& cfg, const Network& net,
                            const InjectionProfile& profile, std::size_t t, OpfSolution* opf) {
    cfg.validate();
    if (t >= profile.size()) throw InputError("timestep index out of range", std::to_string(t));
    const Context ctx(cfg, net, profile);
    try {
        return evaluate_timestep(ctx, cfg.case_kind, t, opf);
    } catch (const Error&) {
        rethrow_with_context(std::string(to_string(cfg.case_kind)) + " case at " +
                             format_rfc3339(profile.timestamps[t]));
    }
}

void compute_kpis(ScenarioReport& report) {
    report.total_losses_kwh = 0.0;
    report.total_violation_chf = 0.0;
    report.flex_mv_lv_kw.reset();
    for (const auto& ts : report.timesteps) {
        report.total_losses_kwh += ts.losses_kwh;
        report.total_violation_chf += ts.violation_chf;
    }
    if (report.case_kind == CaseKind::Control) {
        double best = 0.0;
        for (const auto& ts : report.timesteps) {
            double sum = 0.0;
            for (const auto& f : ts.flex) sum += f.max_dp_kw;
            best = std::max(best, sum);
        }
        report.flex_mv_lv_kw = best;
    }
}

// ---------------------------------------------------------------------------
// Hosting capacity

long bisect_last_ok(long lo_ok, long hi_bad, const std::function<bool(long)>& ok) {
    while (hi_bad - lo_ok > 1) {
        const long mid = lo_ok + (hi_bad - lo_ok) / 2;
        if (ok(mid)) {
            lo_ok = mid;
        } else {
            hi_bad = mid;
        }
    }
    return lo_ok;
}

HostingResult search_hosting_capacity(double installed_kwp, double max_factor,
                                      const std::function<bool(double)>& ok) {
    const long start = std::max(1L, std::lround(installed_kwp));
    const long cap = std::max(start, std::lround(installed_kwp * max_factor));
    auto ok_long = [&](long kwp) { return ok(static_cast<double>(kwp)); };
    if (!ok_long(start)) {
        if (!ok_long(0)) return {0.0, false};
        return {static_cast<double>(bisect_last_ok(0, start, ok_long)), false};
    }
    long lo = start;
    long hi = std::min(cap, 2 * start);
    while (ok_long(hi)) {
        if (hi >= cap) return {static_cast<double>(cap), true};
        lo = hi;
        hi = std::min(cap, 2 * hi);
    }
    return {static_cast<double>(bisect_last_ok(lo, hi, ok_long)), false};
}

std::optional<HostingResult> hosting_capacity(const ScenarioConfig& cfg, const Network& net,
                                              const InjectionProfile& profile) {
    if (cfg.case_kind != CaseKind::Control) return std::nullopt;
    const double installed = installed_pv_kwp(net);
    if (!(installed > 0.0)) return HostingResult{0.0, false};

    std::vector<std::pair<double, std::size_t>> by_pv;
    for (std::size_t t = 0; t < profile.size(); ++t) {
        double gen = 0.0;
        for (const auto& [bus, s] : profile.buses) gen += s.p_gen[t];
        by_pv.emplace_back(-gen, t);
    }
    std::sort(by_pv.begin(), by_pv.end());
    std::vector<std::size_t> steps;
    for (std::size_t k = 0; k < by_pv.size() && static_cast<int>(k) < cfg.hosting_timesteps; ++k) {
        steps.push_back(by_pv[k].second);
    }
    std::sort(steps.begin(), steps.end());

    auto ok = [&](double kwp) {
        Network scaled_net = net;
        InjectionProfile scaled = profile;
        scale_pv(scaled_net, scaled, kwp / installed);
        const Context ctx(cfg, scaled_net, scaled);
        double chf = 0.0;
        try {
            for (const auto& r : run_indexed(steps, cfg.jobs, [&](std::size_t t) {
                     return evaluate_timestep(ctx, CaseKind::Control, t);
                 })) {
                chf += r.violation_chf;
            }
        } catch (const ConvergenceError&) {
            return false;
        }
        return chf <= 1e-6;
    };
    return search_hosting_capacity(installed, cfg.hosting_max_factor, ok);
}

// ---------------------------------------------------------------------------
// Output

nlohmann::json to_json(const TimestepResult& ts, CaseKind kind) {
    nlohmann::json t;
    t["timestamp"] = format_rfc3339(ts.timestamp);
    t["losses_kwh"] = ts.losses_kwh;
    t["violation_chf"] = ts.violation_chf;
    t["slack_p"] = ts.slack_power_kw.real();
    t["slack_q"] = ts.slack_power_kw.imag();
    t["slack_v"] = ts.slack_v;
    t["objective"] = ts.objective;
    t["max_soc_gap"] = ts.max_soc_gap;
    t["opf_pf_v_mismatch"] = ts.opf_pf_v_mismatch;
    if (kind == CaseKind::Control) {
        t["flex"] = nlohmann::json::array();
        for (const auto& f : ts.flex) {
            t["flex"].push_back({{"transformer_id", f.transformer_id},
                                 {"area", f.area},
                                 {"max_dp_kw", f.max_dp_kw},
                                 {"degeneracy", f.degeneracy},
                                 {"pre_existing_violation", f.pre_existing_violation}});
        }
        t["controls"] = nlohmann::json::array();
        for (const auto& c : ts.controls) {
            t["controls"].push_back({{"bus", c.bus}, {"dp", c.dp_kw}, {"dq", c.dq_kvar}});
        }
    }
    return t;
}

nlohmann::json ScenarioReport::to_json() const {
    nlohmann::json j;
    j["case"] = to_string(case_kind);
    j["scenario"] = to_string(loading);
    j["seed"] = seed;
    nlohmann::json agg;
    agg["total_losses_kwh"] = total_losses_kwh;
    agg["total_violation_chf"] = total_violation_chf;
    agg["flex_mv_lv_kw"] = flex_mv_lv_kw ? nlohmann::json(*flex_mv_lv_kw) : nlohmann::json("undefined");
    agg["hosting_capacity_kwp"] =
        hosting_capacity_kwp ? nlohmann::json(*hosting_capacity_kwp) : nlohmann::json("undefined");
    if (hosting_capacity_kwp) agg["hosting_capacity_capped"] = hosting_capacity_capped;
    j["aggregates"] = agg;
    j["timesteps"] = nlohmann::json::array();
    for (const auto& ts : timesteps) j["timesteps"].push_back(flexgrid::to_json(ts, case_kind));
    return j;
}

void write_timeseries_csv(std::ostream& out, const ScenarioReport& report) {
    out << "timestamp,case,losses_kwh,violation_chf,slack_p,slack_q\n";
    out << std::setprecision(12);
    for (const auto& ts : report.timesteps) {
        out << format_rfc3339(ts.timestamp) << ',' << to_string(report.case_kind) << ','
            << ts.losses_kwh << ',' << ts.violation_chf << ',' << ts.slack_power_kw.real() << ','
            << ts.slack_power_kw.imag() << '\n';
    }
}

}  // namespace flexgrid
