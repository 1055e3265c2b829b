#include "flexgrid/mv_opf.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flexgrid/errors.hpp"

namespace flexgrid {


using Eigen::Index;

void WeightConfig::validate() const {
    for (double w : {w_l, w_v, w_lim, w_p, w_q}) {
        if (!std::isfinite(w) || w < 0.0) throw InputError("weights must be finite and non-negative");
    }
    if (w_v < 100.0 * w_l || w_lim < 100.0 * w_l) {
        throw InputError("violation weights w_v and w_lim must be at least 100 * w_l");
    }
}

namespace {

// Row-wise assembly of sparse-ish constraints into dense matrices.
struct RowBuilder {
    Index n;
    std::vector<std::vector<std::pair<Index, double>>> rows;
    std::vector<double> rhs;

    void add(std::vector<std::pair<Index, double>> coefs, double b) {
        rows.push_back(std::move(coefs));
        rhs.push_back(b);
    }
    Eigen::MatrixXd matrix() const {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Index>(rows.size()), n);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (auto [c, v] : rows[r]) m(static_cast<Index>(r), c) += v;
        }
        return m;
    }
    Eigen::VectorXd vector() const {
        return Eigen::Map<const Eigen::VectorXd>(rhs.data(), static_cast<Index>(rhs.size()));
    }
};

struct Control {
    std::string bus;
    int bus_index = 0;
    const FlexArea* area = nullptr;
    Index dp = -1, dq = -1, t = -1;  // variable indices
};

}  // namespace

OpfSolution solve_mv_opf(const RadialSystem& mv, const std::vector<cplx>& injections,
                         const std::map<std::string, FlexArea>& flex_areas,
                         const WeightConfig& weights, const SlackRange& slack_range,
                         const MvOpfOptions& opts) {
    weights.validate();
    if (!(slack_range.v_min > 0.0 && slack_range.v_min <= slack_range.v_max)) {
        throw InputError("slack voltage range must satisfy 0 < v_min <= v_max");
    }
    const Index nb = static_cast<Index>(mv.bus_count());
    const Index ne = static_cast<Index>(mv.edge_count());
    if (static_cast<Index>(injections.size()) != nb) {
        throw InputError("injection vector does not cover every MV bus");
    }
    for (const auto& e : mv.edges) {
        if (e.ideal) throw InputError("MV OPF does not accept ideal links", e.id);
    }
    const double sb = mv.s_base_kva;

    // Variable layout.
    Index nv = 0;
    const Index iv = nv; nv += nb;
    const Index ip = nv; nv += ne;
    const Index iq = nv; nv += ne;
    const Index il = nv; nv += ne;
    const Index ipsl = nv++;
    const Index iqsl = nv++;
    const Index ivdev = nv; nv += nb;
    const Index ildev = nv; nv += ne;
    std::vector<Control> controls;
    for (const auto& [bus, area] : flex_areas) {
        Control c;
        c.bus = bus;
        c.bus_index = mv.bus_index(bus);
        c.area = &area;
        if (area.degeneracy == Degeneracy::Polygon) {
            c.dp = nv++;
            c.dq = nv++;
        } else if (area.degeneracy == Degeneracy::Segment) {
            c.t = nv++;
        }
        controls.push_back(c);
    }
    const Index iep = weights.w_p > 0.0 ? nv++ : -1;
    const Index ieq = weights.w_q > 0.0 ? nv++ : -1;

    ConeProgram prog;
    prog.c = Eigen::VectorXd::Zero(nv);
    for (Index k = 0; k < ne; ++k) prog.c(il + k) = weights.w_l * mv.edges[static_cast<std::size_t>(k)].r;
    for (Index b = 0; b < nb; ++b) prog.c(ivdev + b) = weights.w_v;
    for (Index k = 0; k < ne; ++k) prog.c(ildev + k) = weights.w_lim;
    if (iep >= 0) prog.c(iep) = weights.w_p;
    if (ieq >= 0) prog.c(ieq) = weights.w_q;

    // Equalities: nodal balance and voltage drop.
    RowBuilder eq{nv, {}, {}};
    std::vector<const Control*> control_at(static_cast<std::size_t>(nb), nullptr);
    for (const auto& c : controls) control_at[static_cast<std::size_t>(c.bus_index)] = &c;
    for (Index j = 0; j < nb; ++j) {
        for (int part = 0; part < 2; ++part) {  // 0: active, 1: reactive
            const Index flow = part == 0 ? ip : iq;
            std::vector<std::pair<Index, double>> row;
            double rhs = part == 0 ? -injections[static_cast<std::size_t>(j)].real()
                                   : -injections[static_cast<std::size_t>(j)].imag();
            if (j == 0) {
                row.emplace_back(part == 0 ? ipsl : iqsl, 1.0);
            } else {
                const Index k = j - 1;
                const auto& e = mv.edges[static_cast<std::size_t>(k)];
                row.emplace_back(flow + k, 1.0);
                row.emplace_back(il + k, part == 0 ? -e.r : -e.x);
            }
            for (int c : mv.child_edges[static_cast<std::size_t>(j)]) row.emplace_back(flow + c, -1.0);
            if (const Control* ctl = control_at[static_cast<std::size_t>(j)]) {
                if (ctl->area->degeneracy == Degeneracy::Polygon) {
                    row.emplace_back(part == 0 ? ctl->dp : ctl->dq, 1.0);
                } else if (ctl->area->degeneracy == Degeneracy::Segment) {
                    const auto& a = ctl->area->vertices[0];
                    const auto& b = ctl->area->vertices[1];
                    const double a0 = part == 0 ? a.dp : a.dq;
                    const double b0 = part == 0 ? b.dp : b.dq;
                    row.emplace_back(ctl->t, (b0 - a0) / sb);
                    rhs -= a0 / sb;
                } else if (!ctl->area->vertices.empty()) {
                    const auto& a = ctl->area->vertices[0];
                    rhs -= (part == 0 ? a.dp : a.dq) / sb;
                }
            }
            eq.add(std::move(row), rhs);
        }
    }
    for (Index k = 0; k < ne; ++k) {
        const auto& e = mv.edges[static_cast<std::size_t>(k)];
        eq.add({{iv + e.to, 1.0},
                {iv + e.from, -1.0},
                {ip + k, 2.0 * e.r},
                {iq + k, 2.0 * e.x},
                {il + k, -(e.r * e.r + e.x * e.x)}},
               0.0);
    }
    // A pinned slack voltage has no interior as a pair of inequalities.
    const bool slack_fixed = slack_range.v_max - slack_range.v_min <= 1e-9;
    if (slack_fixed) eq.add({{iv, 1.0}}, slack_range.v_max * slack_range.v_max);
    prog.a = eq.matrix();
    prog.b = eq.vector();

    // Linear inequalities.
    RowBuilder in{nv, {}, {}};
    if (!slack_fixed) {
        in.add({{iv, -1.0}}, -slack_range.v_min * slack_range.v_min);
        in.add({{iv, 1.0}}, slack_range.v_max * slack_range.v_max);
    }
    const double margin = opts.voltage_margin;
    for (Index b = 0; b < nb; ++b) {
        const double hi = mv.v_max[static_cast<std::size_t>(b)] - margin;
        const double lo = mv.v_min[static_cast<std::size_t>(b)] + margin;
        in.add({{iv + b, 1.0}, {ivdev + b, -1.0}}, hi * hi);
        in.add({{iv + b, -1.0}, {ivdev + b, -1.0}}, -lo * lo);
        in.add({{ivdev + b, -1.0}}, 0.0);
    }
    for (Index k = 0; k < ne; ++k) {
        const double imax = mv.edges[static_cast<std::size_t>(k)].i_max;
        if (std::isfinite(imax)) in.add({{il + k, 1.0}, {ildev + k, -1.0}}, imax * imax);
        in.add({{ildev + k, -1.0}}, 0.0);
    }
    for (const auto& c : controls) {
        if (c.area->degeneracy == Degeneracy::Polygon) {
            for (const auto& h : c.area->halfplanes) in.add({{c.dp, h.a}, {c.dq, h.b}}, h.c / sb);
        } else if (c.area->degeneracy == Degeneracy::Segment) {
            in.add({{c.t, -1.0}}, 0.0);
            in.add({{c.t, 1.0}}, 1.0);
        }
    }
    if (iep >= 0) {
        in.add({{ipsl, 1.0}, {iep, -1.0}}, opts.slack_baseline.real());
        in.add({{ipsl, -1.0}, {iep, -1.0}}, -opts.slack_baseline.real());
    }
    if (ieq >= 0) {
        in.add({{iqsl, 1.0}, {ieq, -1.0}}, opts.slack_baseline.imag());
        in.add({{iqsl, -1.0}, {ieq, -1.0}}, -opts.slack_baseline.imag());
    }
    prog.linear_dim = static_cast<int>(in.rows.size());
    for (Index k = 0; k < ne; ++k) prog.soc_dims.push_back(4);

    // Rotated cones P^2 + Q^2 <= v_i l as ||(2P, 2Q, v_i/s - s l)|| <= v_i/s + s l.
    // Any s > 0 describes the same set; s near sqrt(v_i/l) balances the two
    // legs so the gap is resolved relative to P^2 + Q^2 rather than v_i^2.
    auto solve_scaled = [&](const std::vector<double>& sigma) {
        RowBuilder g = in;
        for (Index k = 0; k < ne; ++k) {
            const Index vi = iv + mv.edges[static_cast<std::size_t>(k)].from;
            const double sk = sigma[static_cast<std::size_t>(k)];
            g.add({{vi, -1.0 / sk}, {il + k, -sk}}, 0.0);
            g.add({{ip + k, -2.0}}, 0.0);
            g.add({{iq + k, -2.0}}, 0.0);
            g.add({{vi, -1.0 / sk}, {il + k, sk}}, 0.0);
        }
        prog.g = g.matrix();
        prog.h = g.vector();
        const ConeResult res = solve_cone_program(prog, opts.cone);
        const double rel_gap = res.gap / std::max(1e-9, std::abs(res.primal_objective));
        const bool certified = res.status == ConeStatus::Optimal ||
                               (res.primal_residual <= 1e-7 && res.dual_residual <= 1e-7 &&
                                (res.gap <= 1e-8 || rel_gap <= 1e-7));
        if (!certified) {
            std::ostringstream msg;
            msg << "MV OPF solver did not converge (status " << to_string(res.status) << ", "
                << res.iterations << " iterations, primal residual " << res.primal_residual
                << ", dual residual " << res.dual_residual << ", gap " << res.gap << ")";
            throw ConvergenceError(msg.str());
        }
        return res;
    };

    ConeResult res = solve_scaled(std::vector<double>(static_cast<std::size_t>(ne), 1.0));
    std::vector<double> sigma(static_cast<std::size_t>(ne), 1.0);
    bool rescale = false;
    for (Index k = 0; k < ne; ++k) {
        const double vi = res.x(iv + mv.edges[static_cast<std::size_t>(k)].from);
        const double lk = res.x(il + k);
        sigma[static_cast<std::size_t>(k)] = std::sqrt(std::clamp(vi / std::max(lk, 1e-300), 1.0, 1e12));
        rescale = rescale || sigma[static_cast<std::size_t>(k)] > 10.0;
    }
    if (rescale) res = solve_scaled(sigma);

    const Eigen::VectorXd& x = res.x;
    OpfSolution sol;
    sol.bus_ids = mv.bus_ids;
    for (const auto& e : mv.edges) sol.branch_ids.push_back(e.id);
    sol.status = ConeStatus::Optimal;
    sol.iterations = res.iterations;
    sol.primal_residual = res.primal_residual;
    sol.dual_residual = res.dual_residual;
    for (Index b = 0; b < nb; ++b) {
        sol.v.push_back(x(iv + b));
        sol.vdev.push_back(std::max(0.0, x(ivdev + b)));
    }
    for (Index k = 0; k < ne; ++k) {
        sol.p.push_back(x(ip + k));
        sol.q.push_back(x(iq + k));
        sol.l.push_back(x(il + k));
        sol.ldev.push_back(std::max(0.0, x(ildev + k)));
        const double vi = x(iv + mv.edges[static_cast<std::size_t>(k)].from);
        sol.soc_gap.push_back(vi * x(il + k) - x(ip + k) * x(ip + k) - x(iq + k) * x(iq + k));
    }
    sol.slack_power = {x(ipsl), x(iqsl)};
    sol.slack_v = std::sqrt(std::max(0.0, x(iv)));
    sol.injections = injections;
    for (const auto& c : controls) {
        FlexControl fc{c.bus, 0.0, 0.0};
        if (c.area->degeneracy == Degeneracy::Polygon) {
            fc.dp_kw = x(c.dp) * sb;
            fc.dq_kvar = x(c.dq) * sb;
        } else if (c.area->degeneracy == Degeneracy::Segment) {
            const double t = std::clamp(x(c.t), 0.0, 1.0);
            const auto& a = c.area->vertices[0];
            const auto& b = c.area->vertices[1];
            fc.dp_kw = a.dp + t * (b.dp - a.dp);
            fc.dq_kvar = a.dq + t * (b.dq - a.dq);
        } else if (!c.area->vertices.empty()) {
            fc.dp_kw = c.area->vertices[0].dp;
            fc.dq_kvar = c.area->vertices[0].dq;
        }
        sol.injections[static_cast<std::size_t>(c.bus_index)] += cplx(fc.dp_kw, fc.dq_kvar) / sb;
        sol.controls.push_back(fc);
    }
    for (Index k = 0; k < ne; ++k) sol.objective.loss += weights.w_l * mv.edges[static_cast<std::size_t>(k)].r * sol.l[static_cast<std::size_t>(k)];
    for (double d : sol.vdev) sol.objective.v_penalty += weights.w_v * d;
    for (double d : sol.ldev) sol.objective.i_penalty += weights.w_lim * d;
    sol.objective.slack = weights.w_p * std::abs(sol.slack_power.real() - opts.slack_baseline.real()) +
                          weights.w_q * std::abs(sol.slack_power.imag() - opts.slack_baseline.imag());
    return sol;
}

SquaredState squared_state(const PfSolution& pf) {
    SquaredState s;
    for (const auto& v : pf.voltage) s.v.push_back(std::norm(v));
    for (const auto& i : pf.current) s.l.push_back(std::norm(i));
    return s;
}

SquaredState squared_state(const OpfSolution& sol) { return {sol.v, sol.l}; }

PenaltyReport evaluate_penalties(const SquaredState& state, const RadialSystem& sys) {
    if (state.v.size() != sys.bus_count() || state.l.size() != sys.edge_count()) {
        throw InputError("state does not match the system dimensions");
    }
    PenaltyReport r;
    for (std::size_t b = 0; b < state.v.size(); ++b) {
        const double vmax2 = sys.v_max[b] * sys.v_max[b];
        const double vmin2 = sys.v_min[b] * sys.v_min[b];
        const double d = std::max({0.0, state.v[b] - vmax2, vmin2 - state.v[b]});
        r.vdev.push_back(d);
        r.total_vdev += d;
    }
    for (std::size_t k = 0; k < state.l.size(); ++k) {
        const double imax = sys.edges[k].i_max;
        const double d = std::isfinite(imax) ? std::max(0.0, state.l[k] - imax * imax) : 0.0;
        r.ldev.push_back(d);
        r.total_ldev += d;
    }
    r.chf = kChfPerPuDeviation * (r.total_vdev + r.total_ldev);
    return r;
}

double check_soc_exactness(const OpfSolution& sol, double eps) {
    double worst = 0.0;
    for (std::size_t k = 0; k < sol.soc_gap.size(); ++k) {
        const double vl = sol.soc_gap[k] + sol.p[k] * sol.p[k] + sol.q[k] * sol.q[k];
        worst = std::max(worst, sol.soc_gap[k] / std::max(vl, eps));
    }
    return worst;
}

nlohmann::json to_json(const OpfSolution& sol) {
    nlohmann::json j;
    j["objective"] = {{"loss", sol.objective.loss},
                      {"v_penalty", sol.objective.v_penalty},
                      {"i_penalty", sol.objective.i_penalty},
                      {"slack", sol.objective.slack},
                      {"total", sol.objective.total()}};
    j["buses"] = nlohmann::json::array();
    for (std::size_t b = 0; b < sol.v.size(); ++b) {
        j["buses"].push_back({{"id", sol.bus_ids[b]}, {"v_pu", std::sqrt(std::max(0.0, sol.v[b]))},
                              {"v_dev", sol.vdev[b]}});
    }
    j["branches"] = nlohmann::json::array();
    for (std::size_t k = 0; k < sol.l.size(); ++k) {
        j["branches"].push_back({{"id", sol.branch_ids[k]},
                                 {"p", sol.p[k]},
                                 {"q", sol.q[k]},
                                 {"i_pu", std::sqrt(std::max(0.0, sol.l[k]))},
                                 {"l_dev", sol.ldev[k]},
                                 {"soc_gap", sol.soc_gap[k]}});
    }
    j["controls"] = nlohmann::json::array();
    for (const auto& c : sol.controls) {
        j["controls"].push_back({{"bus", c.bus}, {"dp", c.dp_kw}, {"dq", c.dq_kvar}});
    }
    j["slack"] = {{"p", sol.slack_power.real()}, {"q", sol.slack_power.imag()}, {"v", sol.slack_v}};
    j["max_soc_gap"] = check_soc_exactness(sol);
    j["status"] = to_string(sol.status);
    j["iterations"] = sol.iterations;
    return j;
}

}  // namespace flexgrid
