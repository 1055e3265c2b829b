#include "flexgrid/powerflow.hpp"

#include <cmath>
#include <ostream>
#include <random>
#include <sstream>

#include "flexgrid/errors.hpp"

namespace flexgrid {

namespace {

// Edge currents for fixed voltages: each edge carries its child's load
// current plus everything downstream.
void backward_sweep(const RadialSystem& sys, const std::vector<cplx>& s,
                    const std::vector<cplx>& v, std::vector<cplx>& current) {
    const std::size_t n = sys.bus_count();
    for (std::size_t b = n; b-- > 1;) {
        cplx j = -std::conj(s[b] / v[b]);
        for (int c : sys.child_edges[b]) j += current[c];
        current[b - 1] = j;
    }
}

}  // namespace

PfSolution solve_pf(const RadialSystem& sys, const std::vector<cplx>& s, double slack_v,
                    const PfOptions& opts) {
    const std::size_t n = sys.bus_count();
    if (s.size() != n) {
        throw InputError("injection vector does not cover every bus",
                         std::to_string(s.size()) + " of " + std::to_string(n));
    }
    if (!(slack_v > 0.0)) throw InputError("slack voltage must be positive");
    for (std::size_t k = 0; k < n; ++k) {
        if (!std::isfinite(s[k].real()) || !std::isfinite(s[k].imag())) {
            throw InputError("non-finite injection", sys.bus_ids[k]);
        }
    }

    PfSolution pf;
    pf.voltage.assign(n, cplx(slack_v, 0.0));
    pf.current.assign(sys.edge_count(), cplx(0.0, 0.0));

    bool converged = false;
    for (int it = 1; it <= opts.max_iterations; ++it) {
        backward_sweep(sys, s, pf.voltage, pf.current);
        double update = 0.0;
        for (std::size_t e = 0; e < sys.edge_count(); ++e) {
            const RadialEdge& edge = sys.edges[e];
            const cplx nv = pf.voltage[edge.from] - cplx(edge.r, edge.x) * pf.current[e];
            update = std::max(update, std::abs(nv - pf.voltage[edge.to]));
            pf.voltage[edge.to] = nv;
        }
        pf.iterations = it;
        pf.max_update = update;
        if (!std::isfinite(update)) break;
        if (update <= opts.tolerance) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "power flow did not converge after " << pf.iterations
            << " iterations (last update " << pf.max_update << " pu)";
        throw ConvergenceError(msg.str());
    }

    backward_sweep(sys, s, pf.voltage, pf.current);
    pf.send_power.resize(sys.edge_count());
    pf.losses_pu = 0.0;
    for (std::size_t e = 0; e < sys.edge_count(); ++e) {
        const RadialEdge& edge = sys.edges[e];
        pf.send_power[e] = pf.voltage[edge.from] * std::conj(pf.current[e]);
        pf.losses_pu += edge.r * std::norm(pf.current[e]);
    }
    cplx out(0.0, 0.0);
    for (int c : sys.child_edges[0]) out += pf.send_power[c];
    pf.slack_power = out - s[0];
    pf.max_mismatch = power_balance_residual(sys, pf, s);
    return pf;
}

double losses_kwh(const RadialSystem& sys, const PfSolution& pf, double timestep_minutes) {
    double loss = 0.0;
    for (std::size_t e = 0; e < sys.edge_count(); ++e) loss += sys.edges[e].r * std::norm(pf.current[e]);
    return loss * sys.s_base_kva * timestep_minutes / 60.0;
}

double power_balance_residual(const RadialSystem& sys, const PfSolution& pf,
                              const std::vector<cplx>& s) {
    double worst = 0.0;
    for (std::size_t b = 1; b < sys.bus_count(); ++b) {
        cplx out = -pf.current[b - 1];
        for (int c : sys.child_edges[b]) out += pf.current[c];
        worst = std::max(worst, std::abs(s[b] - pf.voltage[b] * std::conj(out)));
    }
    return worst;
}

double distflow_residual(const RadialSystem& sys, const PfSolution& pf) {
    double worst = 0.0;
    for (std::size_t e = 0; e < sys.edge_count(); ++e) {
        const RadialEdge& edge = sys.edges[e];
        const double vi = std::norm(pf.voltage[edge.from]);
        const double vj = std::norm(pf.voltage[edge.to]);
        const double l = std::norm(pf.current[e]);
        const cplx sp = pf.send_power[e];
        const double rhs = vi - 2.0 * (edge.r * sp.real() + edge.x * sp.imag()) +
                           (edge.r * edge.r + edge.x * edge.x) * l;
        worst = std::max(worst, std::abs(vj - rhs));
    }
    return worst;
}

double soc_residual(const RadialSystem& sys, const PfSolution& pf) {
    double worst = 0.0;
    for (std::size_t e = 0; e < sys.edge_count(); ++e) {
        const double vi = std::norm(pf.voltage[sys.edges[e].from]);
        const double l = std::norm(pf.current[e]);
        worst = std::max(worst, std::abs(std::norm(pf.send_power[e]) - vi * l));
    }
    return worst;
}

MeasurementWindow synthesize_measurements(const RadialSystem& sys,
                                          const std::vector<std::vector<cplx>>& samples,
                                          double slack_v, const NoiseSpec& noise,
                                          const std::vector<std::int64_t>& timestamps) {
    if (!timestamps.empty() && timestamps.size() != samples.size()) {
        throw InputError("timestamp count differs from sample count");
    }
    if (noise.sigma_rel < 0.0) throw InputError("noise sigma must be non-negative");
    const std::size_t n = sys.bus_count();
    const std::size_t m = sys.edge_count();
    const auto rows = static_cast<Eigen::Index>(samples.size());

    MeasurementWindow w;
    w.bus_ids = sys.bus_ids;
    for (const auto& e : sys.edges) w.branch_ids.push_back(e.id);
    w.injection_bus_ids.assign(sys.bus_ids.begin() + 1, sys.bus_ids.end());
    w.timestamps = timestamps;
    w.v.resize(rows, static_cast<Eigen::Index>(n));
    w.i.resize(rows, static_cast<Eigen::Index>(m));
    w.p.resize(rows, static_cast<Eigen::Index>(n - 1));
    w.q.resize(rows, static_cast<Eigen::Index>(n - 1));

    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto read = [&](double truth) {
        return noise.sigma_rel > 0.0 ? truth * (1.0 + noise.sigma_rel * gauss(rng)) : truth;
    };

    for (Eigen::Index r = 0; r < rows; ++r) {
        PfSolution pf;
        try {
            pf = solve_pf(sys, samples[r], slack_v);
        } catch (const ConvergenceError& e) {
            const std::string at = timestamps.empty() ? "sample " + std::to_string(r)
                                                      : format_rfc3339(timestamps[r]);
            throw ConvergenceError(std::string(e.what()) + " at " + at);
        }
        for (std::size_t b = 0; b < n; ++b) w.v(r, b) = read(pf.v_mag(b));
        for (std::size_t e = 0; e < m; ++e) w.i(r, e) = read(pf.i_mag(e));
        for (std::size_t b = 1; b < n; ++b) {
            w.p(r, b - 1) = read(samples[r][b].real());
            w.q(r, b - 1) = read(samples[r][b].imag());
        }
    }
    return w;
}

void write_bus_csv_header(std::ostream& out) { out << "timestamp,bus_id,v_pu,angle_rad\n"; }

void write_bus_csv(std::ostream& out, const std::string& timestamp, const RadialSystem& sys,
                   const PfSolution& pf) {
    for (std::size_t b = 0; b < sys.bus_count(); ++b) {
        out << timestamp << ',' << sys.bus_ids[b] << ',' << std::abs(pf.voltage[b]) << ','
            << std::arg(pf.voltage[b]) << '\n';
    }
}

void write_branch_csv_header(std::ostream& out) { out << "timestamp,branch_id,i_pu,p_pu,q_pu\n"; }

void write_branch_csv(std::ostream& out, const std::string& timestamp, const RadialSystem& sys,
                      const PfSolution& pf) {
    for (std::size_t e = 0; e < sys.edge_count(); ++e) {
        out << timestamp << ',' << sys.edges[e].id << ',' << std::abs(pf.current[e]) << ','
            << pf.send_power[e].real() << ',' << pf.send_power[e].imag() << '\n';
    }
}

}  // namespace flexgrid
