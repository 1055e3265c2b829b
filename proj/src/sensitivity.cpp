#include "flexgrid/sensitivity.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "flexgrid/errors.hpp"

namespace flexgrid {

int SensitivityMatrix::injection_column(const std::string& bus) const {
    for (std::size_t k = 0; k < injection_bus_ids.size(); ++k) {
        if (injection_bus_ids[k] == bus) return static_cast<int>(k);
    }
    return -1;
}

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double max_linear_error(const RadialSystem& lv, const std::vector<cplx>& s, double root_v,
                        const SensitivityMatrix& k, double radius, std::mt19937_64& rng) {
    const Index m = static_cast<Index>(k.injection_count());
    auto probe = [&](const VectorXd& dp, const VectorXd& dq) {
        std::vector<cplx> sp = s;
        for (Index c = 0; c < m; ++c) sp[c + 1] += cplx(dp(c), dq(c));
        PfSolution pf;
        try {
            pf = solve_pf(lv, sp, root_v);
        } catch (const ConvergenceError&) {
            return std::numeric_limits<double>::infinity();
        }
        const VectorXd pred = k.v0 + k.k_vp * dp + k.k_vq * dq;
        double err = 0.0;
        for (Index b = 0; b < pred.size(); ++b) {
            err = std::max(err, std::abs(pred(b) - pf.v_mag(static_cast<std::size_t>(b))));
        }
        return err;
    };
    double worst = 0.0;
    for (Index c = 0; c < m; ++c) {
        for (double sign : {-1.0, 1.0}) {
            VectorXd dp = VectorXd::Zero(m), dq = VectorXd::Zero(m);
            dp(c) = sign * radius;
            worst = std::max(worst, probe(dp, dq));
            dp(c) = 0.0;
            dq(c) = sign * radius;
            worst = std::max(worst, probe(dp, dq));
        }
    }
    std::bernoulli_distribution coin(0.5);
    for (int corner = 0; corner < 8; ++corner) {
        VectorXd dp(m), dq(m);
        for (Index c = 0; c < m; ++c) {
            dp(c) = coin(rng) ? radius : -radius;
            dq(c) = coin(rng) ? radius : -radius;
        }
        worst = std::max(worst, probe(dp, dq));
    }
    return worst;
}

}  // namespace

SensitivityMatrix analytical_sensitivities(const RadialSystem& lv, const std::vector<cplx>& s,
                                           double root_v, const AnalyticalOptions& opts) {
    const Index n = static_cast<Index>(lv.bus_count());
    const Index ne = static_cast<Index>(lv.edge_count());
    const Index m = n - 1;
    for (const auto& e : lv.edges) {
        if (e.ideal || e.r * e.r + e.x * e.x <= 0.0) {
            throw InputError("sensitivities need a non-zero impedance on every branch", e.id);
        }
    }
    const PfSolution pf = solve_pf(lv, s, root_v);

    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& e : lv.edges) {
        const cplx adm = 1.0 / cplx(e.r, e.x);
        y(e.from, e.from) += adm;
        y(e.to, e.to) += adm;
        y(e.from, e.to) -= adm;
        y(e.to, e.from) -= adm;
    }
    Eigen::VectorXcd v(n);
    for (Index b = 0; b < n; ++b) v(b) = pf.voltage[static_cast<std::size_t>(b)];
    const Eigen::VectorXcd ibus = y * v;

    // Rows: P then Q of buses 1..n-1. Columns: e then f of buses 1..n-1.
    MatrixXd jac(2 * m, 2 * m);
    const cplx j1(0.0, 1.0);
    for (Index i = 1; i < n; ++i) {
        for (Index k = 1; k < n; ++k) {
            const cplx delta = (i == k) ? std::conj(ibus(i)) : cplx(0.0, 0.0);
            const cplx ds_de = delta + v(i) * std::conj(y(i, k));
            const cplx ds_df = j1 * delta - j1 * v(i) * std::conj(y(i, k));
            jac(i - 1, k - 1) = ds_de.real();
            jac(i - 1, m + k - 1) = ds_df.real();
            jac(m + i - 1, k - 1) = ds_de.imag();
            jac(m + i - 1, m + k - 1) = ds_df.imag();
        }
    }
    Eigen::FullPivLU<MatrixXd> lu(jac);
    const double rcond = lu.rcond();
    if (lu.rank() < 2 * m || !(rcond > 1e-14)) {
        throw NumericalError("power-flow Jacobian is singular at the operating point",
                             rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity());
    }
    const MatrixXd dx = lu.solve(MatrixXd::Identity(2 * m, 2 * m));  // d(e,f) / d(P,Q)

    SensitivityMatrix k;
    k.bus_ids = lv.bus_ids;
    for (const auto& e : lv.edges) k.branch_ids.push_back(e.id);
    k.injection_bus_ids.assign(lv.bus_ids.begin() + 1, lv.bus_ids.end());
    k.k_vp = MatrixXd::Zero(n, m);
    k.k_vq = MatrixXd::Zero(n, m);
    k.k_ip = MatrixXd::Zero(ne, m);
    k.k_iq = MatrixXd::Zero(ne, m);
    k.v0.resize(n);
    k.i0.resize(ne);
    for (Index b = 0; b < n; ++b) k.v0(b) = std::abs(v(b));
    for (Index e = 0; e < ne; ++e) k.i0(e) = pf.i_mag(static_cast<std::size_t>(e));

    for (Index col = 0; col < 2 * m; ++col) {
        MatrixXd& kv = col < m ? k.k_vp : k.k_vq;
        MatrixXd& ki = col < m ? k.k_ip : k.k_iq;
        const Index c = col % m;
        Eigen::VectorXcd dv = Eigen::VectorXcd::Zero(n);
        for (Index b = 1; b < n; ++b) dv(b) = cplx(dx(b - 1, col), dx(m + b - 1, col));
        for (Index b = 1; b < n; ++b) kv(b, c) = (std::conj(v(b)) * dv(b)).real() / std::abs(v(b));
        for (Index e = 0; e < ne; ++e) {
            const RadialEdge& edge = lv.edges[static_cast<std::size_t>(e)];
            const cplx cur = pf.current[static_cast<std::size_t>(e)];
            if (std::abs(cur) <= 1e-12) continue;
            const cplx di = (dv(edge.from) - dv(edge.to)) / cplx(edge.r, edge.x);
            ki(e, c) = (std::conj(cur) * di).real() / std::abs(cur);
        }
    }
    for (Index e = 0; e < ne; ++e) {
        if (pf.i_mag(static_cast<std::size_t>(e)) <= 1e-12) {
            k.nondifferentiable_branches.push_back(lv.edges[static_cast<std::size_t>(e)].id);
        }
    }

    if (opts.compute_validity_radius) {
        std::mt19937_64 rng(0x5eed);
        double radius = opts.radius_start;
        while (radius > 1e-6 &&
               max_linear_error(lv, s, root_v, k, radius, rng) > opts.radius_error_target) {
            radius *= 0.5;
        }
        k.validity_radius = radius;
    }
    return k;
}

SensitivityMatrix estimate_sensitivities(const MeasurementWindow& w, double max_condition) {
    const Index samples = w.v.rows();
    const Index m = static_cast<Index>(w.injection_bus_ids.size());
    const Index n = w.v.cols();
    const Index ne = w.i.cols();
    if (samples < 2 * m || samples < 2) {
        throw InputError("measurement window too short for estimation",
                         std::to_string(samples) + " samples for " + std::to_string(m) +
                             " injection buses");
    }
    const Index rows = samples - 1;
    MatrixXd x(rows, 2 * m);
    MatrixXd t(rows, n + ne);
    for (Index r = 0; r < rows; ++r) {
        x.row(r).head(m) = w.p.row(r + 1) - w.p.row(r);
        x.row(r).tail(m) = w.q.row(r + 1) - w.q.row(r);
        t.row(r).head(n) = w.v.row(r + 1) - w.v.row(r);
        t.row(r).tail(ne) = w.i.row(r + 1) - w.i.row(r);
    }

    SensitivityMatrix k;
    k.bus_ids = w.bus_ids;
    k.branch_ids = w.branch_ids;
    k.injection_bus_ids = w.injection_bus_ids;

    const double max_norm = x.colwise().norm().maxCoeff();
    std::vector<Index> active;
    for (Index c = 0; c < 2 * m; ++c) {
        if (max_norm > 0.0 && x.col(c).norm() > 1e-12 * max_norm) {
            active.push_back(c);
        } else {
            k.unidentifiable.push_back((c < m ? "P:" : "Q:") + w.injection_bus_ids[c % m]);
        }
    }

    MatrixXd coef = MatrixXd::Zero(2 * m, n + ne);
    if (!active.empty()) {
        MatrixXd xa(rows, static_cast<Index>(active.size()));
        for (std::size_t a = 0; a < active.size(); ++a) xa.col(static_cast<Index>(a)) = x.col(active[a]);
        Eigen::JacobiSVD<MatrixXd> svd(xa, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const VectorXd& sv = svd.singularValues();
        const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                                    : std::numeric_limits<double>::infinity();
        k.condition_number = cond;
        if (!(cond <= max_condition)) {
            std::ostringstream msg;
            msg << "regressor is rank deficient (condition number " << cond << ")";
            throw NumericalError(msg.str(), cond);
        }
        const MatrixXd sol = svd.solve(t);
        for (std::size_t a = 0; a < active.size(); ++a) coef.row(active[a]) = sol.row(static_cast<Index>(a));
    }

    k.k_vp = coef.topRows(m).leftCols(n).transpose();
    k.k_vq = coef.bottomRows(m).leftCols(n).transpose();
    k.k_ip = coef.topRows(m).rightCols(ne).transpose();
    k.k_iq = coef.bottomRows(m).rightCols(ne).transpose();
    k.v0 = w.v.row(samples - 1).transpose();
    k.i0 = w.i.row(samples - 1).transpose();

    const MatrixXd resid = t - x * coef;
    VectorXd r2(n + ne);
    for (Index c = 0; c < n + ne; ++c) {
        const double mean = t.col(c).mean();
        const double ss_tot = (t.col(c).array() - mean).square().sum();
        const double ss_res = resid.col(c).squaredNorm();
        if (ss_tot <= 1e-30) {
            r2(c) = ss_res <= 1e-30 ? 1.0 : 0.0;
        } else {
            r2(c) = 1.0 - ss_res / ss_tot;
        }
    }
    k.r2_v = r2.head(n);
    k.r2_i = r2.tail(ne);
    return k;
}

double relative_frobenius_error(const SensitivityMatrix& a, const SensitivityMatrix& b) {
    auto same = [](const MatrixXd& x, const MatrixXd& y) {
        return x.rows() == y.rows() && x.cols() == y.cols();
    };
    if (!same(a.k_vp, b.k_vp) || !same(a.k_vq, b.k_vq) || !same(a.k_ip, b.k_ip) ||
        !same(a.k_iq, b.k_iq)) {
        throw InputError("sensitivity matrices have different shapes");
    }
    const double num = (a.k_vp - b.k_vp).squaredNorm() + (a.k_vq - b.k_vq).squaredNorm() +
                       (a.k_ip - b.k_ip).squaredNorm() + (a.k_iq - b.k_iq).squaredNorm();
    const double den =
        b.k_vp.squaredNorm() + b.k_vq.squaredNorm() + b.k_ip.squaredNorm() + b.k_iq.squaredNorm();
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

void write_sensitivity_csv(std::ostream& out, const SensitivityMatrix& k) {
    out << "block,row_id,column_id,value\n";
    auto dump = [&](const char* name, const MatrixXd& mat, const std::vector<std::string>& rows) {
        for (Index r = 0; r < mat.rows(); ++r) {
            for (Index c = 0; c < mat.cols(); ++c) {
                out << name << ',' << rows[static_cast<std::size_t>(r)] << ','
                    << k.injection_bus_ids[static_cast<std::size_t>(c)] << ',' << mat(r, c) << '\n';
            }
        }
    };
    dump("K_VP", k.k_vp, k.bus_ids);
    dump("K_VQ", k.k_vq, k.bus_ids);
    dump("K_IP", k.k_ip, k.branch_ids);
    dump("K_IQ", k.k_iq, k.branch_ids);
}

}  // namespace flexgrid
