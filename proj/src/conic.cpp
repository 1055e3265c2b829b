#include "flexgrid/conic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flexgrid/errors.hpp"

namespace flexgrid {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(ConeStatus s) {
    switch (s) {
        case ConeStatus::Optimal: return "optimal";
        case ConeStatus::MaxIterations: return "max_iterations";
        case ConeStatus::Stalled: return "stalled";
        case ConeStatus::Numerical: return "numerical";
    }
    return "unknown";
}

namespace cone_detail {

namespace {

// Factored to avoid cancellation near the cone boundary.
double jnorm2(const VectorXd& u) {
    const double r = u.tail(u.size() - 1).norm();
    return (u(0) - r) * (u(0) + r);
}

}  // namespace

SocScaling soc_scaling(const VectorXd& s, const VectorXd& z) {
    const Index d = s.size();
    const double sj = std::sqrt(jnorm2(s));
    const double zj = std::sqrt(jnorm2(z));
    const VectorXd sb = s / sj;
    const VectorXd zb = z / zj;
    const double gamma = std::sqrt((1.0 + sb.dot(zb)) / 2.0);
    const double a = (sb(0) + zb(0)) / (2.0 * gamma);
    const VectorXd q = (sb.tail(d - 1) - zb.tail(d - 1)) / (2.0 * gamma);
    const double eta = std::sqrt(sj / zj);

    SocScaling sc;
    MatrixXd core(d, d);
    core(0, 0) = a;
    core.block(0, 1, 1, d - 1) = q.transpose();
    core.block(1, 0, d - 1, 1) = q;
    core.block(1, 1, d - 1, d - 1) =
        MatrixXd::Identity(d - 1, d - 1) + q * q.transpose() / (1.0 + a);
    sc.w = eta * core;
    core.block(0, 1, 1, d - 1) *= -1.0;
    core.block(1, 0, d - 1, 1) *= -1.0;
    sc.w_inv = core / eta;
    return sc;
}

double soc_max_step(const VectorXd& u, const VectorXd& d) {
    const double inf = std::numeric_limits<double>::infinity();
    const Index n = u.size();
    const double qa = d(0) * d(0) - d.tail(n - 1).squaredNorm();
    const double qb = u(0) * d(0) - u.tail(n - 1).dot(d.tail(n - 1));
    const double qc = std::max(0.0, u(0) * u(0) - u.tail(n - 1).squaredNorm());
    double alpha = inf;
    if (std::abs(qa) <= 1e-15 * (d.squaredNorm() + 1e-300)) {
        if (qb < 0.0) alpha = -qc / (2.0 * qb);
    } else {
        const double disc = qb * qb - qa * qc;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            const double t = -(qb + (qb >= 0.0 ? sq : -sq));
            double r1 = t / qa;
            double r2 = t != 0.0 ? qc / t : inf;
            if (r1 > r2) std::swap(r1, r2);
            if (qa < 0.0) {
                alpha = r2 > 0.0 ? r2 : 0.0;
            } else if (r1 > 0.0) {
                alpha = r1;
            }
        }
    }
    if (d(0) < 0.0) alpha = std::min(alpha, -u(0) / d(0));
    return std::max(0.0, alpha);
}

}  // namespace cone_detail

namespace {

using cone_detail::soc_max_step;
using cone_detail::soc_scaling;

struct Blocks {
    int l = 0;
    std::vector<std::pair<Index, Index>> soc;  // offset, size
    Index m = 0;
    int degree = 0;

    explicit Blocks(const ConeProgram& p) : l(p.linear_dim) {
        Index off = l;
        for (int d : p.soc_dims) {
            if (d < 2) throw InputError("second-order cone needs dimension >= 2");
            soc.emplace_back(off, d);
            off += d;
        }
        m = off;
        degree = l + static_cast<int>(soc.size());
    }

    VectorXd identity() const {
        VectorXd e = VectorXd::Zero(m);
        e.head(l).setOnes();
        for (auto [o, d] : soc) e(o) = 1.0;
        return e;
    }

    // Smallest "eigenvalue" of u relative to the cone.
    double min_eig(const VectorXd& u) const {
        double v = std::numeric_limits<double>::infinity();
        if (l > 0) v = u.head(l).minCoeff();
        for (auto [o, d] : soc) v = std::min(v, u(o) - u.segment(o + 1, d - 1).norm());
        return v;
    }

    VectorXd product(const VectorXd& u, const VectorXd& w) const {
        VectorXd r(m);
        r.head(l) = u.head(l).cwiseProduct(w.head(l));
        for (auto [o, d] : soc) {
            r(o) = u.segment(o, d).dot(w.segment(o, d));
            r.segment(o + 1, d - 1) = u(o) * w.segment(o + 1, d - 1) + w(o) * u.segment(o + 1, d - 1);
        }
        return r;
    }

    // Solves lambda o x = r for x.
    VectorXd divide(const VectorXd& lam, const VectorXd& r) const {
        VectorXd x(m);
        x.head(l) = r.head(l).cwiseQuotient(lam.head(l));
        for (auto [o, d] : soc) {
            const double l0 = lam(o);
            const auto l1 = lam.segment(o + 1, d - 1);
            const double r0 = r(o);
            const auto r1 = r.segment(o + 1, d - 1);
            const double l1n = l1.norm();
            const double x0 = (l0 * r0 - l1.dot(r1)) / ((l0 - l1n) * (l0 + l1n));
            x(o) = x0;
            x.segment(o + 1, d - 1) = (r1 - x0 * l1) / l0;
        }
        return x;
    }

    double max_step(const VectorXd& u, const VectorXd& du) const {
        double alpha = std::numeric_limits<double>::infinity();
        for (int i = 0; i < l; ++i) {
            if (du(i) < 0.0) alpha = std::min(alpha, -u(i) / du(i));
        }
        for (auto [o, d] : soc) alpha = std::min(alpha, soc_max_step(u.segment(o, d), du.segment(o, d)));
        return alpha;
    }

    // Shifts u into the interior by (1 + alpha) e when it is not already.
    VectorXd interior(const VectorXd& u) const {
        const double alpha = -min_eig(u);
        if (alpha < 0.0) return u;
        return u + (1.0 + alpha) * identity();
    }
};

struct Scaling {
    MatrixXd w, w_inv, w2;
    VectorXd lambda;
};

Scaling scaling(const Blocks& k, const VectorXd& s, const VectorXd& z) {
    Scaling sc;
    sc.w = MatrixXd::Zero(k.m, k.m);
    sc.w_inv = MatrixXd::Zero(k.m, k.m);
    for (int i = 0; i < k.l; ++i) {
        const double wi = std::sqrt(s(i) / z(i));
        sc.w(i, i) = wi;
        sc.w_inv(i, i) = 1.0 / wi;
    }
    for (auto [o, d] : k.soc) {
        const auto b = soc_scaling(s.segment(o, d), z.segment(o, d));
        sc.w.block(o, o, d, d) = b.w;
        sc.w_inv.block(o, o, d, d) = b.w_inv;
    }
    sc.w2 = sc.w * sc.w;
    sc.lambda = sc.w * z;
    return sc;
}

class KktSystem {
  public:
    KktSystem(const ConeProgram& p, const MatrixXd& w2, double reg)
        : n_(p.c.size()), p_(p.b.size()), m_(p.h.size()), k_(n_ + p_ + m_, n_ + p_ + m_) {
        k_.setZero();
        k_.block(0, n_, n_, p_) = p.a.transpose();
        k_.block(0, n_ + p_, n_, m_) = p.g.transpose();
        k_.block(n_, 0, p_, n_) = p.a;
        k_.block(n_ + p_, 0, m_, n_) = p.g;
        k_.block(n_ + p_, n_ + p_, m_, m_) = -w2;
        MatrixXd reg_k = k_;
        reg_k.diagonal().head(n_).array() += reg;
        reg_k.diagonal().segment(n_, p_).array() -= reg;
        lu_.compute(reg_k);
    }

    VectorXd solve(const VectorXd& rhs) const {
        VectorXd sol = lu_.solve(rhs);
        for (int it = 0; it < 3; ++it) {
            const VectorXd res = rhs - k_ * sol;
            sol += lu_.solve(res);
        }
        return sol;
    }

    Index n() const { return n_; }
    Index p() const { return p_; }
    Index m() const { return m_; }

  private:
    Index n_, p_, m_;
    MatrixXd k_;
    Eigen::PartialPivLU<MatrixXd> lu_;
};

}  // namespace

ConeResult solve_cone_program(const ConeProgram& prog, const ConeSettings& st) {
    const Blocks k(prog);
    const Index n = prog.c.size();
    const Index p = prog.b.size();
    const Index m = prog.h.size();
    if (prog.a.rows() != p || (p > 0 && prog.a.cols() != n) || prog.g.rows() != m ||
        prog.g.cols() != n || k.m != m) {
        throw InputError("cone program dimensions are inconsistent");
    }
    const double reg = 1e-11;

    ConeResult res;
    {
        KktSystem kkt(prog, MatrixXd::Identity(m, m), reg);
        VectorXd rhs = VectorXd::Zero(n + p + m);
        rhs.segment(n, p) = prog.b;
        rhs.tail(m) = prog.h;
        VectorXd sol = kkt.solve(rhs);
        res.x = sol.head(n);
        res.s = k.interior(-sol.tail(m));
        rhs.setZero();
        rhs.head(n) = -prog.c;
        sol = kkt.solve(rhs);
        res.y = sol.segment(n, p);
        res.z = k.interior(sol.tail(m));
    }

    const double bnorm = std::max(prog.b.size() ? prog.b.norm() : 0.0, prog.h.norm());
    const double cnorm = prog.c.norm();
    const VectorXd e = k.identity();

    for (int it = 0; it <= st.max_iterations; ++it) {
        const VectorXd rx = (p > 0 ? VectorXd(prog.a.transpose() * res.y) : VectorXd::Zero(n)) +
                            prog.g.transpose() * res.z + prog.c;
        const VectorXd ry = prog.a * res.x - prog.b;
        const VectorXd rz = prog.g * res.x + res.s - prog.h;
        const double gap = res.s.dot(res.z);
        const double mu = gap / k.degree;
        res.primal_objective = prog.c.dot(res.x);
        res.dual_objective = -prog.b.dot(res.y) - prog.h.dot(res.z);
        res.primal_residual = std::max(ry.size() ? ry.norm() : 0.0, rz.norm()) / (1.0 + bnorm);
        res.dual_residual = rx.norm() / (1.0 + cnorm);
        res.gap = gap;
        res.iterations = it;

        const double rel_gap =
            gap / std::max(1e-300, std::min(std::abs(res.primal_objective), std::abs(res.dual_objective)));
        if (res.primal_residual <= st.feastol && res.dual_residual <= st.feastol &&
            (gap <= st.abstol || rel_gap <= st.reltol)) {
            res.status = ConeStatus::Optimal;
            return res;
        }
        if (it == st.max_iterations) break;

        const Scaling sc = scaling(k, res.s, res.z);
        if (!sc.w.allFinite()) {
            res.status = ConeStatus::Numerical;
            return res;
        }
        const KktSystem kkt(prog, sc.w2, reg);

        auto direction = [&](const VectorXd& rc, VectorXd& dx, VectorXd& dy, VectorXd& dz, VectorXd& ds) {
            const VectorXd u = k.divide(sc.lambda, rc);
            const VectorXd wu = sc.w * u;
            VectorXd rhs(n + p + m);
            rhs.head(n) = -rx;
            rhs.segment(n, p) = -ry;
            rhs.tail(m) = -rz - wu;
            const VectorXd sol = kkt.solve(rhs);
            dx = sol.head(n);
            dy = sol.segment(n, p);
            dz = sol.tail(m);
            ds = wu - sc.w2 * dz;
        };

        VectorXd dx, dy, dz, ds;
        direction(-k.product(sc.lambda, sc.lambda), dx, dy, dz, ds);
        const double alpha_aff = std::min({1.0, k.max_step(res.s, ds), k.max_step(res.z, dz)});
        const double sigma = std::pow(std::clamp(1.0 - alpha_aff, 0.0, 1.0), 3);

        const VectorXd corr = k.product(sc.w_inv * ds, sc.w * dz);
        direction(-k.product(sc.lambda, sc.lambda) - corr + sigma * mu * e, dx, dy, dz, ds);
        if (!dx.allFinite() || !dz.allFinite() || !ds.allFinite()) {
            res.status = ConeStatus::Numerical;
            return res;
        }
        const double alpha =
            std::min(1.0, st.step_factor * std::min(k.max_step(res.s, ds), k.max_step(res.z, dz)));
        if (alpha < 1e-12) {
            res.status = ConeStatus::Stalled;
            return res;
        }
        res.x += alpha * dx;
        res.y += alpha * dy;
        res.z += alpha * dz;
        res.s += alpha * ds;
    }
    res.status = ConeStatus::MaxIterations;
    return res;
}

}  // namespace flexgrid
