#include "flexgrid/lv_flex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "flexgrid/errors.hpp"
#include "flexgrid/lp.hpp"

namespace flexgrid {

using Eigen::Index;

std::vector<FlexDirection> FlexDirection::compass8() {
    return {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}};
}

std::vector<FlexDirection> FlexDirection::angular(int n) {
    if (n < 1) throw InputError("direction count must be positive", std::to_string(n));
    if (n == 8) return compass8();
    if (n == 4) return {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    std::vector<FlexDirection> out;
    for (int k = 0; k < n; ++k) {
        const double th = 2.0 * std::numbers::pi * k / n;
        out.push_back({std::cos(th), std::sin(th)});
    }
    return out;
}

double FlexArea::area() const {
    if (vertices.size() < 3) return 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < vertices.size(); ++k) {
        const auto& a = vertices[k];
        const auto& b = vertices[(k + 1) % vertices.size()];
        s += a.dp * b.dq - b.dp * a.dq;
    }
    return 0.5 * s;
}

double FlexArea::max_dp_reach() const {
    double r = 0.0;
    for (const auto& v : vertices) r = std::max(r, std::abs(v.dp));
    return r;
}

// ---------------------------------------------------------------------------
// DER limits

DerFlexLimits der_flex_limits(const Der& der, double p_now_kw) {
    DerFlexLimits lim;
    lim.der_id = der.id;
    lim.bus = der.bus;
    if (!der.controllable) return lim;
    const double tan_phi = std::tan(std::acos(std::clamp(der.pf_min, 0.0, 1.0)));
    const double frac = der.curtailment_fraction;
    const double p = std::clamp(p_now_kw, 0.0, der.p_rating_kw);
    switch (der.kind) {
        case DerKind::PV:
            lim.dp_min = -frac * p;
            lim.dq_max = tan_phi * (1.0 - frac) * p;
            lim.dq_min = -lim.dq_max;
            break;
        case DerKind::Load:
            lim.dp_max = frac * p;
            lim.dq_max = tan_phi * (1.0 - frac) * p;
            lim.dq_min = -lim.dq_max;
            break;
        case DerKind::Storage:
            lim.dp_max = frac * der.p_rating_kw;
            lim.dp_min = -lim.dp_max;
            lim.dq_max = tan_phi * frac * der.p_rating_kw;
            lim.dq_min = -lim.dq_max;
            break;
    }
    return lim;
}

std::vector<DerFlexLimits> der_flex_limits(const LvGrid& lv, const InjectionProfile& profile,
                                           std::size_t t) {
    std::vector<DerFlexLimits> out;
    for (const Der& der : lv.grid.ders) {
        if (!der.controllable) continue;
        double shared_rating = 0.0;
        for (const Der& other : lv.grid.ders) {
            if (other.bus == der.bus && other.kind == der.kind) shared_rating += other.p_rating_kw;
        }
        double p_now = der.p_rating_kw;
        auto it = profile.buses.find(der.bus);
        if (der.kind != DerKind::Storage) {
            double bus_total = 0.0;
            if (it != profile.buses.end()) {
                bus_total = der.kind == DerKind::PV ? it->second.p_gen.at(t) : it->second.p_load.at(t);
            }
            p_now = shared_rating > 0.0 ? bus_total * der.p_rating_kw / shared_rating : 0.0;
        }
        out.push_back(der_flex_limits(der, p_now));
    }
    return out;
}

std::vector<DerFlexLimits> der_flex_limits_nameplate(const LvGrid& lv) {
    std::vector<DerFlexLimits> out;
    for (const Der& der : lv.grid.ders) {
        if (der.controllable) out.push_back(der_flex_limits(der, der.p_rating_kw));
    }
    return out;
}

LvOperatingPoint make_operating_point(const RadialSystem& lv, SensitivityMatrix k) {
    LvOperatingPoint op;
    op.s_base_kva = lv.s_base_kva;
    for (const auto& id : k.bus_ids) {
        const int b = lv.bus_index(id);
        op.v_min.push_back(lv.v_min[b]);
        op.v_max.push_back(lv.v_max[b]);
    }
    for (const auto& id : k.branch_ids) op.i_max.push_back(lv.edges[lv.edge_index(id)].i_max);
    op.k = std::move(k);
    return op;
}

// ---------------------------------------------------------------------------
// LV OPF

namespace {

struct LpModel {
    Eigen::MatrixXd a;  // rows over x = [delta+ ; delta-]
    Eigen::VectorXd b;
    std::vector<std::string> row_names;
};

// Variables per DER d: delta index 2d is dp, 2d+1 is dq (kW / kvar).
LpModel build_lp(const LvOperatingPoint& op, const std::vector<DerFlexLimits>& limits) {
    const auto& k = op.k;
    const Index nd = static_cast<Index>(limits.size());
    const Index nv = 2 * nd;
    const Index nb = k.k_vp.rows();
    const Index ne = k.k_ip.rows();

    Eigen::MatrixXd gv = Eigen::MatrixXd::Zero(nb, nv);
    Eigen::MatrixXd gi = Eigen::MatrixXd::Zero(ne, nv);
    for (Index d = 0; d < nd; ++d) {
        const int col = k.injection_column(limits[static_cast<std::size_t>(d)].bus);
        if (col < 0) continue;
        gv.col(2 * d) = k.k_vp.col(col) / op.s_base_kva;
        gv.col(2 * d + 1) = k.k_vq.col(col) / op.s_base_kva;
        gi.col(2 * d) = k.k_ip.col(col) / op.s_base_kva;
        gi.col(2 * d + 1) = k.k_iq.col(col) / op.s_base_kva;
    }

    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> rhs;
    LpModel lp;
    auto add = [&](const Eigen::RowVectorXd& g, double limit, std::string name) {
        Eigen::RowVectorXd row(2 * nv);
        row << g, -g;
        rows.push_back(row);
        rhs.push_back(limit);
        lp.row_names.push_back(std::move(name));
    };
    for (Index i = 0; i < nb; ++i) {
        const auto& id = k.bus_ids[static_cast<std::size_t>(i)];
        add(gv.row(i), op.v_max[static_cast<std::size_t>(i)] - k.v0(i), "voltage above v_max at " + id);
        add(-gv.row(i), k.v0(i) - op.v_min[static_cast<std::size_t>(i)], "voltage below v_min at " + id);
    }
    for (Index e = 0; e < ne; ++e) {
        const double imax = op.i_max[static_cast<std::size_t>(e)];
        if (!std::isfinite(imax)) continue;
        add(gi.row(e), imax - k.i0(e), "current above i_max on " + k.branch_ids[static_cast<std::size_t>(e)]);
    }
    for (Index j = 0; j < 2 * nv; ++j) {
        const auto& lim = limits[static_cast<std::size_t>((j % nv) / 2)];
        const bool is_p = (j % 2) == 0;
        const double bound = j < nv ? (is_p ? lim.dp_max : lim.dq_max) : -(is_p ? lim.dp_min : lim.dq_min);
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(2 * nv);
        row(j) = 1.0;
        rows.push_back(row);
        rhs.push_back(std::max(0.0, bound));
        lp.row_names.push_back("box of " + lim.der_id);
    }
    lp.a.resize(static_cast<Index>(rows.size()), 2 * nv);
    lp.b.resize(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        lp.a.row(static_cast<Index>(r)) = rows[r];
        lp.b(static_cast<Index>(r)) = rhs[r];
    }
    return lp;
}

Eigen::VectorXd objective(const FlexDirection& dir, Index nd) {
    Eigen::VectorXd c(4 * nd);
    for (Index d = 0; d < nd; ++d) {
        c(2 * d) = dir.alpha;
        c(2 * d + 1) = dir.beta;
        c(2 * nd + 2 * d) = -dir.alpha;
        c(2 * nd + 2 * d + 1) = -dir.beta;
    }
    return c;
}

FlexVertex zero_vertex(const std::vector<DerFlexLimits>& limits) {
    FlexVertex v;
    for (const auto& l : limits) v.setpoints.push_back({l.der_id, l.bus, 0.0, 0.0});
    return v;
}

void check_limits(const std::vector<DerFlexLimits>& limits) {
    for (const auto& l : limits) {
        if (l.dp_min > 1e-12 || l.dp_max < -1e-12 || l.dq_min > 1e-12 || l.dq_max < -1e-12) {
            throw InputError("DER flexibility range must contain zero", l.der_id);
        }
    }
}

}  // namespace

LvOpfResult lv_opf(const LvOperatingPoint& op, const std::vector<DerFlexLimits>& limits,
                   const FlexDirection& direction, const std::optional<FlexDirection>& tie_break) {
    check_limits(limits);
    if (direction.alpha == 0.0 && direction.beta == 0.0) {
        throw InputError("flex direction must not be (0, 0)");
    }
    LvOpfResult res;
    res.vertex = zero_vertex(limits);
    const LpModel lp = build_lp(op, limits);
    for (Index r = 0; r < lp.b.size(); ++r) {
        if (lp.b(r) < -1e-12) {
            res.violation = lp.row_names[static_cast<std::size_t>(r)];
            return res;
        }
    }
    const Index nd = static_cast<Index>(limits.size());
    res.feasible = true;
    if (nd == 0) return res;

    std::optional<Eigen::VectorXd> secondary;
    if (tie_break) secondary = objective(*tie_break, nd);
    const LpResult sol = maximize_lp(lp.a, lp.b, objective(direction, nd), secondary);
    if (sol.status != LpStatus::Optimal) {
        throw NumericalError("LV OPF linear program did not reach an optimum");
    }
    for (Index d = 0; d < nd; ++d) {
        auto& sp = res.vertex.setpoints[static_cast<std::size_t>(d)];
        sp.dp = sol.x(2 * d) - sol.x(2 * nd + 2 * d);
        sp.dq = sol.x(2 * d + 1) - sol.x(2 * nd + 2 * d + 1);
        res.vertex.dp += sp.dp;
        res.vertex.dq += sp.dq;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Hull

namespace {

double cross(const FlexVertex& o, const FlexVertex& a, const FlexVertex& b) {
    return (a.dp - o.dp) * (b.dq - o.dq) - (a.dq - o.dq) * (b.dp - o.dp);
}

HalfPlane make_plane(double a, double b, double px, double py) {
    const double norm = std::hypot(a, b);
    return {a / norm, b / norm, (a * px + b * py) / norm};
}

}  // namespace

FlexArea hull_area(const std::string& transformer_id, std::vector<FlexVertex> pts) {
    FlexArea area;
    area.transformer_id = transformer_id;
    std::stable_sort(pts.begin(), pts.end(), [](const FlexVertex& a, const FlexVertex& b) {
        return a.dp < b.dp || (a.dp == b.dp && a.dq < b.dq);
    });
    std::vector<FlexVertex> uniq;
    for (auto& p : pts) {
        bool dup = false;
        for (const auto& u : uniq) {
            if (std::hypot(u.dp - p.dp, u.dq - p.dq) <= 1e-9) {
                dup = true;
                break;
            }
        }
        if (!dup) uniq.push_back(std::move(p));
    }
    double scale = 1.0;
    for (const auto& u : uniq) scale = std::max({scale, std::abs(u.dp), std::abs(u.dq)});
    const double eps = 1e-10 * scale * scale;

    std::vector<FlexVertex> hull;
    if (uniq.size() <= 2) {
        hull = uniq;
    } else {
        std::vector<FlexVertex> h(2 * uniq.size());
        std::size_t k = 0;
        for (std::size_t i = 0; i < uniq.size(); ++i) {
            while (k >= 2 && cross(h[k - 2], h[k - 1], uniq[i]) <= eps) --k;
            h[k++] = uniq[i];
        }
        for (std::size_t i = uniq.size() - 1, t = k + 1; i-- > 0;) {
            while (k >= t && cross(h[k - 2], h[k - 1], uniq[i]) <= eps) --k;
            h[k++] = uniq[i];
        }
        h.resize(k - 1);
        hull = std::move(h);
    }

    if (hull.size() >= 3) {
        area.degeneracy = Degeneracy::Polygon;
        for (std::size_t i = 0; i < hull.size(); ++i) {
            const auto& a = hull[i];
            const auto& b = hull[(i + 1) % hull.size()];
            area.halfplanes.push_back(make_plane(b.dq - a.dq, -(b.dp - a.dp), a.dp, a.dq));
        }
    } else if (hull.size() == 2) {
        area.degeneracy = Degeneracy::Segment;
        const auto& a = hull[0];
        const auto& b = hull[1];
        const double ux = b.dp - a.dp, uy = b.dq - a.dq;
        area.halfplanes.push_back(make_plane(-uy, ux, a.dp, a.dq));
        area.halfplanes.push_back(make_plane(uy, -ux, a.dp, a.dq));
        area.halfplanes.push_back(make_plane(ux, uy, b.dp, b.dq));
        area.halfplanes.push_back(make_plane(-ux, -uy, a.dp, a.dq));
    } else {
        area.degeneracy = Degeneracy::Point;
        const double px = hull.empty() ? 0.0 : hull[0].dp;
        const double py = hull.empty() ? 0.0 : hull[0].dq;
        area.halfplanes = {{1, 0, px}, {-1, 0, -px}, {0, 1, py}, {0, -1, -py}};
        if (hull.empty()) hull.push_back(FlexVertex{});
    }
    area.vertices = std::move(hull);
    return area;
}

FlexArea build_flex_area(const std::string& transformer_id, const LvOperatingPoint& op,
                         const std::vector<DerFlexLimits>& limits,
                         const std::vector<FlexDirection>& directions) {
    check_limits(limits);
    std::vector<FlexVertex> pts{zero_vertex(limits)};
    for (const auto& dir : directions) {
        for (const FlexDirection tie : {FlexDirection{-dir.beta, dir.alpha}, FlexDirection{dir.beta, -dir.alpha}}) {
            LvOpfResult r = lv_opf(op, limits, dir, tie);
            if (!r.feasible) {
                FlexArea area = hull_area(transformer_id, {zero_vertex(limits)});
                area.pre_existing_violation = true;
                area.violation = r.violation;
                return area;
            }
            pts.push_back(std::move(r.vertex));
        }
    }
    return hull_area(transformer_id, std::move(pts));
}

Containment contains(const FlexArea& area, double dp, double dq, double tolerance) {
    Containment c;
    for (std::size_t k = 0; k < area.halfplanes.size(); ++k) {
        const auto& h = area.halfplanes[k];
        if (h.a * dp + h.b * dq > h.c + tolerance) {
            c.violated = static_cast<int>(k);
            return c;
        }
    }
    c.inside = true;
    return c;
}

namespace {

std::vector<DerSetpoint> blend(const FlexVertex& a, double la, const FlexVertex& b, double lb) {
    std::vector<DerSetpoint> out = a.setpoints;
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k].dp = la * a.setpoints[k].dp + lb * b.setpoints[k].dp;
        out[k].dq = la * a.setpoints[k].dq + lb * b.setpoints[k].dq;
    }
    return out;
}

}  // namespace

std::vector<DerSetpoint> setpoints_for(const FlexArea& area, double dp, double dq) {
    const auto& vs = area.vertices;
    if (vs.empty()) return {};
    if (area.degeneracy == Degeneracy::Point) return blend(vs[0], 0.0, vs[0], 0.0);
    if (area.degeneracy == Degeneracy::Segment) {
        for (const auto& end : vs) {
            const double n2 = end.dp * end.dp + end.dq * end.dq;
            const double t = n2 > 0.0 ? (dp * end.dp + dq * end.dq) / n2 : 0.0;
            if (t > 0.0) return blend(end, std::min(t, 1.0), end, 0.0);
        }
        return blend(vs[0], 0.0, vs[0], 0.0);
    }
    double scale = 1.0;
    for (const auto& v : vs) scale = std::max({scale, std::abs(v.dp), std::abs(v.dq)});
    double best_violation = std::numeric_limits<double>::infinity();
    std::size_t best = 0;
    double best_la = 0.0, best_lb = 0.0;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        const auto& a = vs[i];
        const auto& b = vs[(i + 1) % vs.size()];
        const double det = a.dp * b.dq - a.dq * b.dp;
        if (std::abs(det) <= 1e-12 * scale * scale) continue;
        const double la = (dp * b.dq - dq * b.dp) / det;
        const double lb = (a.dp * dq - a.dq * dp) / det;
        const double violation =
            std::max({0.0, -la, -lb, la + lb - 1.0});
        if (violation < best_violation) {
            best_violation = violation;
            best = i;
            best_la = la;
            best_lb = lb;
        }
        if (violation <= 1e-9) break;
    }
    if (!std::isfinite(best_violation)) return blend(vs[0], 0.0, vs[0], 0.0);
    best_la = std::max(0.0, best_la);
    best_lb = std::max(0.0, best_lb);
    const double sum = best_la + best_lb;
    if (sum > 1.0) {
        best_la /= sum;
        best_lb /= sum;
    }
    return blend(vs[best], best_la, vs[(best + 1) % vs.size()], best_lb);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

const char* degeneracy_name(Degeneracy d) {
    switch (d) {
        case Degeneracy::Polygon: return "polygon";
        case Degeneracy::Segment: return "segment";
        case Degeneracy::Point: return "point";
    }
    return "point";
}

}  // namespace

nlohmann::json to_json(const FlexArea& area) {
    nlohmann::json j;
    j["transformer_id"] = area.transformer_id;
    j["degeneracy"] = degeneracy_name(area.degeneracy);
    j["pre_existing_violation"] = area.pre_existing_violation;
    if (area.pre_existing_violation) j["violation"] = area.violation;
    j["vertices"] = nlohmann::json::array();
    j["setpoints"] = nlohmann::json::array();
    for (const auto& v : area.vertices) {
        j["vertices"].push_back({v.dp, v.dq});
        nlohmann::json sp = nlohmann::json::array();
        for (const auto& s : v.setpoints) {
            sp.push_back({{"der", s.der_id}, {"bus", s.bus}, {"dp", s.dp}, {"dq", s.dq}});
        }
        j["setpoints"].push_back(std::move(sp));
    }
    j["halfplanes"] = nlohmann::json::array();
    for (const auto& h : area.halfplanes) j["halfplanes"].push_back({h.a, h.b, h.c});
    j["area"] = area.area();
    return j;
}

FlexArea flex_area_from_json(const nlohmann::json& j) {
    try {
        FlexArea area;
        area.transformer_id = j.at("transformer_id").get<std::string>();
        const std::string deg = j.value("degeneracy", std::string("polygon"));
        area.degeneracy = deg == "segment" ? Degeneracy::Segment
                          : deg == "point" ? Degeneracy::Point
                                           : Degeneracy::Polygon;
        area.pre_existing_violation = j.value("pre_existing_violation", false);
        area.violation = j.value("violation", std::string());
        const auto& verts = j.at("vertices");
        for (std::size_t k = 0; k < verts.size(); ++k) {
            FlexVertex v;
            v.dp = verts[k].at(0).get<double>();
            v.dq = verts[k].at(1).get<double>();
            if (j.contains("setpoints") && k < j["setpoints"].size()) {
                for (const auto& s : j["setpoints"][k]) {
                    v.setpoints.push_back({s.at("der").get<std::string>(), s.at("bus").get<std::string>(),
                                           s.at("dp").get<double>(), s.at("dq").get<double>()});
                }
            }
            area.vertices.push_back(std::move(v));
        }
        for (const auto& h : j.at("halfplanes")) {
            area.halfplanes.push_back({h.at(0).get<double>(), h.at(1).get<double>(), h.at(2).get<double>()});
        }
        return area;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed flex area JSON: ") + e.what());
    }
}

}  // namespace flexgrid
