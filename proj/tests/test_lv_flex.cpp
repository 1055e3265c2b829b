#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"

#include "flexgrid/lv_flex.hpp"
#include "flexgrid/sensitivity.hpp"

using namespace flexgrid;

namespace {

// MV slack feeding one transformer; LV chain R - L1 - L2 with one DER at L2.
nlohmann::json single_der_network(const nlohmann::json& der) {
    nlohmann::json j = testing::mv_only_network({{"S-A", "S", "A"}}, {"S", "A"});
    nlohmann::json lv;
    lv["id"] = "T";
    lv["v_base_v"] = 400.0;
    lv["v_min"] = 0.9;
    lv["v_max"] = 1.1;
    lv["transformer"] = {{"mv_bus", "A"}, {"kva_rating", 400.0}, {"lv_root", "R"}};
    lv["buses"] = {{{"id", "R"}}, {{"id", "L1"}}, {{"id", "L2"}}};
    lv["branches"] = {{{"id", "R-L1"}, {"from", "R"}, {"to", "L1"}, {"r_ohm", 0.0016}, {"x_ohm", 0.001}, {"i_max_a", 1000.0}},
                      {{"id", "L1-L2"}, {"from", "L1"}, {"to", "L2"}, {"r_ohm", 0.0016}, {"x_ohm", 0.001}, {"i_max_a", 1000.0}}};
    lv["ders"] = nlohmann::json::array();
    if (!der.is_null()) lv["ders"].push_back(der);
    j["lv_grids"].push_back(lv);
    return j;
}

InjectionProfile one_row(const std::string& bus, double p_gen, double p_load) {
    InjectionProfile p;
    p.timestamps = {0};
    p.buses[bus] = InjectionSeries{{p_gen}, {p_load}, {0.0}, {0.0}};
    return p;
}

struct Setup {
    Network net;
    RadialSystem lv;
    LvOperatingPoint op;
    std::vector<DerFlexLimits> limits;
};

Setup setup_single(const nlohmann::json& der, const InjectionProfile& prof) {
    Setup s{parse_network(single_der_network(der).dump()), {}, {}, {}};
    s.lv = lv_system(s.net, 0);
    s.op = make_operating_point(s.lv, analytical_sensitivities(s.lv, injections_pu(s.lv, prof, 0), 1.0));
    s.limits = der_flex_limits(s.net.lv_grids[0], prof, 0);
    return s;
}

Setup setup_fixture(std::size_t grid, std::size_t t) {
    Setup s{load_network(testing::data_path("fixture.json")), {}, {}, {}};
    const InjectionProfile prof = load_profiles(testing::data_path("profiles.csv"));
    s.lv = lv_system(s.net, grid);
    s.op = make_operating_point(s.lv, analytical_sensitivities(s.lv, injections_pu(s.lv, prof, t), 1.0));
    s.limits = der_flex_limits(s.net.lv_grids[grid], prof, t);
    return s;
}

bool inside_all(const FlexArea& outer, const FlexArea& inner, double tol) {
    for (const auto& v : inner.vertices) {
        if (!contains(outer, v.dp, v.dq, tol).inside) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("DER limit formulas") {
    Der pv{"pv", "b", DerKind::PV, 100.0, true, 0.1, 0.9};
    const auto l = der_flex_limits(pv, 80.0);
    CHECK(l.dp_min == doctest::Approx(-8.0));
    CHECK(l.dp_max == 0.0);
    const double tanphi = std::sqrt(1.0 - 0.81) / 0.9;
    CHECK(l.dq_max == doctest::Approx(tanphi * 72.0));
    CHECK(l.dq_min == doctest::Approx(-tanphi * 72.0));
    pv.controllable = false;
    const auto z = der_flex_limits(pv, 80.0);
    CHECK(z.dp_min == 0.0);
    CHECK(z.dq_max == 0.0);
}

TEST_CASE("no controllable DERs gives the origin in every direction") {
    const Setup s = setup_single(nullptr, one_row("L2", 0.0, 20.0));
    for (const auto& dir : FlexDirection::compass8()) {
        const LvOpfResult r = lv_opf(s.op, s.limits, dir);
        CHECK(r.feasible);
        CHECK(r.vertex.dp == 0.0);
        CHECK(r.vertex.dq == 0.0);
    }
    const FlexArea a = build_flex_area("T", s.op, s.limits, FlexDirection::compass8());
    CHECK(a.degeneracy == Degeneracy::Point);
    CHECK(a.area() == 0.0);
    CHECK(contains(a, 0.0, 0.0).inside);
    CHECK_FALSE(contains(a, 0.1, 0.0).inside);
}

TEST_CASE("single PV with unity power factor yields a P-only segment") {
    const nlohmann::json der = {{"id", "pv"}, {"bus", "L2"}, {"kind", "pv"}, {"p_rating_kw", 120.0},
                                {"controllable", true}, {"curtailment_fraction", 0.1}, {"pf_min", 1.0}};
    const Setup s = setup_single(der, one_row("L2", 100.0, 0.0));
    const LvOpfResult r = lv_opf(s.op, s.limits, {-1.0, 0.0});
    REQUIRE(r.feasible);
    CHECK(r.vertex.dp == doctest::Approx(-10.0));
    CHECK(r.vertex.dq == doctest::Approx(0.0));
    const FlexArea a = build_flex_area("T", s.op, s.limits, FlexDirection::compass8());
    CHECK(a.degeneracy == Degeneracy::Segment);
    REQUIRE(a.vertices.size() == 2);
    double lo = 0.0, hi = 0.0;
    for (const auto& v : a.vertices) {
        lo = std::min(lo, v.dp);
        hi = std::max(hi, v.dp);
        CHECK(v.dq == doctest::Approx(0.0));
    }
    CHECK(lo == doctest::Approx(-10.0));
    CHECK(hi == doctest::Approx(0.0));
    CHECK(a.max_dp_reach() == doctest::Approx(10.0));
    CHECK(contains(a, -5.0, 0.0).inside);
    CHECK_FALSE(contains(a, -5.0, 0.5).inside);
    const auto sp = setpoints_for(a, -4.0, 0.0);
    REQUIRE(sp.size() == 1);
    CHECK(sp[0].dp == doctest::Approx(-4.0));
}

TEST_CASE("a limit violated at the operating point is reported") {
    const nlohmann::json der = {{"id", "pv"}, {"bus", "L2"}, {"kind", "pv"}, {"p_rating_kw", 120.0},
                                {"controllable", true}, {"curtailment_fraction", 0.1}, {"pf_min", 0.9}};
    Setup s = setup_single(der, one_row("L2", 100.0, 0.0));
    for (auto& v : s.op.v_max) v = 0.99;
    const FlexArea a = build_flex_area("T", s.op, s.limits, FlexDirection::compass8());
    CHECK(a.pre_existing_violation);
    CHECK(a.degeneracy == Degeneracy::Point);
    CHECK_FALSE(a.violation.empty());
}

TEST_CASE("fixture polygon: origin, vertices and outward-scaled vertices") {
    const Setup s = setup_fixture(2, 75);
    const FlexArea a = build_flex_area("T3", s.op, s.limits, FlexDirection::compass8());
    REQUIRE(a.degeneracy == Degeneracy::Polygon);
    CHECK(contains(a, 0.0, 0.0).inside);
    double cx = 0.0, cy = 0.0;
    for (const auto& v : a.vertices) {
        CHECK(contains(a, v.dp, v.dq).inside);
        cx += v.dp / static_cast<double>(a.vertices.size());
        cy += v.dq / static_cast<double>(a.vertices.size());
    }
    for (const auto& v : a.vertices) {
        const double px = cx + 1.01 * (v.dp - cx);
        const double py = cy + 1.01 * (v.dq - cy);
        const Containment c = contains(a, px, py);
        CHECK_FALSE(c.inside);
        REQUIRE(c.violated >= 0);
        const auto& h = a.halfplanes[static_cast<std::size_t>(c.violated)];
        CHECK(h.a * px + h.b * py > h.c);
    }
    // Counterclockwise orientation and unit normals.
    double twice_area = 0.0;
    for (std::size_t k = 0; k < a.vertices.size(); ++k) {
        const auto& p = a.vertices[k];
        const auto& q = a.vertices[(k + 1) % a.vertices.size()];
        twice_area += p.dp * q.dq - q.dp * p.dq;
    }
    CHECK(twice_area > 0.0);
    CHECK(twice_area / 2.0 == doctest::Approx(a.area()));
    for (const auto& h : a.halfplanes) CHECK(std::hypot(h.a, h.b) == doctest::Approx(1.0));
}

TEST_CASE("setpoints realize the requested aggregate within DER boxes") {
    const Setup s = setup_fixture(2, 75);
    const FlexArea a = build_flex_area("T3", s.op, s.limits, FlexDirection::compass8());
    std::mt19937_64 rng(8);
    double lo_p = 0, hi_p = 0, lo_q = 0, hi_q = 0;
    for (const auto& v : a.vertices) {
        lo_p = std::min(lo_p, v.dp);
        hi_p = std::max(hi_p, v.dp);
        lo_q = std::min(lo_q, v.dq);
        hi_q = std::max(hi_q, v.dq);
    }
    std::uniform_real_distribution<double> up(lo_p, hi_p), uq(lo_q, hi_q);
    int tested = 0;
    while (tested < 200) {
        const double dp = up(rng), dq = uq(rng);
        if (!contains(a, dp, dq).inside) continue;
        ++tested;
        const auto sp = setpoints_for(a, dp, dq);
        double sp_p = 0.0, sp_q = 0.0;
        for (const auto& x : sp) {
            sp_p += x.dp;
            sp_q += x.dq;
            for (const auto& l : s.limits) {
                if (l.der_id != x.der_id) continue;
                CHECK(x.dp >= l.dp_min - 1e-9);
                CHECK(x.dp <= l.dp_max + 1e-9);
                CHECK(x.dq >= l.dq_min - 1e-9);
                CHECK(x.dq <= l.dq_max + 1e-9);
            }
        }
        CHECK(sp_p == doctest::Approx(dp).epsilon(1e-9).scale(1.0));
        CHECK(sp_q == doctest::Approx(dq).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("enlarging DER ranges never shrinks the polygon") {
    const Setup s = setup_fixture(2, 75);
    std::vector<FlexArea> areas;
    for (double f : {0.25, 0.5, 1.0}) {
        auto limits = s.limits;
        for (auto& l : limits) {
            l.dp_min *= f;
            l.dp_max *= f;
            l.dq_min *= f;
            l.dq_max *= f;
        }
        areas.push_back(build_flex_area("T3", s.op, limits, FlexDirection::compass8()));
    }
    CHECK(inside_all(areas[1], areas[0], 1e-7));
    CHECK(inside_all(areas[2], areas[1], 1e-7));
    CHECK(areas[0].area() <= areas[1].area());
    CHECK(areas[1].area() <= areas[2].area());
}

TEST_CASE("more directions refine the polygon outward") {
    for (std::size_t g = 0; g < 3; ++g) {
        const Setup s = setup_fixture(g, 78);
        const FlexArea a8 = build_flex_area("T", s.op, s.limits, FlexDirection::angular(8));
        const FlexArea a16 = build_flex_area("T", s.op, s.limits, FlexDirection::angular(16));
        CHECK(inside_all(a16, a8, 1e-7));
        CHECK(a8.area() <= a16.area() + 1e-9);
    }
    const auto d4 = FlexDirection::angular(4);
    REQUIRE(d4.size() == 4);
    CHECK(d4[1].alpha == doctest::Approx(0.0));
    CHECK(d4[1].beta == doctest::Approx(1.0));
    const auto d8 = FlexDirection::compass8();
    CHECK(d8[1].alpha == 1.0);
    CHECK(d8[1].beta == 1.0);
}

TEST_CASE("hull degeneracies and JSON round trip") {
    const FlexArea seg = hull_area("T", {{0.0, 0.0, {}}, {-5.0, 0.0, {}}, {-2.0, 0.0, {}}});
    CHECK(seg.degeneracy == Degeneracy::Segment);
    CHECK(seg.vertices.size() == 2);
    const FlexArea poly = hull_area("T", {{0, 0, {}}, {1, 0, {}}, {0, 1, {}}, {0.2, 0.2, {}}, {1, 0, {}}});
    CHECK(poly.degeneracy == Degeneracy::Polygon);
    CHECK(poly.vertices.size() == 3);
    CHECK(poly.area() == doctest::Approx(0.5));

    const Setup s = setup_fixture(0, 75);
    const FlexArea a = build_flex_area("T1", s.op, s.limits, FlexDirection::compass8());
    const FlexArea b = flex_area_from_json(to_json(a));
    CHECK(b.transformer_id == "T1");
    CHECK(b.degeneracy == a.degeneracy);
    REQUIRE(b.vertices.size() == a.vertices.size());
    for (std::size_t k = 0; k < a.vertices.size(); ++k) {
        CHECK(b.vertices[k].dp == a.vertices[k].dp);
        CHECK(b.vertices[k].dq == a.vertices[k].dq);
        CHECK(b.vertices[k].setpoints.size() == a.vertices[k].setpoints.size());
    }
    CHECK(b.halfplanes.size() == a.halfplanes.size());
}
