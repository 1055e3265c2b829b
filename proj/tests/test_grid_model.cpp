#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "flexgrid/errors.hpp"
#include "flexgrid/grid_model.hpp"

using namespace flexgrid;

TEST_CASE("bundled two-grid fixture has 14 buses") {
    const Network net = load_network(testing::data_path("fixture_small.json"));
    CHECK(net.bus_count() == 14);
    CHECK(net.lv_grids.size() == 2);
    const Network full = load_network(testing::data_path("fixture.json"));
    CHECK(full.bus_count() == 18);
    double pv = 0.0;
    for (const auto& lv : full.lv_grids) {
        for (const auto& d : lv.grid.ders) {
            if (d.kind == DerKind::PV) pv += d.p_rating_kw;
        }
    }
    CHECK(pv == doctest::Approx(200.0));
}

TEST_CASE("a cycle among branches names the closing edge") {
    auto j = testing::mv_only_network({{"ab", "a", "b"}, {"bc", "b", "c"}, {"ca", "c", "a"}}, {"a", "b", "c"});
    try {
        parse_network(j.dump());
        FAIL("expected a topology error");
    } catch (const TopologyError& e) {
        CHECK(e.kind() == TopologyError::Kind::Cycle);
        REQUIRE(e.ids().size() == 1);
        CHECK(e.ids()[0] == "ca");
    }
}

TEST_CASE("zero ampacity is rejected for that branch") {
    auto j = testing::mv_only_network({{"ab", "a", "b"}, {"bc", "b", "c"}}, {"a", "b", "c"});
    j["mv"]["branches"][1]["i_max_a"] = 0.0;
    try {
        parse_network(j.dump());
        FAIL("expected an input error");
    } catch (const InputError& e) {
        CHECK(e.element().find("bc") != std::string::npos);
    }
}

TEST_CASE("zero impedance is rejected at load time") {
    auto j = testing::mv_only_network({{"ab", "a", "b"}}, {"a", "b"}, 0.0, 0.0);
    CHECK_THROWS_AS(parse_network(j.dump()), InputError);
}

TEST_CASE("malformed JSON reports a position") {
    try {
        parse_network("{\n  \"s_base_kva\": ,\n}");
        FAIL("expected an input error");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("validate_radial on small trees") {
    SUBCASE("two buses") {
        const auto r = validate_radial({"s", "c"}, {{"e", "s", "c"}}, "s");
        CHECK(r.parent.at("c") == "s");
        CHECK(r.parent.count("s") == 0);
        CHECK(r.depth.at("s") == 0);
        CHECK(r.depth.at("c") == 1);
    }
    SUBCASE("star from the slack") {
        const auto r = validate_radial({"s", "a", "b", "c"},
                                       {{"1", "s", "a"}, {"2", "b", "s"}, {"3", "s", "c"}}, "s");
        CHECK(r.depth.at("a") == 1);
        CHECK(r.depth.at("b") == 1);
        CHECK(r.depth.at("c") == 1);
    }
    SUBCASE("two components") {
        try {
            validate_radial({"s", "a", "b", "c"}, {{"1", "s", "a"}, {"2", "b", "c"}}, "s");
            FAIL("expected a topology error");
        } catch (const TopologyError& e) {
            CHECK(e.kind() == TopologyError::Kind::Disconnected);
            CHECK(e.ids() == std::vector<std::string>{"b", "c"});
        }
    }
}

namespace {

// Independent oracle: n - 1 edges and every bus reachable by repeated relaxation.
bool is_spanning_tree(int n, const std::vector<std::pair<int, int>>& edges) {
    if (static_cast<int>(edges.size()) != n - 1) return false;
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    seen[0] = true;
    for (bool grew = true; grew;) {
        grew = false;
        for (auto [a, b] : edges) {
            if (seen[static_cast<std::size_t>(a)] != seen[static_cast<std::size_t>(b)]) {
                seen[static_cast<std::size_t>(a)] = seen[static_cast<std::size_t>(b)] = true;
                grew = true;
            }
        }
    }
    for (bool s : seen) {
        if (!s) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("radiality accepts exactly the spanning trees of small complete graphs") {
    for (int n = 2; n <= 6; ++n) {
        std::vector<std::pair<int, int>> all;
        for (int a = 0; a < n; ++a) {
            for (int b = a + 1; b < n; ++b) all.emplace_back(a, b);
        }
        std::vector<std::string> buses;
        for (int b = 0; b < n; ++b) buses.push_back("n" + std::to_string(b));
        int trees = 0;
        for (unsigned mask = 0; mask < (1u << all.size()); ++mask) {
            std::vector<std::pair<int, int>> chosen;
            std::vector<TopologyEdge> edges;
            for (std::size_t k = 0; k < all.size(); ++k) {
                if (!(mask & (1u << k))) continue;
                chosen.push_back(all[k]);
                edges.push_back({"e" + std::to_string(k), buses[static_cast<std::size_t>(all[k].first)],
                                 buses[static_cast<std::size_t>(all[k].second)]});
            }
            const bool expected = is_spanning_tree(n, chosen);
            bool accepted = true;
            try {
                validate_radial(buses, edges, buses[0]);
            } catch (const TopologyError&) {
                accepted = false;
            }
            CHECK(accepted == expected);
            trees += accepted;
        }
        // Cayley's formula.
        CHECK(trees == static_cast<int>(std::lround(std::pow(n, n - 2))));
    }
}

TEST_CASE("per-unit conversions") {
    const PerUnitBase base(1000.0, 400.0);
    CHECK(base.power_to_pu(100.0) == doctest::Approx(0.1));
    CHECK(base.voltage_to_pu(400.0) == doctest::Approx(1.0));
    CHECK(base.z_base_ohm() == doctest::Approx(0.16));
    CHECK(base.i_base_a() == doctest::Approx(1e6 / (std::sqrt(3.0) * 400.0)));

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1e4, 1e4);
    std::uniform_real_distribution<double> s(1.0, 1e5);
    for (int k = 0; k < 1000; ++k) {
        const PerUnitBase b(s(rng), s(rng));
        const double v = u(rng);
        CHECK(std::abs(b.power_from_pu(b.power_to_pu(v)) - v) <= 1e-12 * std::max(1.0, std::abs(v)));
        CHECK(std::abs(b.voltage_from_pu(b.voltage_to_pu(v)) - v) <= 1e-12 * std::max(1.0, std::abs(v)));
        CHECK(std::abs(b.impedance_from_pu(b.impedance_to_pu(v)) - v) <= 1e-12 * std::max(1.0, std::abs(v)));
        CHECK(std::abs(b.current_from_pu(b.current_to_pu(v)) - v) <= 1e-12 * std::max(1.0, std::abs(v)));
    }
}

TEST_CASE("combined system joins LV grids through ideal links") {
    const Network net = load_network(testing::data_path("fixture.json"));
    const RadialSystem sys = combined_system(net);
    CHECK(sys.bus_count() == 18);
    CHECK(sys.edge_count() == 17);
    const RadialEdge& t1 = sys.edges[static_cast<std::size_t>(sys.edge_index("T1"))];
    CHECK(t1.ideal);
    CHECK(sys.bus_ids[static_cast<std::size_t>(t1.from)] == "A1");
    CHECK(sys.bus_ids[static_cast<std::size_t>(t1.to)] == "T1R");
    for (std::size_t k = 0; k < sys.edge_count(); ++k) {
        CHECK(sys.edges[k].to == static_cast<int>(k + 1));
        CHECK(sys.edges[k].from < sys.edges[k].to);
    }
    const RadialSystem mv = mv_system(net);
    const double z_base = 10000.0 * 10000.0 / 1e6;
    const RadialEdge& sa1 = mv.edges[static_cast<std::size_t>(mv.edge_index("S-A1"))];
    CHECK(sa1.r == doctest::Approx(0.045));
    CHECK(sa1.r * z_base == doctest::Approx(4.5));
}

TEST_CASE("profiles round-trip and are validated") {
    const InjectionProfile p = load_profiles(testing::data_path("profiles.csv"));
    CHECK(p.size() == 144);
    CHECK(p.step_minutes() == doctest::Approx(10.0));
    std::ostringstream out;
    write_profiles(p, out);
    const InjectionProfile q = parse_profiles(out.str());
    CHECK(q.timestamps == p.timestamps);
    CHECK(q.net_kw("T3L2", 75) == p.net_kw("T3L2", 75));

    CHECK_THROWS_AS(parse_profiles("timestamp,bus_id,p_gen_kw\n"), InputError);
    CHECK_THROWS_AS(parse_profiles("timestamp,bus_id,p_gen_kw,p_load_kw,q_gen_kvar,q_load_kvar\n"
                                   "2024-06-21T00:00:00Z,a,1,0,0,0\n"
                                   "2024-06-21T00:07:00Z,a,1,0,0,0\n"),
                    InputError);
}

TEST_CASE("RFC3339 timestamps") {
    CHECK(parse_rfc3339("1970-01-01T00:00:00Z") == 0);
    CHECK(parse_rfc3339("2024-06-21T12:30:00Z") == 1718973000);
    CHECK(parse_rfc3339("2024-06-21T14:30:00+02:00") == 1718973000);
    CHECK(format_rfc3339(1718973000) == "2024-06-21T12:30:00Z");
    CHECK_THROWS_AS(parse_rfc3339("2024-06-21 12:30"), InputError);
}
