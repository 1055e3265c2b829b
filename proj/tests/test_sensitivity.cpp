#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "helpers.hpp"

#include "flexgrid/errors.hpp"
#include "flexgrid/sensitivity.hpp"

using namespace flexgrid;

namespace {

struct FdBlocks {
    Eigen::MatrixXd vp, vq, ip, iq;
};

// Central differences of the exact power flow, the oracle for every block.
FdBlocks finite_differences(const RadialSystem& sys, const std::vector<cplx>& s, double root_v,
                            double h = 1e-5) {
    const auto nb = static_cast<Eigen::Index>(sys.bus_count());
    const auto ne = static_cast<Eigen::Index>(sys.edge_count());
    FdBlocks fd{Eigen::MatrixXd::Zero(nb, nb - 1), Eigen::MatrixXd::Zero(nb, nb - 1),
                Eigen::MatrixXd::Zero(ne, nb - 1), Eigen::MatrixXd::Zero(ne, nb - 1)};
    for (Eigen::Index c = 0; c < nb - 1; ++c) {
        for (int part = 0; part < 2; ++part) {
            const cplx d = part == 0 ? cplx(h, 0.0) : cplx(0.0, h);
            auto plus = s, minus = s;
            plus[static_cast<std::size_t>(c + 1)] += d;
            minus[static_cast<std::size_t>(c + 1)] -= d;
            const PfSolution a = solve_pf(sys, plus, root_v, {1e-13, 200});
            const PfSolution b = solve_pf(sys, minus, root_v, {1e-13, 200});
            for (Eigen::Index r = 0; r < nb; ++r) {
                const double g = (a.v_mag(static_cast<std::size_t>(r)) - b.v_mag(static_cast<std::size_t>(r))) / (2 * h);
                (part == 0 ? fd.vp : fd.vq)(r, c) = g;
            }
            for (Eigen::Index r = 0; r < ne; ++r) {
                const double g = (a.i_mag(static_cast<std::size_t>(r)) - b.i_mag(static_cast<std::size_t>(r))) / (2 * h);
                (part == 0 ? fd.ip : fd.iq)(r, c) = g;
            }
        }
    }
    return fd;
}

double max_abs_diff(const SensitivityMatrix& k, const FdBlocks& fd) {
    return std::max({(k.k_vp - fd.vp).cwiseAbs().maxCoeff(), (k.k_vq - fd.vq).cwiseAbs().maxCoeff(),
                     (k.k_ip - fd.ip).cwiseAbs().maxCoeff(), (k.k_iq - fd.iq).cwiseAbs().maxCoeff()});
}

std::vector<std::vector<cplx>> probe_window(const std::vector<cplx>& s0, int n, double amp,
                                            std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-amp, amp);
    std::vector<std::vector<cplx>> out(static_cast<std::size_t>(n), s0);
    for (int r = 0; r + 1 < n; ++r) {
        for (std::size_t b = 1; b < s0.size(); ++b) out[static_cast<std::size_t>(r)][b] += cplx(d(rng), d(rng));
    }
    return out;
}

}  // namespace

TEST_CASE("two-bus voltage sensitivity is positive and matches finite differences") {
    const RadialSystem sys = testing::make_system({0}, {0.05}, {0.03});
    const std::vector<cplx> s{0.0, cplx(-0.1, -0.02)};
    const SensitivityMatrix k = analytical_sensitivities(sys, s, 1.0);
    const FdBlocks fd = finite_differences(sys, s, 1.0);
    CHECK(k.k_vp(1, 0) > 0.0);
    CHECK(k.k_vp(1, 0) == doctest::Approx(0.05).epsilon(0.1));  // about r / V0
    CHECK(max_abs_diff(k, fd) <= 1e-6);
    CHECK(k.k_vp.row(0).norm() == 0.0);
}

TEST_CASE("fixture LV grids match finite differences") {
    const Network net = load_network(testing::data_path("fixture.json"));
    const InjectionProfile prof = load_profiles(testing::data_path("profiles.csv"));
    for (std::size_t g = 0; g < net.lv_grids.size(); ++g) {
        const RadialSystem lv = lv_system(net, g);
        for (std::size_t t : {0u, 75u, 114u}) {
            const auto s = injections_pu(lv, prof, t);
            AnalyticalOptions opts;
            opts.compute_validity_radius = false;
            const SensitivityMatrix k = analytical_sensitivities(lv, s, 1.02, opts);
            CHECK(max_abs_diff(k, finite_differences(lv, s, 1.02)) <= 1e-4);
        }
    }
}

TEST_CASE("electrically identical twins have mirrored columns") {
    const RadialSystem sys = testing::make_system({0, 1, 1}, {0.02}, {0.01});
    const std::vector<cplx> s{0.0, cplx(-0.05, -0.01), cplx(-0.03, -0.01), cplx(-0.03, -0.01)};
    const SensitivityMatrix k = analytical_sensitivities(sys, s, 1.0);
    const int c2 = k.injection_column("b2");
    const int c3 = k.injection_column("b3");
    CHECK(std::abs(k.k_vq(1, c2) - k.k_vq(1, c3)) <= 1e-9);
    CHECK(std::abs(k.k_vq(2, c2) - k.k_vq(3, c3)) <= 1e-9);
    CHECK(std::abs(k.k_vq(3, c2) - k.k_vq(2, c3)) <= 1e-9);
    CHECK(std::abs(k.k_vq(0, c2) - k.k_vq(0, c3)) <= 1e-9);
}

TEST_CASE("ideal links cannot be linearized") {
    RadialSystem sys = testing::make_system({0}, {0.0}, {0.0});
    sys.edges[0].ideal = true;
    CHECK_THROWS_AS(analytical_sensitivities(sys, {0.0, 0.0}, 1.0), InputError);
}

TEST_CASE("linear prediction error inside the validity radius") {
    const Network net = load_network(testing::data_path("fixture.json"));
    const InjectionProfile prof = load_profiles(testing::data_path("profiles.csv"));
    const RadialSystem lv = lv_system(net, 0);
    const auto s = injections_pu(lv, prof, 75);
    const SensitivityMatrix k = analytical_sensitivities(lv, s, 1.0);
    REQUIRE(k.validity_radius > 0.0);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(-k.validity_radius, k.validity_radius);
    const auto m = static_cast<Eigen::Index>(k.injection_count());
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::VectorXd dp(m), dq(m);
        auto s1 = s;
        for (Eigen::Index c = 0; c < m; ++c) {
            dp(c) = d(rng);
            dq(c) = d(rng);
            s1[static_cast<std::size_t>(c + 1)] += cplx(dp(c), dq(c));
        }
        const PfSolution pf = solve_pf(lv, s1, 1.0);
        const Eigen::VectorXd pred = k.v0 + k.k_vp * dp + k.k_vq * dq;
        for (Eigen::Index b = 0; b < pred.size(); ++b) {
            CHECK(std::abs(pred(b) - pf.v_mag(static_cast<std::size_t>(b))) <= 5e-4);
        }
    }
}

TEST_CASE("regression recovers the analytical sensitivities from a noiseless window") {
    const Network net = load_network(testing::data_path("fixture.json"));
    const InjectionProfile prof = load_profiles(testing::data_path("profiles.csv"));
    const RadialSystem lv = lv_system(net, 2);
    const auto s = injections_pu(lv, prof, 75);
    const auto samples = probe_window(s, 288, 0.01, 3);
    const SensitivityMatrix est = estimate_sensitivities(synthesize_measurements(lv, samples, 1.0, {0.0, 1}));
    const SensitivityMatrix ref = analytical_sensitivities(lv, s, 1.0);
    CHECK(relative_frobenius_error(est, ref) <= 0.02);
    CHECK(est.unidentifiable.empty());
    CHECK(est.condition_number > 0.0);
    CHECK(est.r2_v.size() == static_cast<Eigen::Index>(lv.bus_count()));
}

TEST_CASE("columns without excitation are flagged unidentifiable") {
    const RadialSystem sys = testing::make_system({0, 1, 2}, {0.02}, {0.01});
    const std::vector<cplx> s{0.0, cplx(-0.05, -0.01), cplx(-0.03, -0.01), cplx(-0.03, -0.01)};
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> d(-0.01, 0.01);
    std::vector<std::vector<cplx>> samples(40, s);
    for (auto& row : samples) row[3] += d(rng);
    const SensitivityMatrix est = estimate_sensitivities(synthesize_measurements(sys, samples, 1.0, {0.0, 1}));
    const std::set<std::string> flagged(est.unidentifiable.begin(), est.unidentifiable.end());
    CHECK(flagged == std::set<std::string>{"P:b1", "P:b2", "Q:b1", "Q:b2", "Q:b3"});
    const SensitivityMatrix ref = analytical_sensitivities(sys, s, 1.0);
    const int c3 = est.injection_column("b3");
    CHECK((est.k_vp.col(c3) - ref.k_vp.col(c3)).cwiseAbs().maxCoeff() <= 1e-3);
    CHECK(est.k_vp.col(est.injection_column("b1")).norm() == 0.0);
}

TEST_CASE("too short or collinear windows are rejected") {
    const RadialSystem sys = testing::make_system({0, 1}, {0.02}, {0.01});
    const std::vector<cplx> s{0.0, cplx(-0.05, -0.01), cplx(-0.03, -0.01)};
    CHECK_THROWS_AS(estimate_sensitivities(synthesize_measurements(sys, probe_window(s, 3, 0.01, 1), 1.0, {0.0, 1})),
                    InputError);
    std::vector<std::vector<cplx>> samples(20, s);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> d(-0.01, 0.01);
    for (auto& row : samples) {
        const double a = d(rng), b = d(rng);
        row[1] += cplx(a, 2.0 * a);
        row[2] += cplx(b, 2.0 * b);
    }
    CHECK_THROWS_AS(estimate_sensitivities(synthesize_measurements(sys, samples, 1.0, {0.0, 1})), NumericalError);
}
