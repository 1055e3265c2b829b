#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"

#include "flexgrid/conic.hpp"

using namespace flexgrid;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index k = 0;
    for (double x : v) out(k++) = x;
    return out;
}

Eigen::VectorXd random_interior(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd u(n);
    for (int k = 1; k < n; ++k) u(k) = g(rng);
    u(0) = u.tail(n - 1).norm() + std::abs(g(rng)) + 0.1;
    return u;
}

}  // namespace

TEST_CASE("small LP with a known optimum") {
    // min -x - y  s.t.  x + 2y <= 4,  3x + y <= 6,  x, y >= 0.  Optimum (1.6, 1.2).
    ConeProgram p;
    p.c = vec({-1.0, -1.0});
    p.a = Eigen::MatrixXd(0, 2);
    p.b = Eigen::VectorXd(0);
    p.g = Eigen::MatrixXd(4, 2);
    p.g << 1, 2, 3, 1, -1, 0, 0, -1;
    p.h = vec({4, 6, 0, 0});
    p.linear_dim = 4;
    const ConeResult r = solve_cone_program(p);
    REQUIRE(r.status == ConeStatus::Optimal);
    CHECK(r.x(0) == doctest::Approx(1.6).epsilon(1e-7));
    CHECK(r.x(1) == doctest::Approx(1.2).epsilon(1e-7));
    CHECK(r.primal_objective == doctest::Approx(-2.8).epsilon(1e-8));
    CHECK(r.dual_objective == doctest::Approx(-2.8).epsilon(1e-8));
}

TEST_CASE("equality-constrained SOCP with a known optimum") {
    // min t  s.t.  ||(x, y)|| <= t,  x + y = 2.  Optimum x = y = 1, t = sqrt(2).
    ConeProgram p;
    p.c = vec({0.0, 0.0, 1.0});
    p.a = Eigen::MatrixXd(1, 3);
    p.a << 1, 1, 0;
    p.b = vec({2.0});
    p.g = Eigen::MatrixXd::Zero(3, 3);
    p.g(0, 2) = -1.0;
    p.g(1, 0) = -1.0;
    p.g(2, 1) = -1.0;
    p.h = Eigen::VectorXd::Zero(3);
    p.linear_dim = 0;
    p.soc_dims = {3};
    const ConeResult r = solve_cone_program(p);
    REQUIRE(r.status == ConeStatus::Optimal);
    CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.x(1) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.x(2) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-8));
    CHECK(r.gap <= 1e-7);
}

TEST_CASE("mixed orthant and cone blocks") {
    // min x  s.t.  ||(1, x - 3)|| <= 2,  x >= 0.  Optimum 3 - sqrt(3).
    ConeProgram p;
    p.c = vec({1.0});
    p.a = Eigen::MatrixXd(0, 1);
    p.b = Eigen::VectorXd(0);
    p.g = Eigen::MatrixXd::Zero(4, 1);
    p.g(0, 0) = -1.0;
    p.g(3, 0) = -1.0;
    p.h = vec({0.0, 2.0, 1.0, -3.0});
    p.linear_dim = 1;
    p.soc_dims = {3};
    const ConeResult r = solve_cone_program(p);
    REQUIRE(r.status == ConeStatus::Optimal);
    CHECK(r.x(0) == doctest::Approx(3.0 - std::sqrt(3.0)).epsilon(1e-7));
}

TEST_CASE("Nesterov-Todd scaling maps z and s to the same point") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + trial % 5;
        const Eigen::VectorXd s = random_interior(rng, n);
        const Eigen::VectorXd z = random_interior(rng, n);
        const auto sc = cone_detail::soc_scaling(s, z);
        const Eigen::VectorXd lhs = sc.w * z;
        const Eigen::VectorXd rhs = sc.w_inv * s;
        CHECK((lhs - rhs).norm() <= 1e-9 * (1.0 + lhs.norm()));
        CHECK((sc.w * sc.w_inv - Eigen::MatrixXd::Identity(n, n)).norm() <= 1e-9);
        // The scaled point lies in the cone.
        CHECK(lhs(0) >= lhs.tail(n - 1).norm());
    }
}

TEST_CASE("maximum cone step") {
    const Eigen::VectorXd u = vec({2.0, 0.0, 0.0});
    CHECK(cone_detail::soc_max_step(u, vec({-1.0, 0.0, 0.0})) == doctest::Approx(2.0));
    CHECK(cone_detail::soc_max_step(u, vec({0.0, 1.0, 0.0})) == doctest::Approx(2.0));
    CHECK(cone_detail::soc_max_step(u, vec({1.0, 0.0, 0.0})) == std::numeric_limits<double>::infinity());

    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::VectorXd x = random_interior(rng, 4);
        Eigen::VectorXd d(4);
        for (int k = 0; k < 4; ++k) d(k) = g(rng);
        const double a = cone_detail::soc_max_step(x, d);
        if (!std::isfinite(a)) continue;
        const Eigen::VectorXd edge = x + a * d;
        CHECK(std::abs(edge(0) - edge.tail(3).norm()) <= 1e-8 * (1.0 + edge.norm()));
        const Eigen::VectorXd inner = x + 0.999 * a * d;
        CHECK(inner(0) >= inner.tail(3).norm() - 1e-12);
    }
}
