#pragma once

#include <vector>

#include <Eigen/Dense>

namespace flexgrid {

/// min c'x  s.t.  A x = b,  G x + s = h,  s in K
/// where K is the nonnegative orthant of size `linear_dim` followed by one
/// second-order cone {(t, u): t >= ||u||} per entry of `soc_dims`.
struct ConeProgram {
    Eigen::VectorXd c;
    Eigen::MatrixXd a;
    Eigen::VectorXd b;
    Eigen::MatrixXd g;
    Eigen::VectorXd h;
    int linear_dim = 0;
    std::vector<int> soc_dims;
};

struct ConeSettings {
    double feastol = 1e-9;
    double abstol = 1e-9;
    double reltol = 1e-9;
    int max_iterations = 100;
    double step_factor = 0.99;
};

enum class ConeStatus { Optimal, MaxIterations, Stalled, Numerical };

const char* to_string(ConeStatus s);

struct ConeResult {
    ConeStatus status = ConeStatus::Numerical;
    Eigen::VectorXd x, y, z, s;
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    double primal_residual = 0.0;  // relative
    double dual_residual = 0.0;    // relative
    double gap = 0.0;              // s'z
    int iterations = 0;
};

/// Primal-dual interior-point method with Nesterov-Todd scaling and a
/// Mehrotra predictor-corrector. Dense linear algebra; sized for a few
/// hundred variables.
ConeResult solve_cone_program(const ConeProgram& prog, const ConeSettings& settings = {});

namespace cone_detail {

/// Nesterov-Todd scaling of one second-order cone block; s and z must be
/// strictly interior. Satisfies W z == W^-1 s.
struct SocScaling {
    Eigen::MatrixXd w;
    Eigen::MatrixXd w_inv;
};

SocScaling soc_scaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z);

/// Largest step in [0, inf) keeping u + alpha d in the cone; inf if unlimited.
double soc_max_step(const Eigen::VectorXd& u, const Eigen::VectorXd& d);

}  // namespace cone_detail

}  // namespace flexgrid
