#pragma once

#include <optional>

#include <Eigen/Dense>

namespace flexgrid {

enum class LpStatus { Optimal, Unbounded, InfeasibleStart, IterationLimit };

struct LpResult {
    LpStatus status = LpStatus::IterationLimit;
    Eigen::VectorXd x;
    double objective = 0.0;
    int pivots = 0;
};

/// Dense tableau simplex for  max c'x  s.t.  A x <= b, x >= 0, with b >= 0 so
/// the slack basis is a feasible start. Bland's rule prevents cycling.
/// When `secondary` is given, the optimal face of c is searched once more for
/// the point maximizing `secondary`; only columns with zero reduced primary
/// cost may enter, so the primary objective is unchanged.
LpResult maximize_lp(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                     const std::optional<Eigen::VectorXd>& secondary = std::nullopt,
                     double tolerance = 1e-9);

}  // namespace flexgrid
