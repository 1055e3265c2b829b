#pragma once

#include <complex>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "flexgrid/conic.hpp"
#include "flexgrid/grid_model.hpp"
#include "flexgrid/lv_flex.hpp"
#include "flexgrid/powerflow.hpp"

namespace flexgrid {

/// Objective weights on per-unit quantities.
struct WeightConfig {
    double w_l = 0.1;     // losses
    double w_v = 100.0;   // voltage deviation, pu^2
    double w_lim = 100.0; // squared-current deviation, pu^2
    double w_p = 0.0;     // |p_slack - baseline|
    double w_q = 0.0;     // |q_slack - baseline|

    /// All weights finite and >= 0; w_v and w_lim at least 100 * w_l.
    void validate() const;
};

struct SlackRange {
    double v_min = 0.95;
    double v_max = 1.05;
};

struct MvOpfOptions {
    double voltage_margin = 0.0;       // bounds tightened by this much (pu) inside the OPF
    cplx slack_baseline{0.0, 0.0};     // schedule the slack cost is measured against, pu
    // Losses are O(1e-4) pu, so branch tightness needs complementarity near
    // machine precision.
    ConeSettings cone{1e-10, 1e-18, 1e-14};
};

struct ObjectiveBreakdown {
    double loss = 0.0;
    double v_penalty = 0.0;
    double i_penalty = 0.0;
    double slack = 0.0;
    double total() const { return loss + v_penalty + i_penalty + slack; }
};

struct FlexControl {
    std::string bus;
    double dp_kw = 0.0;
    double dq_kvar = 0.0;
};

/// Optimum of the relaxed MV OPF. Squared magnitudes throughout; flows at the
/// sending end of each edge of the RadialSystem.
struct OpfSolution {
    std::vector<std::string> bus_ids;
    std::vector<std::string> branch_ids;
    std::vector<double> v;     // |V|^2
    std::vector<double> p, q;  // sending-end flows
    std::vector<double> l;     // |I|^2
    std::vector<double> vdev, ldev;
    std::vector<FlexControl> controls;
    std::vector<cplx> injections;  // final net injection per bus, pu
    cplx slack_power;
    double slack_v = 0.0;
    ObjectiveBreakdown objective;
    std::vector<double> soc_gap;  // v_i l - P^2 - Q^2
    ConeStatus status = ConeStatus::Numerical;
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
};

/// Minimizes weighted losses, hinge penalties and slack-schedule cost over
/// the slack voltage and the (dp, dq) of every bus with a flex area, subject
/// to DistFlow with the second-order cone relaxation. `injections` are the
/// fixed net injections per MV bus (pu); flex areas are keyed by MV bus id
/// and bound deltas around those injections. Throws ConvergenceError when the
/// interior-point method does not certify an optimum.
OpfSolution solve_mv_opf(const RadialSystem& mv, const std::vector<cplx>& injections,
                         const std::map<std::string, FlexArea>& flex_areas,
                         const WeightConfig& weights, const SlackRange& slack_range,
                         const MvOpfOptions& opts = {});

/// Squared voltages and currents of a state to be scored.
struct SquaredState {
    std::vector<double> v;
    std::vector<double> l;
};

SquaredState squared_state(const PfSolution& pf);
SquaredState squared_state(const OpfSolution& sol);

inline constexpr double kChfPerPuDeviation = 100.0;

struct PenaltyReport {
    std::vector<double> vdev;  // per bus, pu^2
    std::vector<double> ldev;  // per edge, pu^2
    double total_vdev = 0.0;
    double total_ldev = 0.0;
    double chf = 0.0;
};

/// Closed-form hinges against the bounds of `system`; ideal links carry no limit.
PenaltyReport evaluate_penalties(const SquaredState& state, const RadialSystem& system);

/// max over edges of (v l - P^2 - Q^2) / max(v l, eps).
double check_soc_exactness(const OpfSolution& sol, double eps = 1e-9);
inline constexpr double kSocGapFlag = 1e-5;

nlohmann::json to_json(const OpfSolution& sol);

}  // namespace flexgrid
