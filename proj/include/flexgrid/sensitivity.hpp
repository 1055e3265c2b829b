#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flexgrid/powerflow.hpp"

namespace flexgrid {

/// Linearization of bus voltage and branch current magnitudes with respect
/// to net injections at every non-root bus. Rows of K_V follow `bus_ids`
/// (the root row is zero), rows of K_I follow `branch_ids`, columns follow
/// `injection_bus_ids`. All quantities in pu.
struct SensitivityMatrix {
    std::vector<std::string> bus_ids;
    std::vector<std::string> branch_ids;
    std::vector<std::string> injection_bus_ids;
    Eigen::MatrixXd k_vp, k_vq, k_ip, k_iq;
    Eigen::VectorXd v0;  // |V| at the operating point
    Eigen::VectorXd i0;  // |I| at the operating point
    double validity_radius = 0.0;  // max |dP|, |dQ| per bus (pu) with linear V error <= 2.5e-4

    // Estimation diagnostics; empty for the analytical path.
    std::vector<std::string> unidentifiable;  // "P:<bus>" / "Q:<bus>"
    Eigen::VectorXd r2_v, r2_i;
    double condition_number = 0.0;
    std::vector<std::string> nondifferentiable_branches;  // zero current at the operating point

    std::size_t injection_count() const { return injection_bus_ids.size(); }
    int injection_column(const std::string& bus) const;  // -1 when absent
};

struct AnalyticalOptions {
    bool compute_validity_radius = true;
    double radius_start = 0.05;
    double radius_error_target = 2.5e-4;
};

/// Implicit differentiation of the exact AC power flow at injections `s`.
/// Throws NumericalError when the power-flow Jacobian is singular.
SensitivityMatrix analytical_sensitivities(const RadialSystem& lv, const std::vector<cplx>& s,
                                           double root_v, const AnalyticalOptions& opts = {});

/// Ordinary least squares on first differences of a measurement window:
/// dV ~ K_VP dP + K_VQ dQ per row, likewise for |I|. The operating point is
/// the last sample. Columns without excitation are zeroed and listed in
/// `unidentifiable`; collinear excitation throws NumericalError.
SensitivityMatrix estimate_sensitivities(const MeasurementWindow& window,
                                         double max_condition = 1e8);

/// ||A - B||_F / ||B||_F over all four blocks stacked.
double relative_frobenius_error(const SensitivityMatrix& estimate,
                                const SensitivityMatrix& reference);

/// CSV `block,row_id,column_id,value`.
void write_sensitivity_csv(std::ostream& out, const SensitivityMatrix& k);

}  // namespace flexgrid
