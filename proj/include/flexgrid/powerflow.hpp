#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flexgrid/grid_model.hpp"

namespace flexgrid {

using cplx = std::complex<double>;

struct PfOptions {
    double tolerance = 1e-8;  // max complex voltage update, pu
    int max_iterations = 100;
};

/// Converged radial power flow. Indices follow the RadialSystem: bus k,
/// edge k feeds bus k + 1, currents flow parent to child.
struct PfSolution {
    std::vector<cplx> voltage;
    std::vector<cplx> current;
    std::vector<cplx> send_power;  // V_parent * conj(I) per edge
    cplx slack_power;              // power drawn from the slack into the network
    double losses_pu = 0.0;
    int iterations = 0;
    double max_update = 0.0;
    double max_mismatch = 0.0;     // bus power-balance residual, pu

    double v_mag(std::size_t bus) const { return std::abs(voltage[bus]); }
    double i_mag(std::size_t edge) const { return std::abs(current[edge]); }
};

/// Backward/forward sweep with constant-power injections `s` (pu, generation
/// positive). `s[0]` is the slack bus's own injection and is netted into
/// `slack_power`. Throws ConvergenceError past the iteration cap.
PfSolution solve_pf(const RadialSystem& system, const std::vector<cplx>& s, double slack_v,
                    const PfOptions& opts = {});

/// Sum of r|I|^2 times the power base, integrated over one timestep.
double losses_kwh(const RadialSystem& system, const PfSolution& pf, double timestep_minutes);

/// Largest |S_k - V_k conj(sum of outgoing currents)| over non-slack buses.
double power_balance_residual(const RadialSystem& system, const PfSolution& pf,
                              const std::vector<cplx>& s);

/// Largest DistFlow residual |v_j - v_i + 2(rP + xQ) - (r^2 + x^2) l| over edges.
double distflow_residual(const RadialSystem& system, const PfSolution& pf);

/// Largest |P^2 + Q^2 - v_i l| over edges.
double soc_residual(const RadialSystem& system, const PfSolution& pf);

struct NoiseSpec {
    double sigma_rel = 0.0;  // std. deviation relative to the reading
    std::uint64_t seed = 0;
};

/// Magnitude measurements of a window of PF solutions. Rows are samples.
/// Injection columns cover every non-root bus.
struct MeasurementWindow {
    std::vector<std::string> bus_ids;
    std::vector<std::string> branch_ids;
    std::vector<std::string> injection_bus_ids;
    std::vector<std::int64_t> timestamps;
    Eigen::MatrixXd v;  // |V|, pu
    Eigen::MatrixXd i;  // |I|, pu
    Eigen::MatrixXd p;  // net active injection, pu
    Eigen::MatrixXd q;  // net reactive injection, pu
};

/// Solves one PF per sample and records V, I, P, Q with independent relative
/// Gaussian noise per channel. Non-convergence names the failing sample.
MeasurementWindow synthesize_measurements(const RadialSystem& system,
                                          const std::vector<std::vector<cplx>>& samples,
                                          double slack_v, const NoiseSpec& noise,
                                          const std::vector<std::int64_t>& timestamps = {});

/// CSV dumps: `timestamp,bus_id,v_pu,angle_rad` and `timestamp,branch_id,i_pu,p_pu,q_pu`.
void write_bus_csv_header(std::ostream& out);
void write_bus_csv(std::ostream& out, const std::string& timestamp, const RadialSystem& system,
                   const PfSolution& pf);
void write_branch_csv_header(std::ostream& out);
void write_branch_csv(std::ostream& out, const std::string& timestamp,
                      const RadialSystem& system, const PfSolution& pf);

}  // namespace flexgrid
