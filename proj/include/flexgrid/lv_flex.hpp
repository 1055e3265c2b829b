#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "flexgrid/grid_model.hpp"
#include "flexgrid/sensitivity.hpp"

namespace flexgrid {

/// Search direction of the LV OPF objective  max alpha*dp + beta*dq.
struct FlexDirection {
    double alpha = 0.0;
    double beta = 0.0;

    /// The 8 combinations of alpha, beta in {-1, 0, +1}, counterclockwise from (+1, 0).
    static std::vector<FlexDirection> compass8();
    /// `n` unit directions evenly spaced counterclockwise from (+1, 0); n == 8
    /// returns compass8() and n == 4 the four axis directions.
    static std::vector<FlexDirection> angular(int n);
};

/// Change of one DER relative to its operating point, kW / kvar injection.
struct DerSetpoint {
    std::string der_id;
    std::string bus;
    double dp = 0.0;
    double dq = 0.0;
};

struct FlexVertex {
    double dp = 0.0;  // aggregate at the transformer, kW
    double dq = 0.0;  // kvar
    std::vector<DerSetpoint> setpoints;
};

/// a*dp + b*dq <= c with (a, b) a unit outward normal; dp, dq in kW / kvar.
struct HalfPlane {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

enum class Degeneracy { Polygon, Segment, Point };

/// Convex polygon of aggregate (dp, dq) deliverable at one transformer.
/// Vertices are counterclockwise; (0, 0) is always inside or on the boundary.
struct FlexArea {
    std::string transformer_id;
    std::vector<FlexVertex> vertices;
    std::vector<HalfPlane> halfplanes;
    Degeneracy degeneracy = Degeneracy::Point;
    bool pre_existing_violation = false;
    std::string violation;  // first violated LV limit when pre_existing_violation

    double area() const;
    double max_dp_reach() const;  // max |dp| over vertices, kW
};

/// Box limits of one controllable DER around its current output (kW / kvar).
struct DerFlexLimits {
    std::string der_id;
    std::string bus;
    double dp_min = 0.0, dp_max = 0.0;
    double dq_min = 0.0, dq_max = 0.0;
};

/// Limits from curtailment fraction and power-factor band. `p_now_kw` is
/// the DER's present output (PV, storage) or consumption (load).
DerFlexLimits der_flex_limits(const Der& der, double p_now_kw);

/// Limits of every controllable DER of `lv` at timestep `t` of `profile`.
/// Bus-level series are shared between the DERs of a bus by rating.
std::vector<DerFlexLimits> der_flex_limits(const LvGrid& lv, const InjectionProfile& profile,
                                           std::size_t t);

/// Limits when every DER runs at its nameplate rating.
std::vector<DerFlexLimits> der_flex_limits_nameplate(const LvGrid& lv);

/// Linear model of one LV grid: sensitivities plus operating limits.
struct LvOperatingPoint {
    SensitivityMatrix k;
    std::vector<double> v_min, v_max;  // per row of K_V
    std::vector<double> i_max;         // per row of K_I
    double s_base_kva = 0.0;
};

LvOperatingPoint make_operating_point(const RadialSystem& lv, SensitivityMatrix k);

struct LvOpfResult {
    bool feasible = false;
    std::string violation;  // limit already violated at the operating point
    FlexVertex vertex;
};

/// Maximizes alpha*dp + beta*dq of the aggregate over the DER boxes and the
/// linearized voltage and current limits. `tie_break` selects among optimal
/// points the one furthest along the given direction.
LvOpfResult lv_opf(const LvOperatingPoint& op, const std::vector<DerFlexLimits>& limits,
                   const FlexDirection& direction,
                   const std::optional<FlexDirection>& tie_break = std::nullopt);

/// Convex hull of the LV OPF vertices over `directions` (plus the origin).
/// Each direction is solved with both perpendicular tie-breaks so both ends
/// of a flat optimal edge are kept.
FlexArea build_flex_area(const std::string& transformer_id, const LvOperatingPoint& op,
                         const std::vector<DerFlexLimits>& limits,
                         const std::vector<FlexDirection>& directions);

/// Hull of arbitrary points (each with setpoints), with half-planes and
/// degeneracy flag. Points closer than 1e-9 are merged.
FlexArea hull_area(const std::string& transformer_id, std::vector<FlexVertex> points);

struct Containment {
    bool inside = false;
    int violated = -1;  // index into halfplanes
};

Containment contains(const FlexArea& area, double dp, double dq, double tolerance = 1e-9);

/// DER setpoints realizing (dp, dq) by blending vertex setpoints through a
/// triangle fan from the origin.
std::vector<DerSetpoint> setpoints_for(const FlexArea& area, double dp, double dq);

nlohmann::json to_json(const FlexArea& area);
FlexArea flex_area_from_json(const nlohmann::json& j);

}  // namespace flexgrid
