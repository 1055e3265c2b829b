#pragma once

#include <complex>
#include <iosfwd>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flexgrid {

enum class VoltageLevel { MV, LV };

/// Bus with per-unit voltage magnitude bounds.
struct Bus {
    std::string id;
    VoltageLevel level = VoltageLevel::MV;
    double v_min = 0.95;
    double v_max = 1.05;
    std::optional<std::string> transformer;  // set on MV buses hosting an MV/LV transformer
};

/// Series branch; impedance and ampacity in per unit of its voltage level.
struct Branch {
    std::string id;
    std::string from_bus;
    std::string to_bus;
    double r = 0.0;
    double x = 0.0;
    double i_max = 0.0;
};

/// MV/LV transformer. Modelled as an ideal coupling: the LV root bus sits at
/// the MV bus voltage (per unit) and carries the aggregate LV exchange.
struct TransformerLink {
    std::string id;
    std::string mv_bus;
    std::string lv_root;
    double kva_rating = 0.0;
};

enum class DerKind { PV, Load, Storage };

struct Der {
    std::string id;
    std::string bus;
    DerKind kind = DerKind::PV;
    double p_rating_kw = 0.0;
    bool controllable = false;
    double curtailment_fraction = 0.0;  // share of current output available as flexibility
    double pf_min = 1.0;                // |cos phi| >= pf_min, leading or lagging
};

/// One voltage level of the network: a radial tree hanging off `root`.
struct SubGrid {
    std::string id;
    VoltageLevel level = VoltageLevel::MV;
    double v_base_v = 0.0;
    std::string root;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Der> ders;
};

struct LvGrid {
    TransformerLink transformer;
    SubGrid grid;
};

/// The MV grid plus one independent LV sub-network per MV/LV transformer.
/// Immutable after loading.
struct Network {
    double s_base_kva = 0.0;
    SubGrid mv;
    std::vector<LvGrid> lv_grids;

    const std::string& slack_bus() const { return mv.root; }
    std::size_t bus_count() const;
    std::size_t branch_count() const;
    std::size_t der_count() const;
    const LvGrid& lv_grid(std::string_view transformer_id) const;
    std::size_t lv_grid_index(std::string_view transformer_id) const;
};

/// Base quantities of one voltage level. Power in kVA, voltage line-to-line in V.
class PerUnitBase {
  public:
    PerUnitBase(double s_base_kva, double v_base_v);

    double s_base_kva() const { return s_base_kva_; }
    double v_base_v() const { return v_base_v_; }
    double z_base_ohm() const;
    double i_base_a() const;

    double power_to_pu(double kw) const { return kw / s_base_kva_; }
    double power_from_pu(double pu) const { return pu * s_base_kva_; }
    double voltage_to_pu(double volts) const { return volts / v_base_v_; }
    double voltage_from_pu(double pu) const { return pu * v_base_v_; }
    double impedance_to_pu(double ohm) const { return ohm / z_base_ohm(); }
    double impedance_from_pu(double pu) const { return pu * z_base_ohm(); }
    double current_to_pu(double amps) const { return amps / i_base_a(); }
    double current_from_pu(double pu) const { return pu * i_base_a(); }

  private:
    double s_base_kva_;
    double v_base_v_;
};

struct TopologyEdge {
    std::string id;
    std::string from;
    std::string to;
};

/// Tree structure rooted at the slack bus.
struct TopologyReport {
    std::string root;
    std::map<std::string, std::string> parent;  // child -> parent (root absent)
    std::map<std::string, int> depth;
    std::vector<std::string> order;  // breadth-first from root
};

/// Checks that `edges` form a spanning tree over `buses` rooted at `root`.
/// Throws TopologyError naming the first cycle-closing edge or listing the
/// unreachable buses.
TopologyReport validate_radial(const std::vector<std::string>& buses,
                               const std::vector<TopologyEdge>& edges,
                               const std::string& root);

/// Whole-network radiality: MV branches, LV branches and transformer links.
TopologyReport validate_radial(const Network& network);

/// Reads and validates `network.json`. Impedances and ampacities are converted
/// to per unit on load.
Network load_network(const std::string& path);
Network parse_network(std::string_view json_text, const std::string& source = "<string>");

/// Index-based view of one radial tree used by the solvers. Buses are stored
/// in breadth-first order from the root (index 0); edge k feeds bus k + 1.
struct RadialEdge {
    std::string id;
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double i_max = 0.0;   // +inf for ideal transformer links
    bool ideal = false;   // zero-impedance transformer coupling
};

struct RadialSystem {
    double s_base_kva = 0.0;
    std::vector<std::string> bus_ids;
    std::vector<double> v_min;
    std::vector<double> v_max;
    std::vector<RadialEdge> edges;
    std::vector<std::vector<int>> child_edges;

    std::size_t bus_count() const { return bus_ids.size(); }
    std::size_t edge_count() const { return edges.size(); }
    int parent_edge(int bus) const { return bus == 0 ? -1 : bus - 1; }
    int bus_index(std::string_view id) const;
    std::optional<int> find_bus(std::string_view id) const;
    int edge_index(std::string_view id) const;
};

RadialSystem mv_system(const Network& network);
RadialSystem lv_system(const Network& network, std::size_t lv_index);
/// MV and every LV grid joined through ideal transformer links.
RadialSystem combined_system(const Network& network);

/// Per-bus 10-minute series of generation and consumption (kW / kvar).
struct InjectionSeries {
    std::vector<double> p_gen;
    std::vector<double> p_load;
    std::vector<double> q_gen;
    std::vector<double> q_load;
};

struct InjectionProfile {
    std::vector<std::int64_t> timestamps;  // unix seconds
    std::map<std::string, InjectionSeries> buses;

    std::size_t size() const { return timestamps.size(); }
    double step_minutes() const;
    /// Net injection p^g - p^c + j(q^g - q^c) in kW/kvar; zero for unlisted buses.
    std::complex<double> net_kw(const std::string& bus, std::size_t t) const;
};

InjectionProfile load_profiles(const std::string& path);
InjectionProfile parse_profiles(std::string_view csv_text, const std::string& source = "<string>");
void write_profiles(const InjectionProfile& profile, std::ostream& out);

/// Net injections of every bus of `system` at timestep `t`, in per unit.
std::vector<std::complex<double>> injections_pu(const RadialSystem& system,
                                                const InjectionProfile& profile,
                                                std::size_t t);

std::int64_t parse_rfc3339(std::string_view text);
std::string format_rfc3339(std::int64_t unix_seconds);

}  // namespace flexgrid
