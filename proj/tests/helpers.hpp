#pragma once

#include <array>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "flexgrid/grid_model.hpp"

namespace testing {

inline std::string data_path(const std::string& name) { return std::string(FLEXGRID_DATA_DIR) + "/" + name; }

inline std::string read_file(const std::string& path) {
    std::ifstream f(path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline nlohmann::json fixture_json(const std::string& name = "fixture.json") {
    return nlohmann::json::parse(read_file(data_path(name)));
}

/// Radial system with bus k + 1 fed from `parent[k]`; parents must precede
/// children. Uniform impedance unless per-edge values are given.
inline flexgrid::RadialSystem make_system(const std::vector<int>& parent, std::vector<double> r,
                                          std::vector<double> x,
                                          double i_max = std::numeric_limits<double>::infinity()) {
    flexgrid::RadialSystem sys;
    sys.s_base_kva = 1000.0;
    const std::size_t n = parent.size() + 1;
    if (r.size() == 1) r.assign(parent.size(), r[0]);
    if (x.size() == 1) x.assign(parent.size(), x[0]);
    sys.child_edges.resize(n);
    for (std::size_t b = 0; b < n; ++b) {
        sys.bus_ids.push_back("b" + std::to_string(b));
        sys.v_min.push_back(0.95);
        sys.v_max.push_back(1.05);
    }
    for (std::size_t k = 0; k < parent.size(); ++k) {
        flexgrid::RadialEdge e;
        e.id = "e" + std::to_string(k + 1);
        e.from = parent[k];
        e.to = static_cast<int>(k + 1);
        e.r = r[k];
        e.x = x[k];
        e.i_max = i_max;
        sys.edges.push_back(e);
        sys.child_edges[static_cast<std::size_t>(parent[k])].push_back(static_cast<int>(k));
    }
    return sys;
}

/// Network JSON whose single-level MV grid has ohms equal to per unit
/// (1000 kVA, 1 kV base).
inline nlohmann::json mv_only_network(const std::vector<std::array<std::string, 3>>& branches,
                                      const std::vector<std::string>& buses, double r = 0.01,
                                      double x = 0.01, double i_max_a = 500.0) {
    nlohmann::json j;
    j["s_base_kva"] = 1000.0;
    j["mv"]["v_base_v"] = 1000.0;
    j["mv"]["slack"] = buses.front();
    j["mv"]["v_min"] = 0.95;
    j["mv"]["v_max"] = 1.05;
    j["mv"]["buses"] = nlohmann::json::array();
    for (const auto& b : buses) j["mv"]["buses"].push_back({{"id", b}});
    j["mv"]["branches"] = nlohmann::json::array();
    for (const auto& br : branches) {
        j["mv"]["branches"].push_back(
            {{"id", br[0]}, {"from", br[1]}, {"to", br[2]}, {"r_ohm", r}, {"x_ohm", x}, {"i_max_a", i_max_a}});
    }
    j["lv_grids"] = nlohmann::json::array();
    return j;
}

}  // namespace testing
