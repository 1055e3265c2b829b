#include "flexgrid/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

#include "flexgrid/errors.hpp"
#include "json.hpp"

namespace flexgrid {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Network accessors

std::size_t Network::bus_count() const {
    std::size_t n = mv.buses.size();
    for (const auto& lv : lv_grids) n += lv.grid.buses.size();
    return n;
}

std::size_t Network::branch_count() const {
    std::size_t n = mv.branches.size();
    for (const auto& lv : lv_grids) n += lv.grid.branches.size();
    return n;
}

std::size_t Network::der_count() const {
    std::size_t n = mv.ders.size();
    for (const auto& lv : lv_grids) n += lv.grid.ders.size();
    return n;
}

std::size_t Network::lv_grid_index(std::string_view transformer_id) const {
    for (std::size_t k = 0; k < lv_grids.size(); ++k) {
        if (lv_grids[k].transformer.id == transformer_id) return k;
    }
    throw InputError("unknown LV grid", std::string(transformer_id));
}

const LvGrid& Network::lv_grid(std::string_view transformer_id) const {
    return lv_grids[lv_grid_index(transformer_id)];
}

// ---------------------------------------------------------------------------
// Per unit

PerUnitBase::PerUnitBase(double s_base_kva, double v_base_v)
    : s_base_kva_(s_base_kva), v_base_v_(v_base_v) {
    if (!(s_base_kva > 0.0) || !std::isfinite(s_base_kva)) {
        throw InputError("power base must be positive", "s_base_kva");
    }
    if (!(v_base_v > 0.0) || !std::isfinite(v_base_v)) {
        throw InputError("voltage base must be positive", "v_base_v");
    }
}

double PerUnitBase::z_base_ohm() const {
    return v_base_v_ * v_base_v_ / (s_base_kva_ * 1e3);
}

double PerUnitBase::i_base_a() const {
    return s_base_kva_ * 1e3 / (std::sqrt(3.0) * v_base_v_);
}

// ---------------------------------------------------------------------------
// Topology

TopologyReport validate_radial(const std::vector<std::string>& buses,
                               const std::vector<TopologyEdge>& edges,
                               const std::string& root) {
    std::unordered_map<std::string, int> index;
    for (std::size_t k = 0; k < buses.size(); ++k) {
        if (!index.emplace(buses[k], static_cast<int>(k)).second) {
            throw InputError("duplicate bus id", buses[k]);
        }
    }
    if (!index.count(root)) throw InputError("slack bus not found", root);

    // Union-find detects the edge that closes a cycle.
    std::vector<int> uf(buses.size());
    std::iota(uf.begin(), uf.end(), 0);
    auto find = [&](int a) {
        while (uf[a] != a) a = uf[a] = uf[uf[a]];
        return a;
    };
    std::vector<std::vector<std::pair<int, int>>> adj(buses.size());
    for (std::size_t k = 0; k < edges.size(); ++k) {
        const auto& e = edges[k];
        auto f = index.find(e.from);
        auto t = index.find(e.to);
        if (f == index.end()) throw InputError("edge references unknown bus " + e.from, e.id);
        if (t == index.end()) throw InputError("edge references unknown bus " + e.to, e.id);
        if (f->second == t->second) {
            throw TopologyError(TopologyError::Kind::Cycle, "self-loop edge", {e.id});
        }
        int a = find(f->second);
        int b = find(t->second);
        if (a == b) {
            throw TopologyError(TopologyError::Kind::Cycle,
                                "network is not radial: edge closes a cycle", {e.id});
        }
        uf[a] = b;
        adj[f->second].emplace_back(t->second, static_cast<int>(k));
        adj[t->second].emplace_back(f->second, static_cast<int>(k));
    }

    TopologyReport report;
    report.root = root;
    std::vector<int> depth(buses.size(), -1);
    std::queue<int> frontier;
    const int r = index.at(root);
    depth[r] = 0;
    frontier.push(r);
    while (!frontier.empty()) {
        int u = frontier.front();
        frontier.pop();
        report.order.push_back(buses[u]);
        report.depth[buses[u]] = depth[u];
        for (auto [v, k] : adj[u]) {
            if (depth[v] >= 0) continue;
            depth[v] = depth[u] + 1;
            report.parent[buses[v]] = buses[u];
            frontier.push(v);
        }
    }
    std::vector<std::string> unreachable;
    for (std::size_t k = 0; k < buses.size(); ++k) {
        if (depth[k] < 0) unreachable.push_back(buses[k]);
    }
    if (!unreachable.empty()) {
        throw TopologyError(TopologyError::Kind::Disconnected,
                            "network is disconnected: buses unreachable from slack", unreachable);
    }
    return report;
}

namespace {

void collect_topology(const SubGrid& grid, std::vector<std::string>& buses,
                      std::vector<TopologyEdge>& edges) {
    for (const auto& b : grid.buses) buses.push_back(b.id);
    for (const auto& br : grid.branches) edges.push_back({br.id, br.from_bus, br.to_bus});
}

}  // namespace

TopologyReport validate_radial(const Network& network) {
    std::vector<std::string> buses;
    std::vector<TopologyEdge> edges;
    collect_topology(network.mv, buses, edges);
    for (const auto& lv : network.lv_grids) {
        collect_topology(lv.grid, buses, edges);
        edges.push_back({lv.transformer.id, lv.transformer.mv_bus, lv.transformer.lv_root});
    }
    return validate_radial(buses, edges, network.slack_bus());
}

// ---------------------------------------------------------------------------
// JSON ingestion

namespace {

struct Reader {
    const std::string& source;

    [[noreturn]] void fail(const std::string& what, const std::string& element) const {
        throw InputError(source + ": " + what, element);
    }

    double number(const json& obj, const char* key, const std::string& element) const {
        auto it = obj.find(key);
        if (it == obj.end()) fail(std::string("missing field '") + key + "'", element);
        if (!it->is_number()) fail(std::string("field '") + key + "' must be a number", element);
        return it->get<double>();
    }

    double number_or(const json& obj, const char* key, double fallback,
                     const std::string& element) const {
        if (!obj.contains(key)) return fallback;
        return number(obj, key, element);
    }

    std::string text(const json& obj, const char* key, const std::string& element) const {
        auto it = obj.find(key);
        if (it == obj.end()) fail(std::string("missing field '") + key + "'", element);
        if (!it->is_string()) fail(std::string("field '") + key + "' must be a string", element);
        return it->get<std::string>();
    }

    const json& array(const json& obj, const char* key, const std::string& element) const {
        auto it = obj.find(key);
        if (it == obj.end() || !it->is_array()) {
            fail(std::string("missing array '") + key + "'", element);
        }
        return *it;
    }
};

DerKind parse_der_kind(const std::string& s, const Reader& rd, const std::string& id) {
    if (s == "pv") return DerKind::PV;
    if (s == "load") return DerKind::Load;
    if (s == "storage") return DerKind::Storage;
    rd.fail("unknown DER kind '" + s + "'", "der " + id);
}

SubGrid parse_subgrid(const json& j, VoltageLevel level, const std::string& id,
                      double s_base_kva, const Reader& rd) {
    SubGrid grid;
    grid.id = id;
    grid.level = level;
    const std::string where = (level == VoltageLevel::MV ? "mv" : "lv_grid " + id);
    grid.v_base_v = rd.number(j, "v_base_v", where);
    PerUnitBase base(s_base_kva, grid.v_base_v);
    const double dflt_vmin = rd.number_or(j, "v_min", 0.95, where);
    const double dflt_vmax = rd.number_or(j, "v_max", 1.05, where);

    for (const auto& jb : rd.array(j, "buses", where)) {
        Bus b;
        b.id = rd.text(jb, "id", where);
        b.level = level;
        b.v_min = rd.number_or(jb, "v_min", dflt_vmin, "bus " + b.id);
        b.v_max = rd.number_or(jb, "v_max", dflt_vmax, "bus " + b.id);
        if (!(b.v_min > 0.0 && b.v_min < b.v_max)) {
            rd.fail("voltage bounds must satisfy 0 < v_min < v_max", "bus " + b.id);
        }
        grid.buses.push_back(std::move(b));
    }
    if (grid.buses.empty()) rd.fail("grid has no buses", where);

    for (const auto& jbr : rd.array(j, "branches", where)) {
        Branch br;
        br.id = rd.text(jbr, "id", where);
        const std::string el = "branch " + br.id;
        br.from_bus = rd.text(jbr, "from", el);
        br.to_bus = rd.text(jbr, "to", el);
        const double r_ohm = rd.number(jbr, "r_ohm", el);
        const double x_ohm = rd.number(jbr, "x_ohm", el);
        const double i_max_a = rd.number(jbr, "i_max_a", el);
        if (br.from_bus == br.to_bus) rd.fail("branch endpoints must differ", el);
        if (r_ohm < 0.0) rd.fail("resistance must be non-negative", el);
        if (!(i_max_a > 0.0)) rd.fail("ampacity i_max must be positive", el);
        if (r_ohm * r_ohm + x_ohm * x_ohm <= 0.0) rd.fail("branch impedance is zero", el);
        br.r = base.impedance_to_pu(r_ohm);
        br.x = base.impedance_to_pu(x_ohm);
        br.i_max = base.current_to_pu(i_max_a);
        grid.branches.push_back(std::move(br));
    }

    std::set<std::string> ids;
    for (const auto& b : grid.buses) ids.insert(b.id);
    for (const auto& br : grid.branches) {
        if (!ids.count(br.from_bus) || !ids.count(br.to_bus)) {
            rd.fail("branch endpoint not in the same grid", "branch " + br.id);
        }
    }

    if (j.contains("ders")) {
        for (const auto& jd : rd.array(j, "ders", where)) {
            Der d;
            d.id = rd.text(jd, "id", where);
            const std::string el = "der " + d.id;
            d.bus = rd.text(jd, "bus", el);
            d.kind = parse_der_kind(rd.text(jd, "kind", el), rd, d.id);
            d.p_rating_kw = rd.number(jd, "p_rating_kw", el);
            d.controllable = jd.value("controllable", false);
            d.curtailment_fraction = rd.number_or(jd, "curtailment_fraction", 0.0, el);
            d.pf_min = rd.number_or(jd, "pf_min", 1.0, el);
            if (!ids.count(d.bus)) rd.fail("DER bus not in grid", el);
            if (d.p_rating_kw < 0.0) rd.fail("p_rating must be non-negative", el);
            if (d.curtailment_fraction < 0.0 || d.curtailment_fraction > 1.0) {
                rd.fail("curtailment_fraction must lie in [0, 1]", el);
            }
            if (!(d.pf_min > 0.0 && d.pf_min <= 1.0)) rd.fail("pf_min must lie in (0, 1]", el);
            grid.ders.push_back(std::move(d));
        }
    }
    return grid;
}

std::string parse_error_context(std::string_view text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k < byte && k < text.size(); ++k) {
        if (text[k] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

Network parse_network(std::string_view json_text, const std::string& source) {
    json j;
    try {
        j = json::parse(json_text.begin(), json_text.end());
    } catch (const json::parse_error& e) {
        throw InputError(source + ": JSON parse error: " + e.what(),
                         parse_error_context(json_text, e.byte));
    }
    Reader rd{source};
    if (!j.is_object()) rd.fail("top level must be an object", "document");

    Network net;
    net.s_base_kva = rd.number(j, "s_base_kva", "document");
    if (!(net.s_base_kva > 0.0)) rd.fail("s_base_kva must be positive", "s_base_kva");

    if (!j.contains("mv") || !j["mv"].is_object()) rd.fail("missing object 'mv'", "document");
    const json& jmv = j["mv"];
    net.mv = parse_subgrid(jmv, VoltageLevel::MV, "mv", net.s_base_kva, rd);
    net.mv.root = rd.text(jmv, "slack", "mv");

    std::set<std::string> all_buses;
    auto register_bus = [&](const std::string& id) {
        if (!all_buses.insert(id).second) rd.fail("duplicate bus id", "bus " + id);
    };
    for (const auto& b : net.mv.buses) register_bus(b.id);
    if (!all_buses.count(net.mv.root)) rd.fail("slack bus not found", "bus " + net.mv.root);

    if (j.contains("lv_grids")) {
        for (const auto& jl : rd.array(j, "lv_grids", "document")) {
            LvGrid lv;
            const std::string id = rd.text(jl, "id", "lv_grids");
            lv.grid = parse_subgrid(jl, VoltageLevel::LV, id, net.s_base_kva, rd);
            if (!jl.contains("transformer") || !jl["transformer"].is_object()) {
                rd.fail("missing object 'transformer'", "lv_grid " + id);
            }
            const json& jt = jl["transformer"];
            lv.transformer.id = id;
            lv.transformer.mv_bus = rd.text(jt, "mv_bus", "transformer " + id);
            lv.transformer.kva_rating = rd.number(jt, "kva_rating", "transformer " + id);
            lv.transformer.lv_root = jt.contains("lv_root") ? rd.text(jt, "lv_root", "transformer " + id)
                                                            : lv.grid.buses.front().id;
            if (!(lv.transformer.kva_rating > 0.0)) {
                rd.fail("kva_rating must be positive", "transformer " + id);
            }
            lv.grid.root = lv.transformer.lv_root;
            if (std::none_of(lv.grid.buses.begin(), lv.grid.buses.end(),
                             [&](const Bus& b) { return b.id == lv.grid.root; })) {
                rd.fail("lv_root not in grid", "transformer " + id);
            }
            for (const auto& b : lv.grid.buses) register_bus(b.id);
            net.lv_grids.push_back(std::move(lv));
        }
    }

    std::set<std::string> grid_ids;
    for (auto& lv : net.lv_grids) {
        if (!grid_ids.insert(lv.transformer.id).second) {
            rd.fail("duplicate LV grid id", "lv_grid " + lv.transformer.id);
        }
        auto it = std::find_if(net.mv.buses.begin(), net.mv.buses.end(),
                               [&](const Bus& b) { return b.id == lv.transformer.mv_bus; });
        if (it == net.mv.buses.end()) {
            rd.fail("transformer MV bus not in MV grid", "transformer " + lv.transformer.id);
        }
        if (it->transformer) {
            rd.fail("MV bus already hosts a transformer", "transformer " + lv.transformer.id);
        }
        it->transformer = lv.transformer.id;
    }

    std::set<std::string> branch_ids;
    auto register_edge = [&](const std::string& id) {
        if (!branch_ids.insert(id).second) rd.fail("duplicate branch id", "branch " + id);
    };
    for (const auto& br : net.mv.branches) register_edge(br.id);
    for (const auto& lv : net.lv_grids) {
        register_edge(lv.transformer.id);
        for (const auto& br : lv.grid.branches) register_edge(br.id);
    }

    validate_radial(net);
    return net;
}

Network load_network(const std::string& path) {
    return parse_network(read_file(path), path);
}

// ---------------------------------------------------------------------------
// Radial systems

int RadialSystem::bus_index(std::string_view id) const {
    if (auto k = find_bus(id)) return *k;
    throw InputError("unknown bus", std::string(id));
}

std::optional<int> RadialSystem::find_bus(std::string_view id) const {
    for (std::size_t k = 0; k < bus_ids.size(); ++k) {
        if (bus_ids[k] == id) return static_cast<int>(k);
    }
    return std::nullopt;
}

int RadialSystem::edge_index(std::string_view id) const {
    for (std::size_t k = 0; k < edges.size(); ++k) {
        if (edges[k].id == id) return static_cast<int>(k);
    }
    throw InputError("unknown branch", std::string(id));
}

namespace {

struct SystemBuilder {
    double s_base_kva;
    std::vector<const Bus*> buses;
    struct Link {
        std::string id;
        std::string a, b;
        double r, x, i_max;
        bool ideal;
    };
    std::vector<Link> links;

    void add_grid(const SubGrid& g) {
        for (const auto& b : g.buses) buses.push_back(&b);
        for (const auto& br : g.branches) {
            links.push_back({br.id, br.from_bus, br.to_bus, br.r, br.x, br.i_max, false});
        }
    }

    RadialSystem build(const std::string& root) const {
        std::unordered_map<std::string, const Bus*> by_id;
        std::unordered_map<std::string, std::vector<int>> adj;
        for (const Bus* b : buses) by_id[b->id] = b;
        for (std::size_t k = 0; k < links.size(); ++k) {
            adj[links[k].a].push_back(static_cast<int>(k));
            adj[links[k].b].push_back(static_cast<int>(k));
        }
        RadialSystem sys;
        sys.s_base_kva = s_base_kva;
        std::unordered_map<std::string, int> idx;
        std::queue<std::string> frontier;
        auto visit = [&](const std::string& id) {
            idx[id] = static_cast<int>(sys.bus_ids.size());
            sys.bus_ids.push_back(id);
            sys.v_min.push_back(by_id.at(id)->v_min);
            sys.v_max.push_back(by_id.at(id)->v_max);
            sys.child_edges.emplace_back();
            frontier.push(id);
        };
        visit(root);
        while (!frontier.empty()) {
            std::string u = frontier.front();
            frontier.pop();
            for (int k : adj[u]) {
                const Link& l = links[k];
                const std::string& v = (l.a == u) ? l.b : l.a;
                if (idx.count(v)) continue;
                visit(v);
                RadialEdge e{l.id, idx.at(u), idx.at(v), l.r, l.x, l.i_max, l.ideal};
                sys.child_edges[e.from].push_back(static_cast<int>(sys.edges.size()));
                sys.edges.push_back(std::move(e));
            }
        }
        if (sys.bus_ids.size() != buses.size()) {
            throw InputError("radial system does not span all buses", root);
        }
        return sys;
    }
};

}  // namespace

RadialSystem mv_system(const Network& network) {
    SystemBuilder b{network.s_base_kva, {}, {}};
    b.add_grid(network.mv);
    return b.build(network.mv.root);
}

RadialSystem lv_system(const Network& network, std::size_t lv_index) {
    const LvGrid& lv = network.lv_grids.at(lv_index);
    SystemBuilder b{network.s_base_kva, {}, {}};
    b.add_grid(lv.grid);
    return b.build(lv.grid.root);
}

RadialSystem combined_system(const Network& network) {
    SystemBuilder b{network.s_base_kva, {}, {}};
    b.add_grid(network.mv);
    for (const auto& lv : network.lv_grids) {
        b.add_grid(lv.grid);
        b.links.push_back({lv.transformer.id, lv.transformer.mv_bus, lv.transformer.lv_root, 0.0,
                           0.0, std::numeric_limits<double>::infinity(), true});
    }
    return b.build(network.mv.root);
}

// ---------------------------------------------------------------------------
// Time series

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y += m <= 2;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

std::int64_t parse_rfc3339(std::string_view text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    char tail[16] = {0};
    const std::string str(trim(text));
    const int n = std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%15s", &y, &mo, &d, &h, &mi, &s,
                              tail);
    if (n < 6 || mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60) {
        throw InputError("invalid RFC3339 timestamp", str);
    }
    std::int64_t offset = 0;
    std::string_view t = tail;
    if (!t.empty() && t.front() == '.') {  // fractional seconds are dropped
        std::size_t k = 1;
        while (k < t.size() && std::isdigit(static_cast<unsigned char>(t[k]))) ++k;
        t.remove_prefix(k);
    }
    if (t == "Z" || t == "z") {
        offset = 0;
    } else if (t.size() == 6 && (t[0] == '+' || t[0] == '-') && t[3] == ':') {
        const int oh = std::stoi(std::string(t.substr(1, 2)));
        const int om = std::stoi(std::string(t.substr(4, 2)));
        offset = (oh * 3600 + om * 60) * (t[0] == '-' ? -1 : 1);
    } else {
        throw InputError("RFC3339 timestamp needs a 'Z' or +hh:mm offset", str);
    }
    return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 +
           h * 3600 + mi * 60 + s - offset;
}

std::string format_rfc3339(std::int64_t unix_seconds) {
    std::int64_t days = unix_seconds / 86400;
    std::int64_t rem = unix_seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    std::int64_t y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02d:%02d:%02dZ", static_cast<long long>(y), m,
                  d, static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60),
                  static_cast<int>(rem % 60));
    return buf;
}

double InjectionProfile::step_minutes() const {
    if (timestamps.size() < 2) return 10.0;
    return static_cast<double>(timestamps[1] - timestamps[0]) / 60.0;
}

std::complex<double> InjectionProfile::net_kw(const std::string& bus, std::size_t t) const {
    auto it = buses.find(bus);
    if (it == buses.end()) return {0.0, 0.0};
    const InjectionSeries& s = it->second;
    return {s.p_gen.at(t) - s.p_load.at(t), s.q_gen.at(t) - s.q_load.at(t)};
}

InjectionProfile parse_profiles(std::string_view csv_text, const std::string& source) {
    InjectionProfile prof;
    std::map<std::int64_t, std::size_t> slot;
    struct Row {
        std::int64_t ts;
        std::string bus;
        double v[4];
    };
    std::vector<Row> rows;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool header_seen = false;
    static const char* expected[] = {"timestamp", "bus_id", "p_gen_kw", "p_load_kw", "q_gen_kvar",
                                     "q_load_kvar"};
    while (pos <= csv_text.size()) {
        std::size_t end = csv_text.find('\n', pos);
        std::string_view line = csv_text.substr(pos, end == std::string_view::npos ? end : end - pos);
        pos = (end == std::string_view::npos) ? csv_text.size() + 1 : end + 1;
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        auto cols = split_csv(line);
        const std::string where = "line " + std::to_string(line_no);
        if (!header_seen) {
            if (cols.size() != 6) throw InputError(source + ": bad header", where);
            for (int k = 0; k < 6; ++k) {
                if (cols[k] != expected[k]) {
                    throw InputError(source + ": expected column '" + expected[k] + "'", where);
                }
            }
            header_seen = true;
            continue;
        }
        if (cols.size() != 6) throw InputError(source + ": expected 6 columns", where);
        Row r;
        try {
            r.ts = parse_rfc3339(cols[0]);
        } catch (const InputError& e) {
            throw InputError(source + ": " + e.what(), where);
        }
        r.bus = std::string(cols[1]);
        for (int k = 0; k < 4; ++k) {
            try {
                std::size_t used = 0;
                const std::string cell(cols[2 + k]);
                r.v[k] = std::stod(cell, &used);
                if (used != cell.size() || !std::isfinite(r.v[k])) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw InputError(source + ": non-numeric value in column " + expected[2 + k], where);
            }
        }
        slot.emplace(r.ts, 0);
        rows.push_back(std::move(r));
    }
    if (!header_seen) throw InputError(source + ": empty profile file", "line 1");

    std::size_t k = 0;
    for (auto& [ts, idx] : slot) {
        idx = k++;
        prof.timestamps.push_back(ts);
    }
    for (std::size_t t = 1; t < prof.timestamps.size(); ++t) {
        if (prof.timestamps[t] - prof.timestamps[t - 1] != 600) {
            throw InputError(source + ": timestamps must be spaced 10 minutes apart",
                             format_rfc3339(prof.timestamps[t]));
        }
    }
    const std::size_t n = prof.timestamps.size();
    std::map<std::string, std::vector<bool>> seen;
    for (const auto& r : rows) {
        auto& s = prof.buses[r.bus];
        auto& mark = seen[r.bus];
        if (s.p_gen.empty()) {
            s.p_gen.assign(n, 0.0);
            s.p_load.assign(n, 0.0);
            s.q_gen.assign(n, 0.0);
            s.q_load.assign(n, 0.0);
            mark.assign(n, false);
        }
        const std::size_t t = slot.at(r.ts);
        if (mark[t]) {
            throw InputError(source + ": duplicate row", r.bus + " @ " + format_rfc3339(r.ts));
        }
        mark[t] = true;
        s.p_gen[t] = r.v[0];
        s.p_load[t] = r.v[1];
        s.q_gen[t] = r.v[2];
        s.q_load[t] = r.v[3];
    }
    for (const auto& [bus, mark] : seen) {
        for (std::size_t t = 0; t < n; ++t) {
            if (!mark[t]) {
                throw InputError(source + ": series lengths differ across buses",
                                 bus + " missing " + format_rfc3339(prof.timestamps[t]));
            }
        }
    }
    return prof;
}

InjectionProfile load_profiles(const std::string& path) {
    return parse_profiles(read_file(path), path);
}

void write_profiles(const InjectionProfile& profile, std::ostream& out) {
    out << "timestamp,bus_id,p_gen_kw,p_load_kw,q_gen_kvar,q_load_kvar\n";
    out << std::setprecision(12);
    for (std::size_t t = 0; t < profile.size(); ++t) {
        for (const auto& [bus, s] : profile.buses) {
            out << format_rfc3339(profile.timestamps[t]) << ',' << bus << ',' << s.p_gen[t] << ','
                << s.p_load[t] << ',' << s.q_gen[t] << ',' << s.q_load[t] << '\n';
        }
    }
}

std::vector<std::complex<double>> injections_pu(const RadialSystem& system,
                                                const InjectionProfile& profile, std::size_t t) {
    if (t >= profile.size()) throw InputError("timestep outside profile", std::to_string(t));
    std::vector<std::complex<double>> s(system.bus_count());
    for (std::size_t k = 0; k < system.bus_count(); ++k) {
        s[k] = profile.net_kw(system.bus_ids[k], t) / system.s_base_kva;
    }
    return s;
}

}  // namespace flexgrid
