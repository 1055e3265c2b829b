#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flexgrid/errors.hpp"
#include "flexgrid/scenario.hpp"

namespace flexgrid {

const char* to_string(CaseKind c) {
    switch (c) {
        case CaseKind::Base: return "base";
        case CaseKind::Monitoring: return "monitoring";
        case CaseKind::Control: return "control";
    }
    return "base";
}

const char* to_string(Loading l) { return l == Loading::Future ? "future" : "current"; }

CaseKind parse_case(const std::string& s) {
    if (s == "base") return CaseKind::Base;
    if (s == "monitoring") return CaseKind::Monitoring;
    if (s == "control") return CaseKind::Control;
    throw InputError("case must be base, monitoring or control", s);
}

Loading parse_loading(const std::string& s) {
    if (s == "current") return Loading::Current;
    if (s == "future") return Loading::Future;
    throw InputError("scenario must be current or future", s);
}

void ScenarioConfig::validate() const {
    weights.validate();
    if (!(future_load_kw >= 0.0)) throw InputError("future_load_kw must be non-negative");
    if (!(step_minutes > 0.0) || !(horizon_hours > 0.0)) {
        throw InputError("horizon and step must be positive");
    }
    const double steps = horizon_hours * 60.0 / step_minutes;
    if (std::abs(steps - std::round(steps)) > 1e-9) {
        throw InputError("horizon must be a multiple of the step");
    }
    if (!(slack_range.v_min > 0.0 && slack_range.v_min <= slack_range.v_max)) {
        throw InputError("slack voltage range must satisfy 0 < min <= max");
    }
    if (directions < 3) throw InputError("at least 3 flex directions are needed");
    if (noise_sigma < 0.0) throw InputError("noise_sigma must be non-negative");
    if (voltage_margin < 0.0) throw InputError("voltage_margin must be non-negative");
    if (probe_samples < 2) throw InputError("probe_samples must be at least 2");
    if (!(probe_amplitude > 0.0)) throw InputError("probe_amplitude must be positive");
    if (!(operating_slack_v > 0.0)) throw InputError("operating_slack_v must be positive");
    if (jobs < 1) throw InputError("jobs must be at least 1");
    if (hosting_timesteps < 1) throw InputError("hosting_timesteps must be at least 1");
    if (!(hosting_max_factor >= 1.0)) throw InputError("hosting_max_factor must be at least 1");
}

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& v) {
    if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
        return v.substr(1, v.size() - 2);
    }
    return v;
}

}  // namespace

ScenarioConfig parse_config(std::string_view text, const std::string& base_dir,
                            const std::string& source) {
    ScenarioConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        if (path.is_relative()) path = std::filesystem::path(base_dir) / path;
        return path.lexically_normal().string();
    };
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = source + ":" + std::to_string(line_no);
        bool quoted = false;
        for (std::size_t k = 0; k < line.size(); ++k) {
            if (line[k] == '"') quoted = !quoted;
            if (line[k] == '#' && !quoted) {
                line.resize(k);
                break;
            }
        }
        line = trim(line);
        if (line.empty() || line.front() == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw InputError("expected key = value", where);
        const std::string key = trim(line.substr(0, eq));
        const std::string val = unquote(trim(line.substr(eq + 1)));
        auto num = [&]() {
            try {
                std::size_t used = 0;
                const double d = std::stod(val, &used);
                if (used != val.size()) throw std::invalid_argument(val);
                return d;
            } catch (const std::exception&) {
                throw InputError("value of '" + key + "' must be a number", where);
            }
        };
        auto integer = [&]() {
            const double d = num();
            if (d != std::floor(d)) throw InputError("value of '" + key + "' must be an integer", where);
            return d;
        };
        try {
            if (key == "network") cfg.network_path = resolve(val);
            else if (key == "profiles") cfg.profiles_path = resolve(val);
            else if (key == "case") cfg.case_kind = parse_case(val);
            else if (key == "scenario") cfg.loading = parse_loading(val);
            else if (key == "future_load_kw") cfg.future_load_kw = num();
            else if (key == "horizon_hours") cfg.horizon_hours = num();
            else if (key == "step_minutes") cfg.step_minutes = num();
            else if (key == "w_l") cfg.weights.w_l = num();
            else if (key == "w_v") cfg.weights.w_v = num();
            else if (key == "w_lim") cfg.weights.w_lim = num();
            else if (key == "w_p") cfg.weights.w_p = num();
            else if (key == "w_q") cfg.weights.w_q = num();
            else if (key == "slack_v_min") cfg.slack_range.v_min = num();
            else if (key == "slack_v_max") cfg.slack_range.v_max = num();
            else if (key == "directions") cfg.directions = static_cast<int>(integer());
            else if (key == "noise_sigma") cfg.noise_sigma = num();
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "voltage_margin") cfg.voltage_margin = num();
            else if (key == "probe_samples") cfg.probe_samples = static_cast<int>(integer());
            else if (key == "probe_amplitude") cfg.probe_amplitude = num();
            else if (key == "operating_slack_v") cfg.operating_slack_v = num();
            else if (key == "jobs") cfg.jobs = static_cast<int>(integer());
            else if (key == "hosting_capacity") {
                if (val != "true" && val != "false") throw InputError("expected true or false", where);
                cfg.hosting_capacity = val == "true";
            }
            else if (key == "hosting_timesteps") cfg.hosting_timesteps = static_cast<int>(integer());
            else if (key == "hosting_max_factor") cfg.hosting_max_factor = num();
            else throw InputError("unknown configuration key '" + key + "'", where);
        } catch (const InputError& e) {
            if (e.element() == where) throw;
            throw InputError(e.what(), where);
        } catch (const std::exception&) {
            throw InputError("invalid value for '" + key + "'", where);
        }
    }
    cfg.validate();
    return cfg;
}

ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open file", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const auto dir = std::filesystem::path(path).parent_path();
    return parse_config(ss.str(), dir.empty() ? "." : dir.string(), path);
}

}  // namespace flexgrid
