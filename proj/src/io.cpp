#include <sfcmig/io.hpp>

#include <fmt/core.h>
#include <json.hpp>

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace sfcmig {

using json = nlohmann::ordered_json;

std::optional<double> parse_bandwidth(std::string_view text) {
    std::string s;
    for (char c : text) {
        if (!std::isspace(static_cast<unsigned char>(c))) {
            s.push_back(c);
        }
    }
    std::string lowered;
    for (char c : s) {
        lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (lowered == "full") {
        return std::nullopt;
    }
    for (std::string_view suffix : {"/s", "ps"}) {
        if (lowered.size() > suffix.size() && lowered.ends_with(suffix)) {
            lowered.resize(lowered.size() - suffix.size());
            break;
        }
    }
    double scale = 1.0;
    if (lowered.ends_with("b")) {
        lowered.pop_back();
        if (!lowered.empty()) {
            switch (lowered.back()) {
            case 'k': scale = 1e3; lowered.pop_back(); break;
            case 'm': scale = 1e6; lowered.pop_back(); break;
            case 'g': scale = 1e9; lowered.pop_back(); break;
            default: break;
            }
        }
    }
    double value = 0.0;
    const char* begin = lowered.data();
    const char* end = lowered.data() + lowered.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (lowered.empty() || ec != std::errc{} || ptr != end) {
        throw ParseError(fmt::format("cannot parse bandwidth '{}'", text));
    }
    value *= scale;
    if (!(value > 0.0)) {
        throw ParseError(fmt::format("bandwidth must be > 0, got '{}'", text));
    }
    return value;
}

namespace {

json parse_json(std::string_view text, const std::string& origin) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        std::size_t column = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            } else {
                ++column;
            }
        }
        throw ParseError(fmt::format("{}:{}:{}: malformed JSON: {}", origin, line, column, e.what()));
    }
}

class Reader {
  public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ParseError(fmt::format("{}: expected an object", path_));
        }
    }

    bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& at(const char* key) const {
        if (!j_.contains(key)) {
            throw ParseError(fmt::format("missing field '{}'", field(key)));
        }
        return j_.at(key);
    }

    double number(const char* key) const {
        const auto& v = at(key);
        if (!v.is_number()) {
            throw ParseError(fmt::format("field '{}' must be a number", field(key)));
        }
        return v.get<double>();
    }

    double number_or(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

    long long integer(const char* key) const {
        const auto& v = at(key);
        if (!v.is_number_integer()) {
            throw ParseError(fmt::format("field '{}' must be an integer", field(key)));
        }
        return v.get<long long>();
    }

    long long integer_or(const char* key, long long fallback) const {
        return has(key) ? integer(key) : fallback;
    }

    std::string string(const char* key) const {
        const auto& v = at(key);
        if (!v.is_string()) {
            throw ParseError(fmt::format("field '{}' must be a string", field(key)));
        }
        return v.get<std::string>();
    }

    bool boolean_or(const char* key, bool fallback) const {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = at(key);
        if (!v.is_boolean()) {
            throw ParseError(fmt::format("field '{}' must be a boolean", field(key)));
        }
        return v.get<bool>();
    }

    Reader child(const char* key) const { return Reader(at(key), field(key)); }

  private:
    const json& j_;
    std::string path_;
};

std::map<PhaseKind, double> phase_map(const Reader& parent, const char* key) {
    std::map<PhaseKind, double> out;
    if (!parent.has(key)) {
        return out;
    }
    const Reader r = parent.child(key);
    for (const auto& [name, value] : parent.at(key).items()) {
        auto phase = phase_from_string(name);
        if (!phase) {
            throw ParseError(fmt::format("unknown phase '{}' in '{}'", name, r.field(name.c_str())));
        }
        if (!value.is_number()) {
            throw ParseError(fmt::format("field '{}' must be a number", r.field(name.c_str())));
        }
        out[*phase] = value.get<double>();
    }
    return out;
}

json phase_map_json(const std::map<PhaseKind, double>& m) {
    json j = json::object();
    for (const auto& [phase, value] : m) {
        j[std::string(to_string(phase))] = value;
    }
    return j;
}

MecNode read_node(const Reader& r, const char* key, const char* fallback_id) {
    if (!r.has(key)) {
        return MecNode{fallback_id, 100.0};
    }
    const Reader n = r.child(key);
    return MecNode{n.has("id") ? n.string("id") : fallback_id, n.number_or("cpu_capacity_pct", 100.0)};
}

Scenario read_scenario(const json& root) {
    const Reader r(root, "");
    Scenario s;
    s.source = read_node(r, "source", "source");
    s.destination = read_node(r, "destination", "destination");

    const Reader link = r.child("link");
    s.link.capacity_bytes_per_s = link.number("capacity_bytes_per_s");
    s.link.latency_s = link.number_or("latency_s", 0.0);
    s.link.reservable_fraction = link.number_or("reservable_fraction", 1.0);

    const Reader sfc = r.child("sfc");
    const auto& instances = sfc.at("instances");
    if (!instances.is_array()) {
        throw ParseError("field 'sfc.instances' must be an array");
    }
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const Reader in(instances[i], fmt::format("sfc.instances[{}]", i));
        InstanceSpec spec;
        spec.name = in.string("name");
        spec.disk_delta_bytes = in.number_or("disk_delta_bytes", 0.0);
        spec.mem_delta_bytes = in.number_or("mem_delta_bytes", 0.0);
        spec.dirty_rate_bytes_per_s = in.number_or("dirty_rate_bytes_per_s", 0.0);
        spec.state_overhead_bytes = in.number_or("state_overhead_bytes", 0.0);
        spec.restore_time_s = in.number_or("restore_time_s", 0.0);
        spec.phase_overhead_s = phase_map(in, "phase_overhead_s");
        for (const auto& [phase, _] : spec.phase_overhead_s) {
            if (!is_transfer_phase(phase)) {
                throw ParseError(fmt::format(
                    "'{}.phase_overhead_s' only accepts disk_copy, pre_dump and dump", in.field("name")));
            }
        }
        spec.nominal_image_bytes = in.number_or("nominal_image_bytes", 0.0);
        s.sfc.instances.push_back(std::move(spec));
    }

    if (r.has("pattern")) {
        const auto& p = r.at("pattern");
        std::optional<PatternKind> parsed;
        if (p.is_string()) {
            parsed = parse_pattern(p.get<std::string>());
        } else {
            const Reader pr = r.child("pattern");
            parsed = parse_pattern(pr.string("kind"));
            if (parsed) {
                parsed->network_aware = pr.boolean_or("network_aware", parsed->network_aware);
            }
        }
        if (!parsed) {
            throw ParseError("field 'pattern' names an unknown pattern");
        }
        s.pattern = *parsed;
    }
    if (r.has("migration_bandwidth_limit_bytes_per_s")) {
        s.migration_bandwidth_limit_bytes_per_s = r.number("migration_bandwidth_limit_bytes_per_s");
    }
    s.background_transfers = static_cast<int>(r.integer_or("background_transfers", 0));
    s.repetitions = static_cast<int>(r.integer_or("repetitions", 10));
    if (r.has("base_seed")) {
        const auto& seed = r.at("base_seed");
        if (!seed.is_number_unsigned()) {
            throw ParseError("field 'base_seed' must be a non-negative integer");
        }
        s.base_seed = seed.get<std::uint64_t>();
    }
    s.noise_sigma = r.number_or("noise_sigma", 0.0);
    s.predump_stop_threshold_bytes = r.number_or("predump_stop_threshold_bytes", 65536.0);
    s.predump_max_iters = static_cast<int>(r.integer_or("predump_max_iters", 5));
    s.reconnect_delay_s = r.number_or("reconnect_delay_s", 0.0);
    if (r.has("cpu_cost_pct")) {
        s.cpu_cost_pct = phase_map(r, "cpu_cost_pct");
    }
    s.reservation_tolerance = r.number_or("reservation_tolerance", 0.10);
    s.reservation_rate_tol_bytes_per_s = r.number_or("reservation_rate_tol_bytes_per_s", 1000.0);
    return s;
}

json write_scenario(const Scenario& s) {
    json j;
    j["source"] = {{"id", s.source.id}, {"cpu_capacity_pct", s.source.cpu_capacity_pct}};
    j["destination"] = {{"id", s.destination.id}, {"cpu_capacity_pct", s.destination.cpu_capacity_pct}};
    j["link"] = {{"capacity_bytes_per_s", s.link.capacity_bytes_per_s},
                 {"latency_s", s.link.latency_s},
                 {"reservable_fraction", s.link.reservable_fraction}};
    json instances = json::array();
    for (const auto& inst : s.sfc.instances) {
        json ij;
        ij["name"] = inst.name;
        ij["disk_delta_bytes"] = inst.disk_delta_bytes;
        ij["mem_delta_bytes"] = inst.mem_delta_bytes;
        ij["dirty_rate_bytes_per_s"] = inst.dirty_rate_bytes_per_s;
        ij["state_overhead_bytes"] = inst.state_overhead_bytes;
        ij["restore_time_s"] = inst.restore_time_s;
        ij["phase_overhead_s"] = phase_map_json(inst.phase_overhead_s);
        ij["nominal_image_bytes"] = inst.nominal_image_bytes;
        instances.push_back(std::move(ij));
    }
    j["sfc"] = {{"instances", std::move(instances)}};
    j["pattern"] = {{"kind", std::string(to_string(s.pattern.base))},
                    {"network_aware", s.pattern.network_aware}};
    j["migration_bandwidth_limit_bytes_per_s"] =
        s.migration_bandwidth_limit_bytes_per_s ? json(*s.migration_bandwidth_limit_bytes_per_s) : json(nullptr);
    j["background_transfers"] = s.background_transfers;
    j["repetitions"] = s.repetitions;
    j["base_seed"] = s.base_seed;
    j["noise_sigma"] = s.noise_sigma;
    j["predump_stop_threshold_bytes"] = s.predump_stop_threshold_bytes;
    j["predump_max_iters"] = s.predump_max_iters;
    j["reconnect_delay_s"] = s.reconnect_delay_s;
    j["cpu_cost_pct"] = phase_map_json(s.cpu_cost_pct);
    j["reservation_tolerance"] = s.reservation_tolerance;
    j["reservation_rate_tol_bytes_per_s"] = s.reservation_rate_tol_bytes_per_s;
    return j;
}

template <typename F>
auto with_field_errors(const std::string& origin, F&& f) {
    try {
        return f();
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", origin, e.what()));
    } catch (const json::exception& e) {
        throw ParseError(fmt::format("{}: {}", origin, e.what()));
    }
}

}  // namespace

Scenario scenario_from_json(std::string_view text, const std::string& origin) {
    const json root = parse_json(text, origin);
    return with_field_errors(origin, [&] { return read_scenario(root); });
}

std::string scenario_to_json(const Scenario& scenario) { return write_scenario(scenario).dump(2) + "\n"; }

Scenario load_scenario(const std::filesystem::path& path) {
    return scenario_from_json(read_file(path), path.string());
}

void save_scenario(const std::filesystem::path& path, const Scenario& scenario) {
    write_file(path, scenario_to_json(scenario));
}

CalibrationTarget targets_from_json(std::string_view text, const std::string& origin) {
    const json root = parse_json(text, origin);
    return with_field_errors(origin, [&] {
        const Reader r(root, "");
        const auto& cells = r.at("cells");
        if (!cells.is_array()) {
            throw ParseError("field 'cells' must be an array");
        }
        CalibrationTarget t;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const Reader c(cells[i], fmt::format("cells[{}]", i));
            CalibrationCell cell;
            cell.instance = c.string("instance");
            cell.bandwidth_bytes_per_s = c.number("bandwidth_bytes_per_s");
            auto metric = metric_from_string(c.string("metric"));
            if (!metric) {
                throw ParseError(fmt::format("field '{}' must be downtime_s or total_time_s", c.field("metric")));
            }
            cell.metric = *metric;
            cell.value = c.number("value");
            t.cells.push_back(std::move(cell));
        }
        return t;
    });
}

CalibrationTarget load_targets(const std::filesystem::path& path) {
    return targets_from_json(read_file(path), path.string());
}

CalibrationSetup setup_from_json(std::string_view text, const std::string& origin) {
    const json root = parse_json(text, origin);
    return with_field_errors(origin, [&] {
        const Reader r(root, "");
        CalibrationSetup setup;
        setup.base = read_scenario(r.at("scenario"));
        const Reader params = r.child("parameters");
        for (const auto& [name, range] : r.at("parameters").items()) {
            auto param = fit_param_from_string(name);
            if (!param) {
                throw ParseError(fmt::format("unknown calibration parameter '{}'", params.field(name.c_str())));
            }
            if (!range.is_array() || range.size() != 2 || !range[0].is_number() || !range[1].is_number()) {
                throw ParseError(fmt::format("field '{}' must be [lo, hi]", params.field(name.c_str())));
            }
            setup.bounds[*param] = ParamRange{range[0].get<double>(), range[1].get<double>()};
        }
        setup.residual_ceiling = r.number_or("residual_ceiling", setup.residual_ceiling);
        setup.grid_points = static_cast<int>(r.integer_or("grid_points", setup.grid_points));
        setup.grid_sweeps = static_cast<int>(r.integer_or("grid_sweeps", setup.grid_sweeps));
        setup.max_evaluations =
            static_cast<std::size_t>(r.integer_or("max_evaluations", static_cast<long long>(setup.max_evaluations)));
        return setup;
    });
}

CalibrationSetup load_setup(const std::filesystem::path& path) {
    return setup_from_json(read_file(path), path.string());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(fmt::format("cannot open '{}'", path.string()));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
        throw IoError(fmt::format("failed writing '{}'", path.string()));
    }
}

}  // namespace sfcmig
