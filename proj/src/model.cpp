#include <sfcmig/model.hpp>

#include <fmt/core.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace sfcmig {

std::string_view to_string(PhaseKind phase) {
    switch (phase) {
    case PhaseKind::DiskCopy: return "disk_copy";
    case PhaseKind::PreDump: return "pre_dump";
    case PhaseKind::Dump: return "dump";
    case PhaseKind::Restore: return "restore";
    case PhaseKind::Reconnect: return "reconnect";
    }
    return "unknown";
}

std::optional<PhaseKind> phase_from_string(std::string_view text) {
    for (auto p : {PhaseKind::DiskCopy, PhaseKind::PreDump, PhaseKind::Dump, PhaseKind::Restore,
                   PhaseKind::Reconnect}) {
        if (to_string(p) == text) {
            return p;
        }
    }
    return std::nullopt;
}

bool is_transfer_phase(PhaseKind phase) {
    return phase == PhaseKind::DiskCopy || phase == PhaseKind::PreDump || phase == PhaseKind::Dump;
}

double InstanceSpec::overhead(PhaseKind phase) const {
    auto it = phase_overhead_s.find(phase);
    return it == phase_overhead_s.end() ? 0.0 : it->second;
}

std::string_view to_string(BasePattern base) {
    switch (base) {
    case BasePattern::Asynchronous: return "asynchronous";
    case BasePattern::WaitForMe: return "waitforme";
    case BasePattern::RoundRobin: return "roundrobin";
    }
    return "unknown";
}

std::string to_string(PatternKind pattern) {
    std::string out{to_string(pattern.base)};
    if (pattern.network_aware) {
        out += "+network-aware";
    }
    return out;
}

std::optional<PatternKind> parse_pattern(std::string_view text) {
    std::string lowered;
    for (char c : text) {
        if (c != '-' && c != '_' && c != ' ') {
            lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    PatternKind out;
    for (std::string_view suffix : {"+networkaware", "+na"}) {
        if (lowered.size() > suffix.size() && lowered.ends_with(suffix)) {
            out.network_aware = true;
            lowered.resize(lowered.size() - suffix.size());
            break;
        }
    }
    if (lowered == "asynchronous" || lowered == "async") {
        out.base = BasePattern::Asynchronous;
    } else if (lowered == "waitforme" || lowered == "wfm") {
        out.base = BasePattern::WaitForMe;
    } else if (lowered == "roundrobin" || lowered == "rr") {
        out.base = BasePattern::RoundRobin;
    } else {
        return std::nullopt;
    }
    return out;
}

PhasePercent Scenario::default_cpu_costs() {
    return {{PhaseKind::DiskCopy, 25.0},
            {PhaseKind::PreDump, 30.0},
            {PhaseKind::Dump, 35.0},
            {PhaseKind::Restore, 20.0}};
}

const InstanceSpec* Scenario::find_instance(std::string_view name) const {
    auto it = std::find_if(sfc.instances.begin(), sfc.instances.end(),
                           [&](const InstanceSpec& i) { return i.name == name; });
    return it == sfc.instances.end() ? nullptr : &*it;
}

namespace {

void check_non_negative(std::vector<Violation>& out, const std::string& field, double value) {
    if (!std::isfinite(value) || value < 0.0) {
        out.push_back({field, fmt::format("{} must be a finite value >= 0", field)});
    }
}

}  // namespace

std::vector<Violation> validate_scenario(const Scenario& s) {
    std::vector<Violation> out;

    if (s.sfc.instances.empty()) {
        out.push_back({"sfc.instances", "sfc must contain at least one instance"});
    }
    std::set<std::string> names;
    for (std::size_t i = 0; i < s.sfc.instances.size(); ++i) {
        const auto& inst = s.sfc.instances[i];
        const auto prefix = fmt::format("sfc.instances[{}]", i);
        if (inst.name.empty()) {
            out.push_back({prefix + ".name", "instance name must not be empty"});
        } else if (!names.insert(inst.name).second) {
            out.push_back({prefix + ".name", fmt::format("duplicate instance name '{}'", inst.name)});
        }
        check_non_negative(out, prefix + ".disk_delta_bytes", inst.disk_delta_bytes);
        check_non_negative(out, prefix + ".mem_delta_bytes", inst.mem_delta_bytes);
        check_non_negative(out, prefix + ".dirty_rate_bytes_per_s", inst.dirty_rate_bytes_per_s);
        check_non_negative(out, prefix + ".state_overhead_bytes", inst.state_overhead_bytes);
        check_non_negative(out, prefix + ".restore_time_s", inst.restore_time_s);
        check_non_negative(out, prefix + ".nominal_image_bytes", inst.nominal_image_bytes);
        for (const auto& [phase, seconds] : inst.phase_overhead_s) {
            check_non_negative(out, fmt::format("{}.phase_overhead_s.{}", prefix, to_string(phase)),
                               seconds);
        }
    }

    if (!(s.link.capacity_bytes_per_s > 0.0) || !std::isfinite(s.link.capacity_bytes_per_s)) {
        out.push_back({"link.capacity_bytes_per_s", "link capacity must be > 0"});
    }
    check_non_negative(out, "link.latency_s", s.link.latency_s);
    if (!(s.link.reservable_fraction >= 0.0 && s.link.reservable_fraction <= 1.0)) {
        out.push_back({"link.reservable_fraction", "reservable_fraction must be within [0, 1]"});
    }
    if (!(s.source.cpu_capacity_pct > 0.0)) {
        out.push_back({"source.cpu_capacity_pct", "cpu_capacity_pct must be > 0"});
    }
    if (!(s.destination.cpu_capacity_pct > 0.0)) {
        out.push_back({"destination.cpu_capacity_pct", "cpu_capacity_pct must be > 0"});
    }

    if (s.migration_bandwidth_limit_bytes_per_s) {
        double limit = *s.migration_bandwidth_limit_bytes_per_s;
        if (!(limit > 0.0)) {
            out.push_back({"migration_bandwidth_limit_bytes_per_s", "limit must be > 0"});
        } else if (limit > s.link.capacity_bytes_per_s) {
            out.push_back({"migration_bandwidth_limit_bytes_per_s", "limit exceeds link capacity"});
        }
    }
    if (s.background_transfers < 0) {
        out.push_back({"background_transfers", "background_transfers must be >= 0"});
    }
    if (s.repetitions < 1) {
        out.push_back({"repetitions", "repetitions must be >= 1"});
    }
    if (!(s.noise_sigma >= 0.0) || !std::isfinite(s.noise_sigma)) {
        out.push_back({"noise_sigma", "noise_sigma must be >= 0"});
    }
    check_non_negative(out, "predump_stop_threshold_bytes", s.predump_stop_threshold_bytes);
    if (s.predump_max_iters < 1) {
        out.push_back({"predump_max_iters", "predump_max_iters must be >= 1"});
    }
    check_non_negative(out, "reconnect_delay_s", s.reconnect_delay_s);
    for (const auto& [phase, pct] : s.cpu_cost_pct) {
        check_non_negative(out, fmt::format("cpu_cost_pct.{}", to_string(phase)), pct);
    }
    if (!(s.reservation_tolerance > 0.0)) {
        out.push_back({"reservation_tolerance", "reservation_tolerance must be > 0"});
    }
    if (!(s.reservation_rate_tol_bytes_per_s > 0.0)) {
        out.push_back({"reservation_rate_tol_bytes_per_s", "reservation_rate_tol_bytes_per_s must be > 0"});
    }
    return out;
}

RngStream repetition_stream(std::uint64_t base_seed, int rep_index) {
    return RngStream{base_seed ^ static_cast<std::uint64_t>(rep_index)};
}

double noise_factor(RngStream& rng, double sigma) {
    if (sigma == 0.0) {
        return 1.0;
    }
    std::normal_distribution<double> normal{1.0, sigma};
    double factor = normal(rng);
    while (factor < 0.1) {
        factor = normal(rng);
    }
    return factor;
}

InstanceSpec perturb(const InstanceSpec& spec, RngStream& rng, double sigma) {
    InstanceSpec out = spec;
    if (sigma == 0.0) {
        return out;
    }
    out.dirty_rate_bytes_per_s *= noise_factor(rng, sigma);
    out.state_overhead_bytes *= noise_factor(rng, sigma);
    out.restore_time_s *= noise_factor(rng, sigma);
    // Fixed draw order so the stream does not depend on which overheads are set.
    for (auto phase : {PhaseKind::DiskCopy, PhaseKind::PreDump, PhaseKind::Dump}) {
        double factor = noise_factor(rng, sigma);
        if (auto it = out.phase_overhead_s.find(phase); it != out.phase_overhead_s.end()) {
            it->second *= factor;
        }
    }
    return out;
}

}  // namespace sfcmig
