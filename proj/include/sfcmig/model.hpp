#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace sfcmig {

/// Steps of one live migration. DiskCopy and PreDump run while the instance
/// keeps serving; Dump freezes it until Restore completes on the destination.
/// Reconnect is chain-level and follows the last Restore.
enum class PhaseKind { DiskCopy, PreDump, Dump, Restore, Reconnect };

inline constexpr PhaseKind kInstancePhases[] = {PhaseKind::DiskCopy, PhaseKind::PreDump,
                                                PhaseKind::Dump, PhaseKind::Restore};

std::string_view to_string(PhaseKind phase);
std::optional<PhaseKind> phase_from_string(std::string_view text);
bool is_transfer_phase(PhaseKind phase);

using PhaseSeconds = std::map<PhaseKind, double>;
using PhasePercent = std::map<PhaseKind, double>;

struct InstanceSpec {
    std::string name;
    double disk_delta_bytes = 0.0;
    double mem_delta_bytes = 0.0;
    double dirty_rate_bytes_per_s = 0.0;
    double state_overhead_bytes = 0.0;
    double restore_time_s = 0.0;
    PhaseSeconds phase_overhead_s;
    double nominal_image_bytes = 0.0;

    /// Fixed overhead of `phase`, zero when not configured.
    double overhead(PhaseKind phase) const;

    bool operator==(const InstanceSpec&) const = default;
};

struct SfcSpec {
    std::vector<InstanceSpec> instances;

    std::size_t size() const { return instances.size(); }
    bool operator==(const SfcSpec&) const = default;
};

struct InterMecLink {
    double capacity_bytes_per_s = 0.0;
    double latency_s = 0.0;
    double reservable_fraction = 1.0;

    double reservable_capacity() const { return reservable_fraction * capacity_bytes_per_s; }
    bool operator==(const InterMecLink&) const = default;
};

struct MecNode {
    std::string id;
    double cpu_capacity_pct = 100.0;

    bool operator==(const MecNode&) const = default;
};

enum class NodeRole { Source, Destination };

enum class BasePattern { Asynchronous, WaitForMe, RoundRobin };

struct PatternKind {
    BasePattern base = BasePattern::Asynchronous;
    bool network_aware = false;

    bool operator==(const PatternKind&) const = default;
};

std::string_view to_string(BasePattern base);
/// "asynchronous", "waitforme+network-aware", ...
std::string to_string(PatternKind pattern);
/// Accepts the canonical names plus short aliases (async, wfm, rr) and an
/// optional "+network-aware" / "+na" suffix.
std::optional<PatternKind> parse_pattern(std::string_view text);

struct Scenario {
    MecNode source{"source", 100.0};
    MecNode destination{"destination", 100.0};
    InterMecLink link;
    SfcSpec sfc;
    PatternKind pattern;
    std::optional<double> migration_bandwidth_limit_bytes_per_s;
    int background_transfers = 0;
    int repetitions = 10;
    std::uint64_t base_seed = 0;
    double noise_sigma = 0.0;
    double predump_stop_threshold_bytes = 65536.0;
    int predump_max_iters = 5;
    double reconnect_delay_s = 0.0;
    PhasePercent cpu_cost_pct = default_cpu_costs();
    // network-aware reservation search
    double reservation_tolerance = 0.10;
    double reservation_rate_tol_bytes_per_s = 1000.0;

    static PhasePercent default_cpu_costs();

    const InstanceSpec* find_instance(std::string_view name) const;
    bool operator==(const Scenario&) const = default;
};

struct Violation {
    std::string field;
    std::string message;

    std::string to_string() const { return field + ": " + message; }
};

/// Every invariant violation in `s`. An empty result means every downstream
/// operation accepts the scenario.
std::vector<Violation> validate_scenario(const Scenario& s);

using RngStream = std::mt19937_64;

/// Independent stream for one repetition.
RngStream repetition_stream(std::uint64_t base_seed, int rep_index);

/// Multiplies dirty rate, state overhead, restore time and every phase
/// overhead by independent Normal(1, sigma^2) factors truncated below at 0.1.
InstanceSpec perturb(const InstanceSpec& spec, RngStream& rng, double sigma);

/// Draw one truncated noise factor; exposed for distribution tests.
double noise_factor(RngStream& rng, double sigma);

}  // namespace sfcmig
