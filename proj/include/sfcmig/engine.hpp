#pragma once

#include <sfcmig/model.hpp>
#include <sfcmig/patterns.hpp>

#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sfcmig {

class InvalidRateError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

class SimulationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Bandwidth sharing

struct Transfer {
    std::size_t owner = 0;  // chain index
    PhaseKind phase = PhaseKind::DiskCopy;
    double remaining_bytes = 0.0;
    double allocated_rate_bytes_per_s = 0.0;
    std::optional<double> reserved_rate;
};

struct LinkState {
    double capacity = 0.0;
    std::vector<Transfer> transfers;
    double total_reserved_bytes_per_s = 0.0;
    int background_flow_count = 0;
    std::optional<double> migration_limit;
};

/// Rates for `link.transfers`, index-aligned. Reserved transfers get exactly
/// their reservation. The remaining capacity is split equally between the
/// unreserved migration transfers and the background flows; the migration
/// share is then capped by the migration-wide limit, if any.
std::vector<double> allocate_shares(const LinkState& link);

/// Equal share one background flow receives in `link`.
double background_share(const LinkState& link);

// ---------------------------------------------------------------------------
// Phase arithmetic

struct PredumpResult {
    std::vector<double> iterations;  // bytes shipped per iteration
    double final_dirty_bytes = 0.0;  // first set left for the blocking dump
    bool converged = false;

    std::size_t stop_index() const { return iterations.size(); }
};

/// Iterative pre-copy at a constant rate: D0 = m0, D(i+1) = dirty * D(i) / rate.
/// Stops once the next set is at most `threshold` or after `max_iters` sets.
PredumpResult predump_schedule(double m0, double dirty_rate, double rate, double threshold,
                               int max_iters);

/// Closed form m0 * (dirty_rate / rate)^i of the i-th pre-dump set.
double predump_set_bytes(double m0, double dirty_rate, double rate, int i);

/// Transfer phases: bytes / rate + overhead + latency. For Restore and
/// Reconnect there is no transfer and `overhead_s` carries the fixed
/// duration (restore time or reconnect delay).
double phase_duration(PhaseKind phase, double bytes, double rate, double overhead_s,
                      double latency_s);

/// Memory re-dirtied while an instance waits before its blocking dump.
double accumulate_dirty(double dirty_rate, double wait_s, double cap);

// ---------------------------------------------------------------------------
// Event log

enum class EventKind {
    TransferComplete,
    TaskEnd,
    RestoreComplete,
    ReservationReleased,
    BarrierRelease,
    ReservationGranted,
    ReservationQueued,
    TaskReady,
    TaskStart,
    FreezeStart,
    AllocationChange,
    Warning,
    ReconnectComplete,
};

std::string_view to_string(EventKind kind);

/// Rank used to order simultaneous events.
int kind_rank(EventKind kind);

struct Event {
    double time_s = 0.0;
    EventKind kind = EventKind::TaskStart;
    std::size_t instance = kChainLevel;
    std::optional<PhaseKind> phase;
    double value = 0.0;  // shipped bytes, payload or rate depending on kind
    double aux = 0.0;    // requested bytes for TransferComplete, capacity for AllocationChange
    int count = 0;       // active transfers for AllocationChange, iteration for PreDump
    std::string detail;

    bool operator==(const Event&) const = default;
};

/// One task's occupancy of a node, used for CPU accounting.
struct TaskActivity {
    std::size_t instance = 0;
    PhaseKind phase = PhaseKind::DiskCopy;
    NodeRole node = NodeRole::Source;
    double start_s = 0.0;
    double end_s = 0.0;
    double cost_pct = 0.0;

    bool operator==(const TaskActivity&) const = default;
};

struct CpuPoint {
    double time_s = 0.0;
    double load_pct = 0.0;

    bool operator==(const CpuPoint&) const = default;
};

struct EventLog {
    std::vector<std::string> instance_names;  // chain order
    std::vector<Event> events;                // sorted by (time, kind rank, chain index)
    std::vector<TaskActivity> activities;

    bool operator==(const EventLog&) const = default;
};

/// Right-continuous step function of the node load, clamped to [0, 100].
/// An empty log yields the single point (0, 0).
std::vector<CpuPoint> cpu_series(const EventLog& log, NodeRole node);

/// Integral of a step function up to its last point.
double cpu_integral(std::span<const CpuPoint> series);

void sort_events(std::vector<Event>& events);

/// CSV `time_s,kind,instance,phase,detail`.
void write_event_csv(std::ostream& out, const EventLog& log);
/// CSV `time_s,load_pct`.
void write_cpu_csv(std::ostream& out, std::span<const CpuPoint> series);

// ---------------------------------------------------------------------------
// Simulation

struct SimulateOptions {
    bool details = true;  // render the human-readable `detail` column
};

/// Runs one repetition of `scenario` under `plan`. Instance parameters are
/// perturbed with the repetition's own stream; the result is a pure function
/// of (scenario, plan, rep_index).
EventLog simulate(const Scenario& scenario, const TaskGraph& plan, int rep_index,
                  SimulateOptions options = {});

}  // namespace sfcmig
