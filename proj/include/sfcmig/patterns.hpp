#pragma once

#include <sfcmig/model.hpp>

#include <cstddef>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sfcmig {

using TaskId = std::size_t;

/// Chain index used for the chain-level Reconnect task.
inline constexpr std::size_t kChainLevel = std::numeric_limits<std::size_t>::max();

struct Task {
    TaskId id = 0;
    std::size_t instance = 0;  // chain index, kChainLevel for Reconnect
    std::string instance_name;
    PhaseKind phase = PhaseKind::DiskCopy;
    std::vector<TaskId> deps;
    std::optional<int> barrier;  // barrier this task is a member of
    std::optional<int> gate;     // barrier that must be released before this task starts
};

/// Partial order of phase tasks realizing one coordination pattern.
struct TaskGraph {
    PatternKind pattern;
    std::vector<Task> tasks;
    std::map<int, std::vector<TaskId>> barriers;
    /// Per-instance reserved rate, network-aware plans only.
    std::map<std::string, double> reservation_requests;

    std::optional<TaskId> find(std::size_t instance, PhaseKind phase) const;
};

/// Base graph for `pattern` over `sfc`; no reservations.
TaskGraph build_plan(PatternKind pattern, const SfcSpec& sfc);

/// Graph for the scenario's pattern, with reservation requests filled in when
/// the network-aware flag is set.
TaskGraph build_plan(const Scenario& scenario);

/// Topological order (Kahn, lowest id first); empty optional on a cycle.
std::optional<std::vector<TaskId>> topological_order(const TaskGraph& graph);

/// JSON list of {task_id, instance, phase, deps, barrier, gate}.
std::string plan_to_json(const TaskGraph& graph);

struct PredumpPolicy {
    double threshold_bytes = 65536.0;
    int max_iters = 5;
};

/// Freeze-to-restore time of one instance migrating alone at a constant
/// `rate`: (final dirty set + state overhead) / rate plus the fixed dump
/// overhead, link latency and restore time.
double blocking_downtime(const InstanceSpec& inst, double rate, double latency_s,
                         const PredumpPolicy& policy);

class ReservationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Minimal rate r in (0, capacity] such that the blocking downtime at r and
/// at every rate above it stays within (1 + tolerance) of the full-capacity
/// downtime. Bisection stops once the bracket is narrower than `rate_tol`.
double compute_reservation(const InstanceSpec& inst, const InterMecLink& link, double tolerance,
                           double rate_tol, const PredumpPolicy& policy = {});

using GrantId = std::size_t;

struct Grant {
    GrantId id = 0;
    std::size_t requester = 0;
    double rate = 0.0;
};

/// Bandwidth reservations on one link. Requests that do not fit are queued
/// FIFO and admitted as earlier grants are released.
class ReservationRegistry {
  public:
    explicit ReservationRegistry(const InterMecLink& link);

    /// Granted immediately when the total stays within the reservable cap and
    /// nobody is queued ahead; otherwise nullopt and the request is queued.
    std::optional<GrantId> request(std::size_t requester, double rate);

    /// Frees `grant` and returns the queued requests admitted as a result.
    std::vector<Grant> release(GrantId grant);

    double total_reserved() const { return total_reserved_; }
    double cap() const { return cap_; }
    std::size_t active_grants() const { return grants_.size(); }
    std::size_t queued() const { return queue_.size(); }
    std::optional<Grant> grant(GrantId id) const;

  private:
    struct Pending {
        std::size_t requester;
        double rate;
    };

    GrantId admit(std::size_t requester, double rate);
    bool fits(double rate) const;

    double cap_;
    double total_reserved_ = 0.0;
    GrantId next_id_ = 1;
    std::map<GrantId, Grant> grants_;
    std::deque<Pending> queue_;
};

}  // namespace sfcmig
