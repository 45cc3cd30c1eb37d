#include <sfcmig/engine.hpp>

#include <fmt/core.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace sfcmig {

// ---------------------------------------------------------------------------
// Bandwidth sharing

namespace {

struct ShareSplit {
    double pool = 0.0;
    std::size_t unreserved = 0;
    double reserved_active = 0.0;
};

ShareSplit split(const LinkState& link) {
    ShareSplit s;
    for (const auto& t : link.transfers) {
        if (t.reserved_rate) {
            s.reserved_active += *t.reserved_rate;
        } else {
            ++s.unreserved;
        }
    }
    double carved = std::max(s.reserved_active, link.total_reserved_bytes_per_s);
    s.pool = std::max(0.0, link.capacity - carved);
    return s;
}

}  // namespace

std::vector<double> allocate_shares(const LinkState& link) {
    std::vector<double> rates(link.transfers.size(), 0.0);
    const ShareSplit s = split(link);
    for (std::size_t i = 0; i < link.transfers.size(); ++i) {
        if (link.transfers[i].reserved_rate) {
            rates[i] = *link.transfers[i].reserved_rate;
        }
    }
    if (s.unreserved == 0) {
        return rates;
    }
    const double flows = static_cast<double>(s.unreserved) + std::max(0, link.background_flow_count);
    double migration_pool = s.pool * static_cast<double>(s.unreserved) / flows;
    if (link.migration_limit) {
        migration_pool = std::min(migration_pool, *link.migration_limit);
    }
    const double each = migration_pool / static_cast<double>(s.unreserved);
    for (std::size_t i = 0; i < link.transfers.size(); ++i) {
        if (!link.transfers[i].reserved_rate) {
            rates[i] = each;
        }
    }
    return rates;
}

double background_share(const LinkState& link) {
    if (link.background_flow_count <= 0) {
        return 0.0;
    }
    const ShareSplit s = split(link);
    return s.pool / (static_cast<double>(s.unreserved) + link.background_flow_count);
}

// ---------------------------------------------------------------------------
// Phase arithmetic

PredumpResult predump_schedule(double m0, double dirty_rate, double rate, double threshold,
                               int max_iters) {
    if (!(rate > 0.0)) {
        throw InvalidRateError(fmt::format("pre-dump rate must be > 0, got {}", rate));
    }
    if (max_iters < 1) {
        throw std::invalid_argument("pre-dump needs at least one iteration");
    }
    PredumpResult out;
    double current = m0;
    for (int i = 0;; ++i) {
        out.iterations.push_back(current);
        const double next = dirty_rate * (current / rate);
        if (next <= threshold) {
            out.final_dirty_bytes = next;
            out.converged = true;
            break;
        }
        if (i + 1 >= max_iters) {
            out.final_dirty_bytes = next;
            out.converged = false;
            break;
        }
        current = next;
    }
    return out;
}

double predump_set_bytes(double m0, double dirty_rate, double rate, int i) {
    if (!(rate > 0.0)) {
        throw InvalidRateError(fmt::format("pre-dump rate must be > 0, got {}", rate));
    }
    return m0 * std::pow(dirty_rate / rate, i);
}

double phase_duration(PhaseKind phase, double bytes, double rate, double overhead_s,
                      double latency_s) {
    if (!is_transfer_phase(phase)) {
        return overhead_s;
    }
    if (!(rate > 0.0)) {
        throw InvalidRateError(
            fmt::format("{} needs a positive rate, got {}", to_string(phase), rate));
    }
    return bytes / rate + overhead_s + latency_s;
}

double accumulate_dirty(double dirty_rate, double wait_s, double cap) {
    return std::min(dirty_rate * std::max(0.0, wait_s), cap);
}

// ---------------------------------------------------------------------------
// Event log

std::string_view to_string(EventKind kind) {
    switch (kind) {
    case EventKind::TransferComplete: return "TransferComplete";
    case EventKind::TaskEnd: return "TaskEnd";
    case EventKind::RestoreComplete: return "RestoreComplete";
    case EventKind::ReservationReleased: return "ReservationReleased";
    case EventKind::BarrierRelease: return "BarrierRelease";
    case EventKind::ReservationGranted: return "ReservationGranted";
    case EventKind::ReservationQueued: return "ReservationQueued";
    case EventKind::TaskReady: return "TaskReady";
    case EventKind::TaskStart: return "TaskStart";
    case EventKind::FreezeStart: return "FreezeStart";
    case EventKind::AllocationChange: return "AllocationChange";
    case EventKind::Warning: return "Warning";
    case EventKind::ReconnectComplete: return "ReconnectComplete";
    }
    return "Unknown";
}

int kind_rank(EventKind kind) { return static_cast<int>(kind); }

void sort_events(std::vector<Event>& events) {
    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        if (a.time_s != b.time_s) {
            return a.time_s < b.time_s;
        }
        if (kind_rank(a.kind) != kind_rank(b.kind)) {
            return kind_rank(a.kind) < kind_rank(b.kind);
        }
        return a.instance < b.instance;
    });
}

std::vector<CpuPoint> cpu_series(const EventLog& log, NodeRole node) {
    std::map<double, double> deltas;
    for (const auto& a : log.activities) {
        if (a.node != node || a.cost_pct == 0.0 || !(a.end_s > a.start_s)) {
            continue;
        }
        deltas[a.start_s] += a.cost_pct;
        deltas[a.end_s] -= a.cost_pct;
    }
    std::vector<CpuPoint> out{{0.0, 0.0}};
    double raw = 0.0;
    for (const auto& [t, d] : deltas) {
        raw += d;
        double load = std::clamp(raw, 0.0, 100.0);
        if (std::abs(load) < 1e-9) {
            load = 0.0;
        }
        if (out.back().time_s == t) {
            out.back().load_pct = load;
            if (out.size() > 1 && out[out.size() - 2].load_pct == load) {
                out.pop_back();
            }
        } else if (out.back().load_pct != load) {
            out.push_back({t, load});
        }
    }
    return out;
}

double cpu_integral(std::span<const CpuPoint> series) {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < series.size(); ++i) {
        total += series[i].load_pct * (series[i + 1].time_s - series[i].time_s);
    }
    return total;
}

void write_event_csv(std::ostream& out, const EventLog& log) {
    out << "time_s,kind,instance,phase,detail\n";
    for (const auto& e : log.events) {
        std::string_view name = "sfc";
        if (e.instance != kChainLevel && e.instance < log.instance_names.size()) {
            name = log.instance_names[e.instance];
        }
        fmt::print(out, "{:.9f},{},{},{},{}\n", e.time_s, to_string(e.kind), name,
                   e.phase ? to_string(*e.phase) : std::string_view{}, e.detail);
    }
}

void write_cpu_csv(std::ostream& out, std::span<const CpuPoint> series) {
    out << "time_s,load_pct\n";
    for (const auto& p : series) {
        fmt::print(out, "{:.9f},{:.6f}\n", p.time_s, p.load_pct);
    }
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

constexpr double kTimeEps = 1e-12;

bool same_instant(double a, double b) {
    return std::abs(a - b) <= kTimeEps * std::max(1.0, std::abs(b));
}

class Simulator {
  public:
    Simulator(const Scenario& scenario, const TaskGraph& plan, int rep_index, bool details)
        : scenario_(scenario), plan_(plan), details_(details) {
        auto violations = validate_scenario(scenario);
        if (!violations.empty()) {
            std::string msg = "invalid scenario:";
            for (const auto& v : violations) {
                msg += " " + v.to_string() + ";";
            }
            throw SimulationError(msg);
        }
        RngStream rng = repetition_stream(scenario.base_seed, rep_index);
        for (const auto& inst : scenario.sfc.instances) {
            InstanceState st;
            st.spec = perturb(inst, rng, scenario.noise_sigma);
            if (plan.pattern.network_aware) {
                auto it = plan.reservation_requests.find(inst.name);
                if (it != plan.reservation_requests.end()) {
                    st.reservation_rate = it->second;
                    if (st.reservation_rate > registry_.cap() * (1.0 + 1e-12)) {
                        throw SimulationError(fmt::format(
                            "reservation {} B/s for '{}' exceeds the reservable capacity {} B/s",
                            st.reservation_rate, inst.name, registry_.cap()));
                    }
                }
            }
            instances_.push_back(std::move(st));
            log_.instance_names.push_back(inst.name);
        }

        tasks_.resize(plan.tasks.size());
        dependents_.resize(plan.tasks.size());
        for (std::size_t i = 0; i < plan.tasks.size(); ++i) {
            const Task& t = plan.tasks[i];
            if (t.id != i) {
                throw SimulationError("task ids must equal their position in the plan");
            }
            if (t.instance != kChainLevel && t.instance >= instances_.size()) {
                throw SimulationError(fmt::format("task {} refers to unknown instance {}", i, t.instance));
            }
            tasks_[i].deps_left = t.deps.size();
            for (TaskId d : t.deps) {
                if (d >= plan.tasks.size()) {
                    throw SimulationError(fmt::format("task {} depends on unknown task {}", i, d));
                }
                dependents_[d].push_back(i);
            }
            if (t.instance != kChainLevel && is_transfer_phase(t.phase) &&
                !instances_[t.instance].first_task) {
                instances_[t.instance].first_task = i;
            }
        }
        for (const auto& [id, members] : plan.barriers) {
            barrier_left_[id] = members.size();
        }
        if (!topological_order(plan)) {
            throw SimulationError("plan contains a dependency cycle");
        }
    }

    EventLog run() {
        start_ready();
        while (done_ < tasks_.size()) {
            reallocate();
            double t_next = std::numeric_limits<double>::infinity();
            for (const auto& ts : tasks_) {
                if (ts.stage == Stage::Delay) {
                    t_next = std::min(t_next, ts.delay_end);
                } else if (ts.stage == Stage::Transfer && ts.rate > 0.0) {
                    t_next = std::min(t_next, now_ + ts.remaining / ts.rate);
                }
            }
            if (!std::isfinite(t_next)) {
                throw SimulationError(fmt::format(
                    "simulation stalled at t={} with {} unfinished tasks", now_, tasks_.size() - done_));
            }
            const double dt = t_next - now_;
            std::vector<TaskId> finishing;
            for (TaskId i = 0; i < tasks_.size(); ++i) {
                auto& ts = tasks_[i];
                if (ts.stage != Stage::Transfer || ts.rate <= 0.0) {
                    continue;
                }
                if (same_instant(now_ + ts.remaining / ts.rate, t_next)) {
                    ts.shipped += ts.remaining;
                    ts.remaining = 0.0;
                    finishing.push_back(i);
                } else {
                    const double moved = ts.rate * dt;
                    ts.shipped += moved;
                    ts.remaining -= moved;
                }
            }
            now_ = t_next;
            for (TaskId i = 0; i < tasks_.size(); ++i) {
                if (tasks_[i].stage == Stage::Delay && same_instant(tasks_[i].delay_end, now_)) {
                    after_delay(i);
                }
            }
            for (TaskId i : finishing) {
                on_transfer_complete(i);
            }
            start_ready();
        }
        sort_events(log_.events);
        return std::move(log_);
    }

  private:
    enum class Stage { Pending, Queued, Delay, Transfer, Done };

    struct TaskState {
        Stage stage = Stage::Pending;
        std::size_t deps_left = 0;
        bool ready_emitted = false;
        double start = 0.0;
        double delay_end = 0.0;
        double next_bytes = 0.0;  // transfer that follows the current delay
        double requested = 0.0;
        double remaining = 0.0;
        double shipped = 0.0;
        double rate = 0.0;
        double transfer_start = 0.0;
        int iteration = 0;
    };

    struct InstanceState {
        InstanceSpec spec;
        std::optional<TaskId> first_task;
        double reservation_rate = 0.0;
        std::optional<GrantId> grant;
        bool queued = false;
        double predump_end = 0.0;
        double final_dirty = 0.0;
    };

    const Task& task(TaskId id) const { return plan_.tasks[id]; }

    // Detail text is only rendered when requested; metrics never read it.
    template <typename... Args>
    std::string describe(fmt::format_string<Args...> format, Args&&... args) const {
        if (!details_) {
            return {};
        }
        return fmt::format(format, std::forward<Args>(args)...);
    }

    void emit(EventKind kind, std::size_t instance, std::optional<PhaseKind> phase,
              std::string detail = {}, double value = 0.0, int count = 0, double aux = 0.0) {
        log_.events.push_back(Event{now_, kind, instance, phase, value, aux, count, std::move(detail)});
    }

    bool gate_open(const Task& t) const {
        if (!t.gate) {
            return true;
        }
        auto it = barrier_left_.find(*t.gate);
        return it == barrier_left_.end() || it->second == 0;
    }

    bool needs_reservation(TaskId id) const {
        const Task& t = task(id);
        if (!plan_.pattern.network_aware || t.instance == kChainLevel) {
            return false;
        }
        const auto& inst = instances_[t.instance];
        return inst.reservation_rate > 0.0 && inst.first_task == id && !inst.grant;
    }

    void start_ready() {
        bool progress = true;
        while (progress) {
            progress = false;
            for (TaskId i = 0; i < tasks_.size(); ++i) {
                auto& ts = tasks_[i];
                if ((ts.stage != Stage::Pending && ts.stage != Stage::Queued) || ts.deps_left != 0 ||
                    !gate_open(task(i))) {
                    continue;
                }
                const Task& t = task(i);
                if (!ts.ready_emitted) {
                    ts.ready_emitted = true;
                    emit(EventKind::TaskReady, t.instance, t.phase);
                }
                if (needs_reservation(i)) {
                    auto& inst = instances_[t.instance];
                    if (ts.stage == Stage::Queued) {
                        continue;
                    }
                    if (auto g = registry_.request(t.instance, inst.reservation_rate)) {
                        inst.grant = *g;
                        emit(EventKind::ReservationGranted, t.instance, std::nullopt,
                             describe("rate={:.3f}", inst.reservation_rate), inst.reservation_rate);
                    } else {
                        ts.stage = Stage::Queued;
                        inst.queued = true;
                        emit(EventKind::ReservationQueued, t.instance, std::nullopt,
                             describe("rate={:.3f};reserved={:.3f}", inst.reservation_rate,
                                         registry_.total_reserved()),
                             inst.reservation_rate);
                        continue;
                    }
                }
                start_task(i);
                progress = true;
            }
        }
    }

    void start_task(TaskId id) {
        auto& ts = tasks_[id];
        const Task& t = task(id);
        ts.start = now_;
        emit(EventKind::TaskStart, t.instance, t.phase);
        const double latency = scenario_.link.latency_s;
        switch (t.phase) {
        case PhaseKind::DiskCopy: {
            const auto& spec = instances_[t.instance].spec;
            ts.next_bytes = spec.disk_delta_bytes;
            enter_delay(id, spec.overhead(PhaseKind::DiskCopy) + latency);
            break;
        }
        case PhaseKind::PreDump: {
            const auto& spec = instances_[t.instance].spec;
            ts.iteration = 0;
            ts.next_bytes = spec.mem_delta_bytes;
            enter_delay(id, spec.overhead(PhaseKind::PreDump) + latency);
            break;
        }
        case PhaseKind::Dump: {
            const auto& inst = instances_[t.instance];
            const double accrued = accumulate_dirty(inst.spec.dirty_rate_bytes_per_s,
                                                    now_ - inst.predump_end, inst.spec.mem_delta_bytes);
            ts.next_bytes = inst.final_dirty + accrued + inst.spec.state_overhead_bytes;
            emit(EventKind::FreezeStart, t.instance, t.phase,
                 describe("payload={:.3f};final_dirty={:.3f};accrued={:.3f}", ts.next_bytes,
                             inst.final_dirty, accrued),
                 ts.next_bytes);
            enter_delay(id, inst.spec.overhead(PhaseKind::Dump) + latency);
            break;
        }
        case PhaseKind::Restore:
            enter_delay(id, instances_[t.instance].spec.restore_time_s);
            break;
        case PhaseKind::Reconnect:
            enter_delay(id, scenario_.reconnect_delay_s);
            break;
        }
    }

    void enter_delay(TaskId id, double duration) {
        auto& ts = tasks_[id];
        if (duration <= 0.0) {
            after_delay(id);
            return;
        }
        ts.stage = Stage::Delay;
        ts.delay_end = now_ + duration;
    }

    void after_delay(TaskId id) {
        if (is_transfer_phase(task(id).phase)) {
            begin_transfer(id, tasks_[id].next_bytes);
        } else {
            finish(id);
        }
    }

    void begin_transfer(TaskId id, double bytes) {
        auto& ts = tasks_[id];
        ts.requested = bytes;
        ts.shipped = 0.0;
        ts.transfer_start = now_;
        if (bytes <= 0.0) {
            ts.stage = Stage::Delay;  // not on the link
            on_transfer_complete(id);
            return;
        }
        ts.stage = Stage::Transfer;
        ts.remaining = bytes;
        ts.rate = 0.0;
        alloc_dirty_ = true;
    }

    void on_transfer_complete(TaskId id) {
        auto& ts = tasks_[id];
        const Task& t = task(id);
        if (ts.stage == Stage::Transfer) {
            alloc_dirty_ = true;
        }
        ts.stage = Stage::Delay;
        ts.rate = 0.0;
        emit(EventKind::TransferComplete, t.instance, t.phase,
             describe("shipped={:.3f};requested={:.3f};iteration={}", ts.shipped, ts.requested,
                         ts.iteration),
             ts.shipped, ts.iteration, ts.requested);

        if (t.phase != PhaseKind::PreDump) {
            finish(id);
            return;
        }
        auto& inst = instances_[t.instance];
        const double elapsed = now_ - ts.transfer_start;
        const double next = inst.spec.dirty_rate_bytes_per_s * elapsed;
        ++ts.iteration;
        if (next <= scenario_.predump_stop_threshold_bytes) {
            inst.final_dirty = next;
            finish(id);
        } else if (ts.iteration >= scenario_.predump_max_iters) {
            inst.final_dirty = next;
            emit(EventKind::Warning, t.instance, t.phase,
                 describe("pre-dump did not converge after {} iterations;final_dirty={:.3f}",
                             ts.iteration, next),
                 next, ts.iteration);
            finish(id);
        } else {
            begin_transfer(id, next);
        }
    }

    void finish(TaskId id) {
        auto& ts = tasks_[id];
        const Task& t = task(id);
        ts.stage = Stage::Done;
        ++done_;
        emit(EventKind::TaskEnd, t.instance, t.phase);
        record_activity(t, ts.start, now_);

        switch (t.phase) {
        case PhaseKind::PreDump:
            instances_[t.instance].predump_end = now_;
            break;
        case PhaseKind::Restore:
            emit(EventKind::RestoreComplete, t.instance, t.phase);
            release_reservation(t.instance);
            break;
        case PhaseKind::Reconnect:
            emit(EventKind::ReconnectComplete, kChainLevel, t.phase);
            break;
        default:
            break;
        }

        for (TaskId d : dependents_[id]) {
            --tasks_[d].deps_left;
        }
        if (t.barrier) {
            auto it = barrier_left_.find(*t.barrier);
            if (it != barrier_left_.end() && it->second > 0 && --it->second == 0) {
                emit(EventKind::BarrierRelease, kChainLevel, std::nullopt,
                     describe("barrier={}", *t.barrier), 0.0, *t.barrier);
            }
        }
    }

    void release_reservation(std::size_t instance) {
        auto& inst = instances_[instance];
        if (!inst.grant) {
            return;
        }
        const double rate = inst.reservation_rate;
        auto admitted = registry_.release(*inst.grant);
        inst.grant.reset();
        emit(EventKind::ReservationReleased, instance, std::nullopt, describe("rate={:.3f}", rate), rate);
        for (const Grant& g : admitted) {
            auto& other = instances_[g.requester];
            other.grant = g.id;
            other.queued = false;
            if (other.first_task) {
                tasks_[*other.first_task].stage = Stage::Pending;
            }
            emit(EventKind::ReservationGranted, g.requester, std::nullopt,
                 describe("rate={:.3f};after_queue", g.rate), g.rate);
        }
        alloc_dirty_ = true;
    }

    void record_activity(const Task& t, double start, double end) {
        const NodeRole node = is_transfer_phase(t.phase) ? NodeRole::Source : NodeRole::Destination;
        const MecNode& host = node == NodeRole::Source ? scenario_.source : scenario_.destination;
        double cost = 0.0;
        if (auto it = scenario_.cpu_cost_pct.find(t.phase); it != scenario_.cpu_cost_pct.end()) {
            cost = it->second * 100.0 / host.cpu_capacity_pct;
        }
        log_.activities.push_back(TaskActivity{t.instance, t.phase, node, start, end, cost});
    }

    void reallocate() {
        if (!alloc_dirty_) {
            return;
        }
        alloc_dirty_ = false;
        LinkState link;
        link.capacity = scenario_.link.capacity_bytes_per_s;
        link.total_reserved_bytes_per_s = registry_.total_reserved();
        link.background_flow_count = scenario_.background_transfers;
        link.migration_limit = scenario_.migration_bandwidth_limit_bytes_per_s;
        std::vector<TaskId> active;
        for (TaskId i = 0; i < tasks_.size(); ++i) {
            if (tasks_[i].stage != Stage::Transfer) {
                continue;
            }
            const Task& t = task(i);
            Transfer tr;
            tr.owner = t.instance;
            tr.phase = t.phase;
            tr.remaining_bytes = tasks_[i].remaining;
            if (plan_.pattern.network_aware && instances_[t.instance].grant) {
                tr.reserved_rate = instances_[t.instance].reservation_rate;
            }
            link.transfers.push_back(tr);
            active.push_back(i);
        }
        const auto rates = allocate_shares(link);
        double total = background_share(link) * std::max(0, link.background_flow_count);
        for (std::size_t k = 0; k < active.size(); ++k) {
            tasks_[active[k]].rate = rates[k];
            total += rates[k];
        }
        if (active != last_active_ || rates != last_rates_) {
            std::string detail;
            if (details_) {
                detail = fmt::format("active={}", active.size());
                for (std::size_t k = 0; k < active.size(); ++k) {
                    detail += fmt::format(";{}:{}={:.3f}", log_.instance_names[task(active[k]).instance],
                                          to_string(task(active[k]).phase), rates[k]);
                }
            }
            emit(EventKind::AllocationChange, kChainLevel, std::nullopt, std::move(detail), total,
                 static_cast<int>(active.size()), link.capacity);
            last_active_ = std::move(active);
            last_rates_ = rates;
        }
    }

    const Scenario& scenario_;
    const TaskGraph& plan_;
    bool details_;
    ReservationRegistry registry_{scenario_.link};
    std::vector<InstanceState> instances_;
    std::vector<TaskState> tasks_;
    std::vector<std::vector<TaskId>> dependents_;
    std::map<int, std::size_t> barrier_left_;
    std::vector<TaskId> last_active_;
    std::vector<double> last_rates_;
    std::size_t done_ = 0;
    double now_ = 0.0;
    bool alloc_dirty_ = true;
    EventLog log_;
};

}  // namespace

EventLog simulate(const Scenario& scenario, const TaskGraph& plan, int rep_index, SimulateOptions options) {
    return Simulator{scenario, plan, rep_index, options.details}.run();
}

}  // namespace sfcmig
