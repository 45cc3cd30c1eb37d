#include <sfcmig/patterns.hpp>

#include <sfcmig/engine.hpp>

#include <fmt/core.h>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>

namespace sfcmig {

std::optional<TaskId> TaskGraph::find(std::size_t instance, PhaseKind phase) const {
    for (const auto& t : tasks) {
        if (t.instance == instance && t.phase == phase) {
            return t.id;
        }
    }
    return std::nullopt;
}

namespace {

void add_dep(Task& t, TaskId dep) {
    if (std::find(t.deps.begin(), t.deps.end(), dep) == t.deps.end()) {
        t.deps.push_back(dep);
    }
}

}  // namespace

TaskGraph build_plan(PatternKind pattern, const SfcSpec& sfc) {
    TaskGraph g;
    g.pattern = pattern;
    const std::size_t n = sfc.size();
    // slot[i][p] = id of phase p of instance i
    std::vector<std::array<TaskId, 4>> slot(n);

    auto make = [&](std::size_t i, std::size_t p) {
        Task t;
        t.id = g.tasks.size();
        t.instance = i;
        t.instance_name = sfc.instances[i].name;
        t.phase = kInstancePhases[p];
        slot[i][p] = t.id;
        g.tasks.push_back(std::move(t));
    };

    if (pattern.base == BasePattern::RoundRobin) {
        for (std::size_t p = 0; p < 4; ++p) {
            for (std::size_t i = 0; i < n; ++i) {
                make(i, p);
            }
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < 4; ++p) {
                make(i, p);
            }
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 1; p < 4; ++p) {
            add_dep(g.tasks[slot[i][p]], slot[i][p - 1]);
        }
    }

    switch (pattern.base) {
    case BasePattern::Asynchronous:
        break;
    case BasePattern::WaitForMe: {
        constexpr int kBarrier = 0;
        auto& members = g.barriers[kBarrier];
        for (std::size_t i = 0; i < n; ++i) {
            g.tasks[slot[i][1]].barrier = kBarrier;
            members.push_back(slot[i][1]);
            g.tasks[slot[i][2]].gate = kBarrier;
        }
        break;
    }
    case BasePattern::RoundRobin:
        // tasks were created in phase-grouped order; chain them
        for (TaskId id = 1; id < g.tasks.size(); ++id) {
            add_dep(g.tasks[id], id - 1);
        }
        break;
    }

    Task reconnect;
    reconnect.id = g.tasks.size();
    reconnect.instance = kChainLevel;
    reconnect.instance_name = "sfc";
    reconnect.phase = PhaseKind::Reconnect;
    for (std::size_t i = 0; i < n; ++i) {
        reconnect.deps.push_back(slot[i][3]);
    }
    std::sort(reconnect.deps.begin(), reconnect.deps.end());
    g.tasks.push_back(std::move(reconnect));

    for (auto& t : g.tasks) {
        std::sort(t.deps.begin(), t.deps.end());
    }
    return g;
}

TaskGraph build_plan(const Scenario& scenario) {
    TaskGraph g = build_plan(scenario.pattern, scenario.sfc);
    if (scenario.pattern.network_aware) {
        const PredumpPolicy policy{scenario.predump_stop_threshold_bytes, scenario.predump_max_iters};
        for (const auto& inst : scenario.sfc.instances) {
            g.reservation_requests[inst.name] =
                compute_reservation(inst, scenario.link, scenario.reservation_tolerance,
                                    scenario.reservation_rate_tol_bytes_per_s, policy);
        }
    }
    return g;
}

std::optional<std::vector<TaskId>> topological_order(const TaskGraph& graph) {
    const std::size_t n = graph.tasks.size();
    std::vector<std::size_t> indegree(n, 0);
    std::vector<std::vector<TaskId>> out(n);
    for (const auto& t : graph.tasks) {
        for (TaskId d : t.deps) {
            if (d >= n || t.id >= n) {
                return std::nullopt;
            }
            out[d].push_back(t.id);
            ++indegree[t.id];
        }
    }
    std::priority_queue<TaskId, std::vector<TaskId>, std::greater<>> ready;
    for (TaskId i = 0; i < n; ++i) {
        if (indegree[i] == 0) {
            ready.push(i);
        }
    }
    std::vector<TaskId> order;
    while (!ready.empty()) {
        TaskId id = ready.top();
        ready.pop();
        order.push_back(id);
        for (TaskId next : out[id]) {
            if (--indegree[next] == 0) {
                ready.push(next);
            }
        }
    }
    if (order.size() != n) {
        return std::nullopt;
    }
    return order;
}

std::string plan_to_json(const TaskGraph& graph) {
    nlohmann::ordered_json tasks = nlohmann::ordered_json::array();
    for (const auto& t : graph.tasks) {
        nlohmann::ordered_json j;
        j["task_id"] = t.id;
        j["instance"] = t.instance_name;
        j["phase"] = to_string(t.phase);
        j["deps"] = t.deps;
        j["barrier"] = t.barrier ? nlohmann::ordered_json(*t.barrier) : nlohmann::ordered_json(nullptr);
        j["gate"] = t.gate ? nlohmann::ordered_json(*t.gate) : nlohmann::ordered_json(nullptr);
        tasks.push_back(std::move(j));
    }
    return tasks.dump(2);
}

double blocking_downtime(const InstanceSpec& inst, double rate, double latency_s,
                         const PredumpPolicy& policy) {
    const auto pd = predump_schedule(inst.mem_delta_bytes, inst.dirty_rate_bytes_per_s, rate,
                                     policy.threshold_bytes, policy.max_iters);
    const double payload = pd.final_dirty_bytes + inst.state_overhead_bytes;
    return phase_duration(PhaseKind::Dump, payload, rate, inst.overhead(PhaseKind::Dump), latency_s) +
           inst.restore_time_s;
}

double compute_reservation(const InstanceSpec& inst, const InterMecLink& link, double tolerance,
                           double rate_tol, const PredumpPolicy& policy) {
    if (!(tolerance > 0.0) || !(rate_tol > 0.0)) {
        throw std::invalid_argument("reservation tolerance and rate_tol must be > 0");
    }
    const double capacity = link.capacity_bytes_per_s;
    const double reference = blocking_downtime(inst, capacity, link.latency_s, policy);
    if (!std::isfinite(reference)) {
        throw ReservationError(
            fmt::format("downtime of '{}' is not finite at full capacity", inst.name));
    }
    const double limit = (1.0 + tolerance) * reference;
    auto feasible = [&](double r) { return blocking_downtime(inst, r, link.latency_s, policy) <= limit; };

    // The stop rule makes downtime jump up where the pre-dump stop index
    // drops, at r_k = d * (m0 / thr)^(1/k). Between jumps it falls with r, so
    // the worst downtime above r is at r itself or just past a jump.
    std::vector<double> jumps;
    const double d = inst.dirty_rate_bytes_per_s;
    const double m0 = inst.mem_delta_bytes;
    if (d > 0.0 && m0 > 0.0 && policy.threshold_bytes > 0.0) {
        for (int k = 1; k < policy.max_iters; ++k) {
            const double rk = d * std::pow(m0 / policy.threshold_bytes, 1.0 / k);
            if (rk < capacity) {
                jumps.push_back(rk);
            }
        }
    }
    auto feasible_above = [&](double r) {
        if (!feasible(r)) {
            return false;
        }
        for (double j : jumps) {
            if (j > r && (!feasible(j) || !feasible(std::min(capacity, j * (1.0 + 1e-12))))) {
                return false;
            }
        }
        return true;
    };

    double lo = 0.0;
    double hi = capacity;
    while (hi - lo > rate_tol) {
        const double mid = 0.5 * (lo + hi);
        if (feasible_above(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return hi;
}

ReservationRegistry::ReservationRegistry(const InterMecLink& link) : cap_(link.reservable_capacity()) {}

bool ReservationRegistry::fits(double rate) const {
    return total_reserved_ + rate <= cap_ * (1.0 + 1e-12);
}

GrantId ReservationRegistry::admit(std::size_t requester, double rate) {
    const GrantId id = next_id_++;
    grants_.emplace(id, Grant{id, requester, rate});
    total_reserved_ += rate;
    return id;
}

std::optional<GrantId> ReservationRegistry::request(std::size_t requester, double rate) {
    if (!(rate > 0.0)) {
        throw std::invalid_argument("reservation rate must be > 0");
    }
    if (queue_.empty() && fits(rate)) {
        return admit(requester, rate);
    }
    queue_.push_back({requester, rate});
    return std::nullopt;
}

std::vector<Grant> ReservationRegistry::release(GrantId grant) {
    auto it = grants_.find(grant);
    if (it == grants_.end()) {
        throw std::logic_error(fmt::format("release of unknown grant {}", grant));
    }
    total_reserved_ -= it->second.rate;
    grants_.erase(it);
    if (grants_.empty()) {
        total_reserved_ = 0.0;
    }
    std::vector<Grant> admitted;
    while (!queue_.empty() && fits(queue_.front().rate)) {
        const Pending p = queue_.front();
        queue_.pop_front();
        const GrantId id = admit(p.requester, p.rate);
        admitted.push_back(grants_.at(id));
    }
    return admitted;
}

std::optional<Grant> ReservationRegistry::grant(GrantId id) const {
    auto it = grants_.find(id);
    if (it == grants_.end()) {
        return std::nullopt;
    }
    return it->second;
}

}  // namespace sfcmig
