#include "helpers.hpp"

#include <sfcmig/engine.hpp>
#include <sfcmig/metrics.hpp>
#include <sfcmig/patterns.hpp>

#include <doctest.h>

#include <sstream>

using namespace sfcmig;

namespace {

LinkState link_with(double capacity, std::vector<std::optional<double>> reserved, int background = 0,
                    std::optional<double> limit = std::nullopt) {
    LinkState l;
    l.capacity = capacity;
    l.background_flow_count = background;
    l.migration_limit = limit;
    for (std::size_t i = 0; i < reserved.size(); ++i) {
        Transfer t;
        t.owner = i;
        t.remaining_bytes = 1.0;
        t.reserved_rate = reserved[i];
        if (reserved[i]) {
            l.total_reserved_bytes_per_s += *reserved[i];
        }
        l.transfers.push_back(t);
    }
    return l;
}

// Oracle: the pre-dump loop written out by hand.
struct Series {
    std::vector<double> sets;
    double final_dirty = 0.0;
};

Series hand_series(double m0, double d, double r, double thr, int max_iters) {
    Series s;
    double cur = m0;
    for (int i = 0;; ++i) {
        s.sets.push_back(cur);
        const double next = cur * d / r;
        if (next <= thr || i + 1 == max_iters) {
            s.final_dirty = next;
            return s;
        }
        cur = next;
    }
}

Scenario single(const InstanceSpec& inst, double capacity) {
    Scenario s;
    s.link.capacity_bytes_per_s = capacity;
    s.sfc.instances = {inst};
    s.repetitions = 1;
    return s;
}

}  // namespace

TEST_CASE("allocate_shares: equal split") {
    const auto rates = allocate_shares(link_with(10, {std::nullopt, std::nullopt}));
    CHECK(rates == std::vector<double>{5, 5});
}

TEST_CASE("allocate_shares: reservation carve-out") {
    const auto rates = allocate_shares(link_with(10, {2.0, std::nullopt, std::nullopt}));
    CHECK(rates == std::vector<double>{2, 4, 4});
}

TEST_CASE("allocate_shares: a lone transfer takes the link") {
    CHECK(allocate_shares(link_with(10, {std::nullopt})) == std::vector<double>{10});
    CHECK(allocate_shares(link_with(10, {})).empty());
}

TEST_CASE("allocate_shares: background flows take their share") {
    const auto l = link_with(12, {std::nullopt}, 2);
    CHECK(allocate_shares(l) == std::vector<double>{4});
    CHECK(background_share(l) == doctest::Approx(4));
}

TEST_CASE("allocate_shares: migration limit caps the unreserved aggregate") {
    const auto l = link_with(3e9, {std::nullopt, std::nullopt}, 0, 2e6);
    CHECK(allocate_shares(l) == std::vector<double>{1e6, 1e6});
    // the limit never hands out more than the pool
    const auto tight = link_with(10, {std::nullopt}, 0, 50);
    CHECK(allocate_shares(tight) == std::vector<double>{10});
}

TEST_CASE("predump_schedule: hand-iterated series") {
    const auto r = predump_schedule(1e8, 1e6, 1e7, 5e5, 5);
    CHECK(r.iterations == std::vector<double>{1e8, 1e7, 1e6});
    CHECK(r.final_dirty_bytes == doctest::Approx(1e5));
    CHECK(r.converged);
    CHECK(r.stop_index() == 3);
}

TEST_CASE("predump_schedule: clean memory") {
    const auto r = predump_schedule(4e6, 0.0, 1e6, 65536, 5);
    CHECK(r.iterations == std::vector<double>{4e6});
    CHECK(r.final_dirty_bytes == 0.0);
    CHECK(r.converged);
}

TEST_CASE("predump_schedule: divergent ratio") {
    const auto r = predump_schedule(1e6, 2e6, 1e6, 65536, 5);
    CHECK(r.iterations.size() == 5);
    CHECK_FALSE(r.converged);
    CHECK(r.final_dirty_bytes >= 65536);
    CHECK(r.final_dirty_bytes == doctest::Approx(32e6));
}

TEST_CASE("predump_schedule: closed form agrees with the loop") {
    for (double ratio : {0.01, 0.3, 0.9, 1.0, 1.7}) {
        const double m0 = 3.7e6;
        const double rate = 2e6;
        const auto r = predump_schedule(m0, ratio * rate, rate, 1e3, 6);
        const auto oracle = hand_series(m0, ratio * rate, rate, 1e3, 6);
        REQUIRE(r.iterations.size() == oracle.sets.size());
        for (std::size_t i = 0; i < r.iterations.size(); ++i) {
            CHECK(testutil::rel_close(r.iterations[i], oracle.sets[i], 1e-12));
            CHECK(testutil::rel_close(predump_set_bytes(m0, ratio * rate, rate, static_cast<int>(i)),
                                      oracle.sets[i], 1e-9));
        }
        CHECK(testutil::rel_close(r.final_dirty_bytes, oracle.final_dirty, 1e-12));
    }
}

TEST_CASE("predump_schedule: invalid rate") {
    CHECK_THROWS_AS(predump_schedule(1e6, 1e5, 0.0, 65536, 5), InvalidRateError);
    CHECK_THROWS_AS(predump_schedule(1e6, 1e5, -1.0, 65536, 5), InvalidRateError);
}

TEST_CASE("phase_duration") {
    CHECK(phase_duration(PhaseKind::DiskCopy, 6e5, 3e5, 0, 0) == doctest::Approx(2.0));
    CHECK(phase_duration(PhaseKind::Dump, 0, 3e5, 0.4, 0) == doctest::Approx(0.4));
    CHECK(phase_duration(PhaseKind::PreDump, 1e6, 1e6, 0.5, 0.25) == doctest::Approx(1.75));
    CHECK(phase_duration(PhaseKind::Restore, 1e9, 1.0, 1.0, 0.3) == doctest::Approx(1.0));
    CHECK(phase_duration(PhaseKind::Restore, 0, 0.0, 1.0, 0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(phase_duration(PhaseKind::DiskCopy, 1, 0.0, 0, 0), InvalidRateError);
}

TEST_CASE("accumulate_dirty") {
    CHECK(accumulate_dirty(1e6, 2, 1e8) == doctest::Approx(2e6));
    CHECK(accumulate_dirty(1e6, 0, 1e8) == 0.0);
    CHECK(accumulate_dirty(1e6, 500, 1e8) == doctest::Approx(1e8));
}

TEST_CASE("simulate: single instance matches the phase sum") {
    auto inst = testutil::instance("solo", 7e6, 3e6, 4e5, 2.5e5, 0.7);
    const double r = 2e6;
    const auto s = single(inst, r);
    const auto log = simulate(s, build_plan(s), 0);
    const auto m = extract(log);

    const auto series = hand_series(3e6, 4e5, r, s.predump_stop_threshold_bytes, s.predump_max_iters);
    double predump = 0.0;
    for (double b : series.sets) {
        predump += b / r;
    }
    const double dump = (series.final_dirty + 2.5e5) / r;
    const double expected_total = 7e6 / r + predump + dump + 0.7;
    CHECK(testutil::rel_close(m.instances[0].total_time_s, expected_total, 1e-9));
    CHECK(testutil::rel_close(m.instances[0].downtime_s, dump + 0.7, 1e-9));
}

TEST_CASE("simulate: overheads and latency are paid once per transfer phase") {
    auto inst = testutil::instance("solo", 1e6, 1e6, 1e5, 1e5, 0.5);
    inst.phase_overhead_s = {{PhaseKind::DiskCopy, 2.0}, {PhaseKind::PreDump, 0.5}, {PhaseKind::Dump, 0.3}};
    auto s = single(inst, 1e6);
    s.link.latency_s = 0.01;
    s.reconnect_delay_s = 0.2;
    const auto m = extract(simulate(s, build_plan(s), 0));
    const auto series = hand_series(1e6, 1e5, 1e6, 65536, 5);
    double predump = 0.0;
    for (double b : series.sets) {
        predump += b / 1e6;
    }
    const double dump = 0.3 + 0.01 + (series.final_dirty + 1e5) / 1e6;
    const double total = (2.0 + 0.01 + 1.0) + (0.5 + 0.01 + predump) + dump + 0.5;
    CHECK(testutil::rel_close(m.instances[0].total_time_s, total, 1e-9));
    CHECK(testutil::rel_close(m.instances[0].downtime_s, dump + 0.5, 1e-9));
    CHECK(testutil::rel_close(m.service_downtime_s, dump + 0.5 + 0.2, 1e-9));
    CHECK(testutil::rel_close(m.sfc_total_time_s, total + 0.2, 1e-9));
}

TEST_CASE("simulate: non-convergent pre-dump warns and still completes") {
    auto inst = testutil::instance("hot", 1e5, 1e6, 3e6, 0, 0.1);
    const auto s = single(inst, 1e6);
    const auto log = simulate(s, build_plan(s), 0);
    const bool warned = std::any_of(log.events.begin(), log.events.end(),
                                    [](const Event& e) { return e.kind == EventKind::Warning; });
    CHECK(warned);
    const auto m = extract(log);
    // dump ships the oversized final set: 1e6 * 3^5 bytes
    CHECK(m.instances[0].downtime_s == doctest::Approx(243e6 / 1e6 + 0.1));
}

TEST_CASE("simulate: two concurrent transfers share the link") {
    // equal instances under Asynchronous finish together at twice the solo time
    Scenario s;
    s.link.capacity_bytes_per_s = 1e6;
    s.sfc.instances = {testutil::instance("a", 2e6, 0, 0, 0, 0), testutil::instance("b", 2e6, 0, 0, 0, 0)};
    s.repetitions = 1;
    const auto m = extract(simulate(s, build_plan(s), 0));
    CHECK(m.instances[0].total_time_s == doctest::Approx(4.0));
    CHECK(m.instances[1].total_time_s == doctest::Approx(4.0));
}

TEST_CASE("simulate: shares are re-derived when membership changes") {
    // b finishes its 1e6 disk at t=2 (shared), then a runs alone: 3e6 total bytes -> 2 + 2 = 4 s
    Scenario s;
    s.link.capacity_bytes_per_s = 1e6;
    s.sfc.instances = {testutil::instance("a", 3e6, 0, 0, 0, 0), testutil::instance("b", 1e6, 0, 0, 0, 0)};
    s.repetitions = 1;
    const auto m = extract(simulate(s, build_plan(s), 0));
    CHECK(m.instances[0].total_time_s == doctest::Approx(4.0));
    CHECK(m.instances[1].total_time_s == doctest::Approx(2.0));
}

TEST_CASE("simulate: shipped bytes equal requested bytes") {
    const auto s = testutil::two_instance_scenario();
    const auto log = simulate(s, build_plan(s), 1);
    int transfers = 0;
    for (const auto& e : log.events) {
        if (e.kind == EventKind::TransferComplete) {
            ++transfers;
            CHECK(testutil::rel_close(e.value, e.aux, 1e-6));
        }
    }
    CHECK(transfers > 0);
}

TEST_CASE("simulate: RoundRobin never overlaps transfers") {
    auto s = testutil::two_instance_scenario();
    s.pattern.base = BasePattern::RoundRobin;
    const auto log = simulate(s, build_plan(s), 0);
    for (const auto& e : log.events) {
        if (e.kind == EventKind::AllocationChange) {
            CHECK(e.count <= 1);
        }
    }
}

TEST_CASE("simulate: WaitForMe freezes only after every pre-dump") {
    auto s = testutil::two_instance_scenario();
    s.pattern.base = BasePattern::WaitForMe;
    const auto log = simulate(s, build_plan(s), 0);
    double last_predump = 0.0;
    double first_freeze = 1e300;
    for (const auto& e : log.events) {
        if (e.kind == EventKind::TaskEnd && e.phase == PhaseKind::PreDump) {
            last_predump = std::max(last_predump, e.time_s);
        }
        if (e.kind == EventKind::FreezeStart) {
            first_freeze = std::min(first_freeze, e.time_s);
        }
    }
    CHECK(first_freeze >= last_predump);
}

TEST_CASE("simulate: waiting before the dump accrues dirty memory") {
    auto s = testutil::two_instance_scenario();
    s.noise_sigma = 0.0;
    const auto async = extract(simulate(s, build_plan(s), 0));
    s.pattern.base = BasePattern::WaitForMe;
    const auto wfm = extract(simulate(s, build_plan(s), 0));
    // "a" is smaller and waits for "b"
    CHECK(wfm.find("a")->downtime_s > async.find("a")->downtime_s);
}

TEST_CASE("simulate: event log is deterministic and ordered") {
    auto s = testutil::two_instance_scenario();
    s.noise_sigma = 0.05;
    const auto plan = build_plan(s);
    const auto a = simulate(s, plan, 3);
    const auto b = simulate(s, plan, 3);
    CHECK(a == b);
    std::ostringstream ca, cb;
    write_event_csv(ca, a);
    write_event_csv(cb, b);
    CHECK(ca.str() == cb.str());
    CHECK(ca.str().rfind("time_s,kind,instance,phase,detail\n", 0) == 0);
    for (std::size_t i = 1; i < a.events.size(); ++i) {
        const auto& p = a.events[i - 1];
        const auto& q = a.events[i];
        REQUIRE(p.time_s <= q.time_s);
        if (p.time_s == q.time_s) {
            REQUIRE(kind_rank(p.kind) <= kind_rank(q.kind));
        }
    }
    CHECK(simulate(s, plan, 4) != a);
}

TEST_CASE("simulate: invalid scenario is rejected") {
    auto s = testutil::two_instance_scenario();
    s.repetitions = 0;
    CHECK_THROWS_AS(simulate(s, build_plan(s), 0), SimulationError);
}

TEST_CASE("cpu_series: empty log") {
    const EventLog log;
    CHECK(cpu_series(log, NodeRole::Source) == std::vector<CpuPoint>{{0, 0}});
}

TEST_CASE("cpu_series: single rectangle") {
    EventLog log;
    log.activities.push_back({0, PhaseKind::DiskCopy, NodeRole::Source, 1.0, 5.0, 25.0});
    const auto series = cpu_series(log, NodeRole::Source);
    CHECK(series == std::vector<CpuPoint>{{0, 0}, {1, 25}, {5, 0}});
    CHECK(cpu_integral(series) == doctest::Approx(100.0));
    CHECK(cpu_series(log, NodeRole::Destination) == std::vector<CpuPoint>{{0, 0}});
}

TEST_CASE("cpu_series: clamped plateau") {
    EventLog log;
    log.activities.push_back({0, PhaseKind::PreDump, NodeRole::Source, 0.0, 2.0, 60.0});
    log.activities.push_back({1, PhaseKind::PreDump, NodeRole::Source, 0.0, 2.0, 60.0});
    CHECK(cpu_series(log, NodeRole::Source) == std::vector<CpuPoint>{{0, 100}, {2, 0}});
}

TEST_CASE("cpu_series: integral equals task cost times duration without clamping") {
    const auto s = testutil::two_instance_scenario();
    const auto log = simulate(s, build_plan(s), 0);
    double expected = 0.0;
    for (const auto& a : log.activities) {
        if (a.node == NodeRole::Source) {
            expected += a.cost_pct * (a.end_s - a.start_s);
        }
    }
    const auto series = cpu_series(log, NodeRole::Source);
    for (const auto& p : series) {
        CHECK(p.load_pct <= 100.0);
    }
    CHECK(cpu_integral(series) == doctest::Approx(expected).epsilon(1e-9));
    // disk copy, pre-dump and dump load the source; restore the destination
    for (const auto& a : log.activities) {
        CHECK((a.node == NodeRole::Source) == (a.phase != PhaseKind::Restore && a.phase != PhaseKind::Reconnect));
    }
}

TEST_CASE("cpu costs scale with node capacity") {
    auto s = testutil::two_instance_scenario();
    s.pattern.base = BasePattern::RoundRobin;
    const auto base = extract(simulate(s, build_plan(s), 0));
    s.source.cpu_capacity_pct = 50.0;
    const auto half = extract(simulate(s, build_plan(s), 0));
    CHECK(half.peak_cpu_source_pct == doctest::Approx(2 * base.peak_cpu_source_pct));
}
