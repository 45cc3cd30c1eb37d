#include "helpers.hpp"

#include <sfcmig/engine.hpp>
#include <sfcmig/patterns.hpp>

#include <doctest.h>
#include <json.hpp>

#include <set>

using namespace sfcmig;

namespace {

SfcSpec chain(std::size_t n) {
    SfcSpec s;
    for (std::size_t i = 0; i < n; ++i) {
        s.instances.push_back(testutil::instance("nf" + std::to_string(i), 1e6, 1e5, 1e4, 1e4, 0.1));
    }
    return s;
}

std::size_t cross_edges(const TaskGraph& g) {
    std::size_t count = 0;
    for (const auto& t : g.tasks) {
        if (t.phase == PhaseKind::Reconnect) {
            continue;
        }
        for (TaskId d : t.deps) {
            if (g.tasks[d].instance != t.instance) {
                ++count;
            }
        }
    }
    return count;
}

}  // namespace

TEST_CASE("Asynchronous plan") {
    const auto g = build_plan({BasePattern::Asynchronous, false}, chain(2));
    CHECK(g.tasks.size() == 9);
    CHECK(cross_edges(g) == 0);
    CHECK(g.barriers.empty());
    const auto& reconnect = g.tasks.back();
    CHECK(reconnect.phase == PhaseKind::Reconnect);
    CHECK(reconnect.deps == std::vector<TaskId>{*g.find(0, PhaseKind::Restore), *g.find(1, PhaseKind::Restore)});
    // per-instance chain
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(g.tasks[*g.find(i, PhaseKind::PreDump)].deps == std::vector<TaskId>{*g.find(i, PhaseKind::DiskCopy)});
        CHECK(g.tasks[*g.find(i, PhaseKind::Dump)].deps == std::vector<TaskId>{*g.find(i, PhaseKind::PreDump)});
        CHECK(g.tasks[*g.find(i, PhaseKind::Restore)].deps == std::vector<TaskId>{*g.find(i, PhaseKind::Dump)});
    }
}

TEST_CASE("WaitForMe plan") {
    const auto g = build_plan({BasePattern::WaitForMe, false}, chain(2));
    CHECK(g.tasks.size() == 9);
    REQUIRE(g.barriers.size() == 1);
    const auto& [id, members] = *g.barriers.begin();
    CHECK(members == std::vector<TaskId>{*g.find(0, PhaseKind::PreDump), *g.find(1, PhaseKind::PreDump)});
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(g.tasks[*g.find(i, PhaseKind::Dump)].gate == id);
        CHECK(g.tasks[*g.find(i, PhaseKind::PreDump)].barrier == id);
    }
}

TEST_CASE("RoundRobin plan is a phase-grouped path") {
    const auto g = build_plan({BasePattern::RoundRobin, false}, chain(2));
    REQUIRE(g.tasks.size() == 9);
    const auto order = topological_order(g);
    REQUIRE(order);
    const std::vector<std::pair<std::size_t, PhaseKind>> expected = {
        {0, PhaseKind::DiskCopy}, {1, PhaseKind::DiskCopy}, {0, PhaseKind::PreDump}, {1, PhaseKind::PreDump},
        {0, PhaseKind::Dump},     {1, PhaseKind::Dump},     {0, PhaseKind::Restore}, {1, PhaseKind::Restore}};
    for (std::size_t k = 0; k < expected.size(); ++k) {
        const auto& t = g.tasks[(*order)[k]];
        CHECK(t.instance == expected[k].first);
        CHECK(t.phase == expected[k].second);
        if (k > 0) {
            // each task waits for its predecessor on the path
            const auto& deps = t.deps;
            CHECK(std::find(deps.begin(), deps.end(), (*order)[k - 1]) != deps.end());
        }
    }
}

TEST_CASE("plans have 4n+1 tasks and are acyclic") {
    for (std::size_t n = 1; n <= 6; ++n) {
        for (auto base : {BasePattern::Asynchronous, BasePattern::WaitForMe, BasePattern::RoundRobin}) {
            const auto g = build_plan({base, false}, chain(n));
            CHECK(g.tasks.size() == 4 * n + 1);
            CHECK(topological_order(g).has_value());
        }
    }
}

TEST_CASE("topological_order detects a cycle") {
    auto g = build_plan({BasePattern::Asynchronous, false}, chain(1));
    g.tasks[0].deps.push_back(3);
    CHECK_FALSE(topological_order(g).has_value());
}

TEST_CASE("plan export lists every task") {
    const auto g = build_plan({BasePattern::WaitForMe, false}, chain(2));
    const auto j = nlohmann::json::parse(plan_to_json(g));
    REQUIRE(j.size() == 9);
    CHECK(j[1]["phase"] == "pre_dump");
    CHECK(j[1]["barrier"] == 0);
    CHECK(j[2]["gate"] == 0);
    CHECK(j[0]["barrier"].is_null());
    CHECK(j[8]["instance"] == "sfc");
    CHECK(j[8]["deps"].size() == 2);
}

TEST_CASE("network-aware plans carry a reservation per instance") {
    Scenario s = testutil::two_instance_scenario();
    s.pattern = {BasePattern::RoundRobin, true};
    const auto g = build_plan(s);
    CHECK(g.reservation_requests.size() == 2);
    for (const auto& [name, rate] : g.reservation_requests) {
        CHECK(rate > 0.0);
        CHECK(rate <= s.link.capacity_bytes_per_s);
    }
    s.pattern.network_aware = false;
    CHECK(build_plan(s).reservation_requests.empty());
}

TEST_CASE("compute_reservation: closed-form inversion") {
    auto inst = testutil::instance("x", 0, 0, 0, 1e6, 1.0);
    InterMecLink link{3e9, 0.0, 1.0};
    const double rate_tol = 1000.0;
    const double r = compute_reservation(inst, link, 0.10, rate_tol);
    // 1e6/r + 1 = 1.1 * (1e6/3e9 + 1)
    const double exact = 1e6 / (1.1 * (1e6 / 3e9 + 1.0) - 1.0);
    CHECK(r >= exact);
    CHECK(r - exact <= rate_tol);
    CHECK(r == doctest::Approx(9.97e6).epsilon(0.001));
}

TEST_CASE("compute_reservation: minimal within the bracket") {
    auto inst = testutil::instance("x", 0, 2e6, 1e5, 3e5, 0.4);
    inst.phase_overhead_s[PhaseKind::Dump] = 0.2;
    InterMecLink link{1e8, 0.003, 1.0};
    const PredumpPolicy policy;
    const double tol = 0.10;
    const double rate_tol = 500.0;
    const double r = compute_reservation(inst, link, tol, rate_tol, policy);
    const double limit = (1 + tol) * blocking_downtime(inst, link.capacity_bytes_per_s, link.latency_s, policy);
    CHECK(blocking_downtime(inst, r, link.latency_s, policy) <= limit);
    CHECK(blocking_downtime(inst, r - 2 * rate_tol, link.latency_s, policy) > limit);
}

TEST_CASE("compute_reservation: every rate above the answer stays within tolerance") {
    // small state and a threshold that is crossed several times: downtime
    // jumps up where the pre-dump stop index drops
    auto inst = testutil::instance("saw", 0, 5e6, 2e5, 1e3, 0.0);
    InterMecLink link{5e7, 0.0, 1.0};
    const PredumpPolicy policy;
    const double tol = 0.10;
    const double rate_tol = 100.0;
    const double r = compute_reservation(inst, link, tol, rate_tol, policy);
    const double limit = (1 + tol) * blocking_downtime(inst, link.capacity_bytes_per_s, 0.0, policy);
    // oracle: a dense geometric ladder from r to capacity
    bool all_within = true;
    constexpr int kSteps = 200000;
    for (int k = 0; k <= kSteps; ++k) {
        const double x = r * std::pow(link.capacity_bytes_per_s / r, static_cast<double>(k) / kSteps);
        all_within = all_within && blocking_downtime(inst, x, 0.0, policy) <= limit * (1 + 1e-12);
    }
    CHECK(all_within);
    // and somewhere just below r (or above it) the bound is broken
    bool broken_below = false;
    for (int k = 0; k <= kSteps && !broken_below; ++k) {
        const double x = (r - 2 * rate_tol) * std::pow(link.capacity_bytes_per_s / (r - 2 * rate_tol),
                                                        static_cast<double>(k) / kSteps);
        broken_below = blocking_downtime(inst, x, 0.0, policy) > limit;
    }
    CHECK(broken_below);
}

TEST_CASE("compute_reservation: vacuous tolerance") {
    auto inst = testutil::instance("x", 0, 0, 0, 1e6, 1.0);
    InterMecLink link{3e9, 0.0, 1.0};
    const double r = compute_reservation(inst, link, 1e12, 1000.0);
    CHECK(r <= 1000.0);
    CHECK(r > 0.0);
}

TEST_CASE("compute_reservation: bad arguments") {
    auto inst = testutil::instance("x", 0, 0, 0, 1e6, 1.0);
    InterMecLink link{3e9, 0.0, 1.0};
    CHECK_THROWS_AS(compute_reservation(inst, link, 0.0, 1000.0), std::invalid_argument);
    CHECK_THROWS_AS(compute_reservation(inst, link, 0.1, 0.0), std::invalid_argument);
}

TEST_CASE("reservation registry: grant, queue, release") {
    InterMecLink link{100, 0.0, 0.8};
    ReservationRegistry reg(link);
    CHECK(reg.cap() == doctest::Approx(80));
    const auto g50 = reg.request(0, 50);
    const auto g30 = reg.request(1, 30);
    REQUIRE(g50);
    REQUIRE(g30);
    CHECK(reg.total_reserved() == doctest::Approx(80));

    CHECK_FALSE(reg.request(2, 10));
    CHECK(reg.queued() == 1);

    const auto admitted = reg.release(*g50);
    REQUIRE(admitted.size() == 1);
    CHECK(admitted[0].requester == 2);
    CHECK(admitted[0].rate == 10);
    CHECK(reg.total_reserved() == doctest::Approx(40));
    CHECK(reg.queued() == 0);

    reg.release(*g30);
    reg.release(admitted[0].id);
    CHECK(reg.total_reserved() == 0.0);
    CHECK(reg.active_grants() == 0);
}

TEST_CASE("reservation registry: FIFO admission and bad release") {
    InterMecLink link{100, 0.0, 1.0};
    ReservationRegistry reg(link);
    const auto big = reg.request(0, 90);
    CHECK_FALSE(reg.request(1, 50));
    // fits on its own but must not overtake the queued request
    CHECK_FALSE(reg.request(2, 5));
    const auto admitted = reg.release(*big);
    REQUIRE(admitted.size() == 2);
    CHECK(admitted[0].requester == 1);
    CHECK(admitted[1].requester == 2);
    CHECK_THROWS_AS(reg.release(12345), std::logic_error);
    CHECK_THROWS_AS(reg.request(3, 0.0), std::invalid_argument);
}

TEST_CASE("network-aware simulation queues when the cap is short") {
    Scenario s = testutil::two_instance_scenario();
    s.pattern = {BasePattern::Asynchronous, true};
    const auto plan = build_plan(s);
    // room for only the larger request at a time
    double largest = 0.0;
    for (const auto& [name, rate] : plan.reservation_requests) {
        largest = std::max(largest, rate);
    }
    s.link.reservable_fraction = largest * 1.01 / s.link.capacity_bytes_per_s;
    const auto log = simulate(s, plan, 0);
    int granted = 0, released = 0, queued = 0;
    for (const auto& e : log.events) {
        granted += e.kind == EventKind::ReservationGranted;
        released += e.kind == EventKind::ReservationReleased;
        queued += e.kind == EventKind::ReservationQueued;
    }
    CHECK(queued == 1);
    CHECK(granted == 2);
    CHECK(released == 2);
}
