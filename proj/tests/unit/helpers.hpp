#pragma once

#include <sfcmig/model.hpp>

#include <cmath>
#include <string>

namespace testutil {

inline sfcmig::InstanceSpec instance(std::string name, double disk, double mem, double dirty, double state,
                                     double restore) {
    sfcmig::InstanceSpec s;
    s.name = std::move(name);
    s.disk_delta_bytes = disk;
    s.mem_delta_bytes = mem;
    s.dirty_rate_bytes_per_s = dirty;
    s.state_overhead_bytes = state;
    s.restore_time_s = restore;
    return s;
}

inline sfcmig::Scenario two_instance_scenario() {
    sfcmig::Scenario s;
    s.link.capacity_bytes_per_s = 2e6;
    s.link.latency_s = 0.002;
    s.sfc.instances = {instance("a", 4e6, 1e6, 1e5, 2e5, 0.5), instance("b", 8e6, 2e6, 2e5, 4e5, 0.8)};
    for (auto& inst : s.sfc.instances) {
        inst.phase_overhead_s = {{sfcmig::PhaseKind::DiskCopy, 1.0},
                                 {sfcmig::PhaseKind::PreDump, 0.3},
                                 {sfcmig::PhaseKind::Dump, 0.2}};
    }
    s.reconnect_delay_s = 0.1;
    s.repetitions = 4;
    s.base_seed = 7;
    return s;
}

inline bool rel_close(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace testutil
