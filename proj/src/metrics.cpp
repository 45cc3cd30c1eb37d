#include <sfcmig/metrics.hpp>

#include <sfcmig/patterns.hpp>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace sfcmig {

const InstanceMetrics* RunMetrics::find(std::string_view name) const {
    for (const auto& m : instances) {
        if (m.name == name) {
            return &m;
        }
    }
    return nullptr;
}

RunMetrics extract(const EventLog& log) {
    constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();
    const std::size_t n = log.instance_names.size();
    std::vector<double> first_start(n, kUnset), freeze(n, kUnset), restored(n, kUnset);
    double reconnect = kUnset;

    for (const auto& e : log.events) {
        if (e.kind == EventKind::ReconnectComplete) {
            reconnect = e.time_s;
            continue;
        }
        if (e.instance >= n) {
            continue;
        }
        const std::size_t i = e.instance;
        switch (e.kind) {
        case EventKind::TaskStart:
            if (std::isnan(first_start[i])) {
                first_start[i] = e.time_s;
            }
            break;
        case EventKind::FreezeStart:
            freeze[i] = e.time_s;
            break;
        case EventKind::RestoreComplete:
            restored[i] = e.time_s;
            break;
        default:
            break;
        }
    }

    if (n == 0) {
        throw ExtractionError("event log names no instances");
    }
    RunMetrics out;
    double earliest_freeze = std::numeric_limits<double>::infinity();
    double earliest_start = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& name = log.instance_names[i];
        if (std::isnan(first_start[i])) {
            throw ExtractionError(fmt::format("missing TaskStart for instance '{}'", name));
        }
        if (std::isnan(freeze[i])) {
            throw ExtractionError(fmt::format("missing FreezeStart for instance '{}'", name));
        }
        if (std::isnan(restored[i])) {
            throw ExtractionError(fmt::format("missing RestoreComplete for instance '{}'", name));
        }
        out.instances.push_back({name, restored[i] - freeze[i], restored[i] - first_start[i]});
        earliest_freeze = std::min(earliest_freeze, freeze[i]);
        earliest_start = std::min(earliest_start, first_start[i]);
    }
    if (std::isnan(reconnect)) {
        throw ExtractionError("missing ReconnectComplete");
    }
    out.service_downtime_s = reconnect - earliest_freeze;
    out.sfc_total_time_s = reconnect - earliest_start;

    auto peak = [](const std::vector<CpuPoint>& s) {
        double p = 0.0;
        for (const auto& c : s) {
            p = std::max(p, c.load_pct);
        }
        return p;
    };
    const auto src = cpu_series(log, NodeRole::Source);
    const auto dst = cpu_series(log, NodeRole::Destination);
    out.peak_cpu_source_pct = peak(src);
    out.peak_cpu_destination_pct = peak(dst);
    out.cpu_integral_source = cpu_integral(src);
    out.cpu_integral_destination = cpu_integral(dst);
    return out;
}

double student_t_quantile_975(std::size_t dof) {
    if (dof == 0) {
        throw InsufficientSamplesError("Student-t needs at least one degree of freedom");
    }
    boost::math::students_t dist(static_cast<double>(dof));
    return boost::math::quantile(dist, 0.975);
}

SummaryStats summarize(std::span<const double> samples) {
    if (samples.size() < 2) {
        throw InsufficientSamplesError(
            fmt::format("summary statistics need at least 2 samples, got {}", samples.size()));
    }
    // sorted so the result does not depend on input order
    std::vector<double> xs(samples.begin(), samples.end());
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - mean) * (x - mean);
    }
    SummaryStats s;
    s.n = xs.size();
    s.mean = mean;
    s.std = std::sqrt(ss / (n - 1.0));
    s.ci95 = student_t_quantile_975(xs.size() - 1) * s.std / std::sqrt(n);
    if (s.std == 0.0) {
        s.cv = 0.0;
    } else if (mean == 0.0) {
        s.cv = std::numeric_limits<double>::infinity();
    } else {
        s.cv = s.std / std::abs(mean);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Calibration

std::string_view to_string(Metric metric) {
    return metric == Metric::Downtime ? "downtime_s" : "total_time_s";
}

std::optional<Metric> metric_from_string(std::string_view text) {
    if (text == "downtime_s" || text == "downtime") {
        return Metric::Downtime;
    }
    if (text == "total_time_s" || text == "total_time") {
        return Metric::TotalTime;
    }
    return std::nullopt;
}

std::string_view to_string(FitParam param) {
    switch (param) {
    case FitParam::DiskDelta: return "disk_delta_bytes";
    case FitParam::MemDelta: return "mem_delta_bytes";
    case FitParam::StateOverhead: return "state_overhead_bytes";
    case FitParam::RestoreTime: return "restore_time_s";
    case FitParam::DiskCopyOverhead: return "phase_overhead_s.disk_copy";
    case FitParam::PreDumpOverhead: return "phase_overhead_s.pre_dump";
    case FitParam::DumpOverhead: return "phase_overhead_s.dump";
    }
    return "unknown";
}

std::optional<FitParam> fit_param_from_string(std::string_view text) {
    for (auto p : {FitParam::DiskDelta, FitParam::MemDelta, FitParam::StateOverhead,
                   FitParam::RestoreTime, FitParam::DiskCopyOverhead, FitParam::PreDumpOverhead,
                   FitParam::DumpOverhead}) {
        if (to_string(p) == text) {
            return p;
        }
    }
    return std::nullopt;
}

double get_param(const InstanceSpec& inst, FitParam param) {
    switch (param) {
    case FitParam::DiskDelta: return inst.disk_delta_bytes;
    case FitParam::MemDelta: return inst.mem_delta_bytes;
    case FitParam::StateOverhead: return inst.state_overhead_bytes;
    case FitParam::RestoreTime: return inst.restore_time_s;
    case FitParam::DiskCopyOverhead: return inst.overhead(PhaseKind::DiskCopy);
    case FitParam::PreDumpOverhead: return inst.overhead(PhaseKind::PreDump);
    case FitParam::DumpOverhead: return inst.overhead(PhaseKind::Dump);
    }
    return 0.0;
}

void set_param(InstanceSpec& inst, FitParam param, double value) {
    switch (param) {
    case FitParam::DiskDelta: inst.disk_delta_bytes = value; break;
    case FitParam::MemDelta: inst.mem_delta_bytes = value; break;
    case FitParam::StateOverhead: inst.state_overhead_bytes = value; break;
    case FitParam::RestoreTime: inst.restore_time_s = value; break;
    case FitParam::DiskCopyOverhead: inst.phase_overhead_s[PhaseKind::DiskCopy] = value; break;
    case FitParam::PreDumpOverhead: inst.phase_overhead_s[PhaseKind::PreDump] = value; break;
    case FitParam::DumpOverhead: inst.phase_overhead_s[PhaseKind::Dump] = value; break;
    }
}

Scenario at_bandwidth(const Scenario& scenario, double bandwidth_bytes_per_s) {
    Scenario s = scenario;
    s.noise_sigma = 0.0;
    s.repetitions = 1;
    if (bandwidth_bytes_per_s >= s.link.capacity_bytes_per_s) {
        s.migration_bandwidth_limit_bytes_per_s.reset();
    } else {
        s.migration_bandwidth_limit_bytes_per_s = bandwidth_bytes_per_s;
    }
    return s;
}

std::vector<std::string> missing_cells(const CalibrationTarget& targets, const Scenario& base) {
    std::set<double> bandwidths;
    for (const auto& c : targets.cells) {
        bandwidths.insert(c.bandwidth_bytes_per_s);
    }
    std::vector<std::string> missing;
    for (const auto& inst : base.sfc.instances) {
        for (double bw : bandwidths) {
            for (Metric m : {Metric::Downtime, Metric::TotalTime}) {
                bool found = std::any_of(targets.cells.begin(), targets.cells.end(), [&](const auto& c) {
                    return c.instance == inst.name && c.bandwidth_bytes_per_s == bw && c.metric == m;
                });
                if (!found) {
                    missing.push_back(fmt::format("({}, {}, {})", inst.name, bw, to_string(m)));
                }
            }
        }
    }
    return missing;
}

std::vector<CellResidual> evaluate_cells(const Scenario& scenario, const CalibrationTarget& targets) {
    Scenario quiet = scenario;
    quiet.noise_sigma = 0.0;
    const TaskGraph plan = build_plan(quiet);
    std::map<double, RunMetrics> by_bandwidth;
    std::vector<CellResidual> out;
    out.reserve(targets.cells.size());
    for (const auto& cell : targets.cells) {
        auto it = by_bandwidth.find(cell.bandwidth_bytes_per_s);
        if (it == by_bandwidth.end()) {
            const Scenario s = at_bandwidth(quiet, cell.bandwidth_bytes_per_s);
            it = by_bandwidth.emplace(cell.bandwidth_bytes_per_s, extract(simulate(s, plan, 0, {.details = false}))).first;
        }
        const InstanceMetrics* m = it->second.find(cell.instance);
        if (!m) {
            throw CalibrationInputError(fmt::format("target names unknown instance '{}'", cell.instance));
        }
        const double simulated = cell.metric == Metric::Downtime ? m->downtime_s : m->total_time_s;
        out.push_back({cell, simulated, (simulated - cell.value) / cell.value});
    }
    return out;
}

namespace {

struct Coordinate {
    std::size_t instance;
    FitParam param;
    ParamRange range;
    bool log_scale;

    double value(double u) const {
        if (log_scale) {
            return range.lo * std::pow(range.hi / range.lo, u);
        }
        return range.lo + (range.hi - range.lo) * u;
    }

    double unit(double v) const {
        v = std::clamp(v, range.lo, range.hi);
        if (range.hi == range.lo) {
            return 0.0;
        }
        if (log_scale) {
            return std::log(v / range.lo) / std::log(range.hi / range.lo);
        }
        return (v - range.lo) / (range.hi - range.lo);
    }
};

class Fitter {
  public:
    Fitter(const CalibrationTarget& targets, const CalibrationSetup& setup)
        : targets_(targets), setup_(setup), scenario_(setup.base) {
        scenario_.noise_sigma = 0.0;
        for (std::size_t i = 0; i < scenario_.sfc.size(); ++i) {
            for (const auto& [param, range] : setup.bounds) {
                const bool log_scale = range.lo > 0.0 && range.hi / range.lo > 10.0;
                coords_.push_back({i, param, range, log_scale});
            }
        }
        u_.resize(coords_.size());
        for (std::size_t k = 0; k < coords_.size(); ++k) {
            u_[k] = coords_[k].unit(get_param(scenario_.sfc.instances[coords_[k].instance], coords_[k].param));
        }
        best_ = objective(u_);
    }

    // Rounds of (coarse grid sweeps, pattern search, profiled grid sweeps)
    // repeat until a round brings no improvement.
    void run() {
        const int g = std::max(2, setup_.grid_points);
        const double cell = 1.0 / (g - 1);
        while (budget_left()) {
            const double start = best_;
            for (int sweep = 0; sweep < setup_.grid_sweeps && budget_left(); ++sweep) {
                for (std::size_t k = 0; k < coords_.size() && budget_left(); ++k) {
                    for (int j = 0; j < g; ++j) {
                        Point trial{u_, 0.0};
                        trial.u[k] = j * cell;
                        accept(evaluate(std::move(trial)));
                    }
                }
            }
            Point here{u_, best_};
            polish(here, std::nullopt, 0.5 * cell, 1e-9, true);
            accept(std::move(here));
            profile_sweep(cell);
            if (!(best_ < start * (1.0 - 1e-9))) {
                break;
            }
        }
    }

    Scenario fitted() const { return apply(u_); }
    double best() const { return best_; }
    std::size_t evaluations() const { return evaluations_; }

  private:
    struct Point {
        std::vector<double> u;
        double f;
    };

    bool budget_left() const { return evaluations_ < setup_.max_evaluations; }

    Point evaluate(Point p) {
        for (auto& x : p.u) {
            x = std::clamp(x, 0.0, 1.0);
        }
        p.f = p.u == u_ ? best_ : objective(p.u);
        return p;
    }

    bool accept(Point p) {
        if (p.f < best_) {
            best_ = p.f;
            u_ = std::move(p.u);
            return true;
        }
        return false;
    }

    // Pattern search from `p` with step halving. Pair moves follow valleys no
    // single axis can; `frozen` is left untouched.
    void polish(Point& p, std::optional<std::size_t> frozen, double step, double min_step, bool pairs) {
        const std::size_t n = p.u.size();
        auto try_trial = [&](std::vector<double> u) {
            for (auto& x : u) {
                x = std::clamp(x, 0.0, 1.0);
            }
            if (u == p.u) {
                return false;
            }
            const double f = objective(u);
            if (f < p.f) {
                p = {std::move(u), f};
                return true;
            }
            return false;
        };
        while (step > min_step && budget_left()) {
            bool improved = false;
            for (std::size_t k = 0; k < n && budget_left(); ++k) {
                if (k == frozen) {
                    continue;
                }
                for (double dir : {step, -step}) {
                    auto u = p.u;
                    u[k] += dir;
                    improved |= try_trial(std::move(u));
                }
            }
            if (!improved && pairs) {
                for (std::size_t k = 0; k < n && budget_left(); ++k) {
                    for (std::size_t l = k + 1; l < n && budget_left(); ++l) {
                        if (k == frozen || l == frozen) {
                            continue;
                        }
                        for (double sk : {step, -step}) {
                            for (double sl : {step, -step}) {
                                auto u = p.u;
                                u[k] += sk;
                                u[l] += sl;
                                improved |= try_trial(std::move(u));
                            }
                        }
                    }
                }
            }
            if (!improved) {
                step *= 0.5;
            }
        }
    }

    // Each grid value of each coordinate is judged after the other
    // coordinates had a short chance to adapt to it. This crosses the
    // discontinuities of the pre-dump stop rule, where a plain grid move
    // looks worse than it is.
    void profile_sweep(double cell) {
        const int g = std::max(2, setup_.grid_points);
        for (std::size_t k = 0; k < coords_.size() && budget_left(); ++k) {
            for (int j = 0; j < g && budget_left(); ++j) {
                Point trial{u_, 0.0};
                trial.u[k] = j * cell;
                if (trial.u == u_) {
                    continue;
                }
                trial = evaluate(std::move(trial));
                polish(trial, k, 0.5 * cell, cell / 64.0, false);
                accept(std::move(trial));
            }
        }
    }

    Scenario apply(const std::vector<double>& u) const {
        Scenario s = scenario_;
        for (std::size_t k = 0; k < coords_.size(); ++k) {
            set_param(s.sfc.instances[coords_[k].instance], coords_[k].param, coords_[k].value(u[k]));
        }
        return s;
    }

    double objective(const std::vector<double>& u) {
        ++evaluations_;
        try {
            double total = 0.0;
            for (const auto& r : evaluate_cells(apply(u), targets_)) {
                total += r.relative_error * r.relative_error;
            }
            return std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
        } catch (const SimulationError&) {
            return std::numeric_limits<double>::infinity();
        }
    }

    const CalibrationTarget& targets_;
    const CalibrationSetup& setup_;
    Scenario scenario_;
    std::vector<Coordinate> coords_;
    std::vector<double> u_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t evaluations_ = 0;
};

}  // namespace

CalibrationResult calibrate(const CalibrationTarget& targets, const CalibrationSetup& setup) {
    if (auto violations = validate_scenario(setup.base); !violations.empty()) {
        throw CalibrationInputError("base scenario is invalid: " + violations.front().to_string());
    }
    for (const auto& c : targets.cells) {
        if (!setup.base.find_instance(c.instance)) {
            throw CalibrationInputError(fmt::format("target names unknown instance '{}'", c.instance));
        }
        if (!(c.value > 0.0) || !(c.bandwidth_bytes_per_s > 0.0)) {
            throw CalibrationInputError(
                fmt::format("target ({}, {}, {}) must be positive", c.instance, c.bandwidth_bytes_per_s,
                            to_string(c.metric)));
        }
    }
    if (auto missing = missing_cells(targets, setup.base); !missing.empty()) {
        std::string msg = "missing calibration cells:";
        for (const auto& m : missing) {
            msg += " " + m;
        }
        throw CalibrationInputError(msg);
    }
    for (const auto& inst : setup.base.sfc.instances) {
        const auto observations = std::count_if(targets.cells.begin(), targets.cells.end(),
                                                [&](const auto& c) { return c.instance == inst.name; });
        if (static_cast<std::size_t>(observations) < setup.bounds.size()) {
            throw CalibrationInputError(fmt::format(
                "instance '{}' has {} observations for {} free parameters", inst.name, observations,
                setup.bounds.size()));
        }
    }
    for (const auto& [param, range] : setup.bounds) {
        if (!(range.lo >= 0.0) || !(range.hi >= range.lo)) {
            throw CalibrationInputError(fmt::format("bad bounds for {}", to_string(param)));
        }
    }

    Fitter fitter(targets, setup);
    fitter.run();

    CalibrationResult result;
    result.fitted = fitter.fitted();
    result.fitted.noise_sigma = setup.base.noise_sigma;
    result.residuals = evaluate_cells(result.fitted, targets);
    result.objective = fitter.best();
    result.evaluations = fitter.evaluations();
    for (const auto& r : result.residuals) {
        result.max_abs_relative_error = std::max(result.max_abs_relative_error, std::abs(r.relative_error));
    }
    result.within_ceiling = result.max_abs_relative_error <= setup.residual_ceiling;
    return result;
}

}  // namespace sfcmig
