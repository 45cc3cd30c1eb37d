#include <sfcmig/experiment.hpp>

#include <sfcmig/patterns.hpp>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <ostream>
#include <utility>

namespace sfcmig {

double effective_bandwidth(const Scenario& scenario) {
    return scenario.migration_bandwidth_limit_bytes_per_s.value_or(scenario.link.capacity_bytes_per_s);
}

CellRuns run_cell(const Scenario& scenario) {
    const TaskGraph plan = build_plan(scenario);
    CellRuns cell;
    cell.pattern = scenario.pattern;
    cell.bandwidth_bytes_per_s = effective_bandwidth(scenario);
    cell.reps.reserve(static_cast<std::size_t>(scenario.repetitions));
    for (int rep = 0; rep < scenario.repetitions; ++rep) {
        RepetitionResult r;
        r.rep = rep;
        r.log = simulate(scenario, plan, rep);
        r.metrics = extract(r.log);
        cell.reps.push_back(std::move(r));
    }
    return cell;
}

namespace {

using Getter = double (*)(const RunMetrics&);

struct SfcMetric {
    const char* name;
    Getter get;
};

constexpr SfcMetric kSfcMetrics[] = {
    {"service_downtime_s", [](const RunMetrics& m) { return m.service_downtime_s; }},
    {"sfc_total_time_s", [](const RunMetrics& m) { return m.sfc_total_time_s; }},
    {"peak_cpu_source_pct", [](const RunMetrics& m) { return m.peak_cpu_source_pct; }},
    {"peak_cpu_destination_pct", [](const RunMetrics& m) { return m.peak_cpu_destination_pct; }},
    {"cpu_integral_source", [](const RunMetrics& m) { return m.cpu_integral_source; }},
    {"cpu_integral_destination", [](const RunMetrics& m) { return m.cpu_integral_destination; }},
};

double instance_value(const InstanceMetrics& m, Metric metric) {
    return metric == Metric::Downtime ? m.downtime_s : m.total_time_s;
}

}  // namespace

std::vector<SummaryRow> instance_summary(const CellRuns& cell) {
    std::vector<SummaryRow> rows;
    if (cell.reps.size() < 2) {
        return rows;
    }
    const auto& first = cell.reps.front().metrics.instances;
    for (std::size_t i = 0; i < first.size(); ++i) {
        for (Metric metric : {Metric::Downtime, Metric::TotalTime}) {
            std::vector<double> samples;
            for (const auto& r : cell.reps) {
                samples.push_back(instance_value(r.metrics.instances.at(i), metric));
            }
            rows.push_back({cell.pattern, cell.bandwidth_bytes_per_s, first[i].name,
                            std::string(to_string(metric)), summarize(samples)});
        }
    }
    return rows;
}

std::vector<SummaryRow> sfc_summary(const CellRuns& cell) {
    std::vector<SummaryRow> rows;
    if (cell.reps.size() < 2) {
        return rows;
    }
    for (const auto& m : kSfcMetrics) {
        std::vector<double> samples;
        for (const auto& r : cell.reps) {
            samples.push_back(m.get(r.metrics));
        }
        rows.push_back({cell.pattern, cell.bandwidth_bytes_per_s, "sfc", m.name, summarize(samples)});
    }
    return rows;
}

void write_runs_header(std::ostream& out) { out << "pattern,bandwidth_bytes_per_s,rep,instance,metric,value\n"; }

void write_runs_rows(std::ostream& out, const CellRuns& cell) {
    const std::string pattern = to_string(cell.pattern);
    for (const auto& r : cell.reps) {
        for (const auto& inst : r.metrics.instances) {
            for (Metric metric : {Metric::Downtime, Metric::TotalTime}) {
                fmt::print(out, "{},{},{},{},{},{}\n", pattern, cell.bandwidth_bytes_per_s, r.rep, inst.name,
                           to_string(metric), instance_value(inst, metric));
            }
        }
        for (const auto& m : kSfcMetrics) {
            fmt::print(out, "{},{},{},sfc,{},{}\n", pattern, cell.bandwidth_bytes_per_s, r.rep, m.name,
                       m.get(r.metrics));
        }
    }
}

void write_summary_header(std::ostream& out) {
    out << "pattern,bandwidth_bytes_per_s,instance,metric,mean,std,ci95,cv,n\n";
}

void write_summary_rows(std::ostream& out, const std::vector<SummaryRow>& rows) {
    for (const auto& row : rows) {
        fmt::print(out, "{},{},{},{},{},{},{},{},{}\n", to_string(row.pattern), row.bandwidth_bytes_per_s,
                   row.instance, row.metric, row.stats.mean, row.stats.std, row.stats.ci95, row.stats.cv,
                   row.stats.n);
    }
}

void write_residual_csv(std::ostream& out, const std::vector<CellResidual>& residuals) {
    out << "instance,bandwidth,metric,target,simulated,relative_error\n";
    for (const auto& r : residuals) {
        fmt::print(out, "{},{},{},{},{},{}\n", r.target.instance, r.target.bandwidth_bytes_per_s,
                   to_string(r.target.metric), r.target.value, r.simulated, r.relative_error);
    }
}

}  // namespace sfcmig
