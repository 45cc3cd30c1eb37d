#pragma once

#include <sfcmig/engine.hpp>
#include <sfcmig/metrics.hpp>
#include <sfcmig/model.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace sfcmig {

struct RepetitionResult {
    int rep = 0;
    RunMetrics metrics;
    EventLog log;
};

/// One (pattern, bandwidth) cell: `scenario.repetitions` runs, in rep order.
struct CellRuns {
    PatternKind pattern;
    double bandwidth_bytes_per_s = 0.0;  // link capacity when unlimited
    std::vector<RepetitionResult> reps;
};

CellRuns run_cell(const Scenario& scenario);

/// Level used to label a cell: the migration limit, or the capacity if none.
double effective_bandwidth(const Scenario& scenario);

struct SummaryRow {
    PatternKind pattern;
    double bandwidth_bytes_per_s = 0.0;
    std::string instance;  // "sfc" for chain-level metrics
    std::string metric;
    SummaryStats stats;
};

/// Per-instance downtime/total summaries; empty when fewer than two reps.
std::vector<SummaryRow> instance_summary(const CellRuns& cell);
/// Chain-level summaries (service downtime, SFC total time, CPU peaks and
/// integrals); empty when fewer than two reps.
std::vector<SummaryRow> sfc_summary(const CellRuns& cell);

void write_runs_header(std::ostream& out);
void write_runs_rows(std::ostream& out, const CellRuns& cell);
void write_summary_header(std::ostream& out);
void write_summary_rows(std::ostream& out, const std::vector<SummaryRow>& rows);
void write_residual_csv(std::ostream& out, const std::vector<CellResidual>& residuals);

}  // namespace sfcmig
