#pragma once

#include <sfcmig/engine.hpp>
#include <sfcmig/model.hpp>

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sfcmig {

// ---------------------------------------------------------------------------
// Per-run measurements

struct InstanceMetrics {
    std::string name;
    double downtime_s = 0.0;    // FreezeStart -> RestoreComplete
    double total_time_s = 0.0;  // first TaskStart -> RestoreComplete
};

struct RunMetrics {
    std::vector<InstanceMetrics> instances;  // chain order
    double service_downtime_s = 0.0;         // earliest FreezeStart -> ReconnectComplete
    double sfc_total_time_s = 0.0;           // earliest TaskStart -> ReconnectComplete
    double peak_cpu_source_pct = 0.0;
    double peak_cpu_destination_pct = 0.0;
    double cpu_integral_source = 0.0;  // pct * s
    double cpu_integral_destination = 0.0;

    const InstanceMetrics* find(std::string_view name) const;
};

class ExtractionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Measurements of one complete migration. Throws ExtractionError naming the
/// first missing event.
RunMetrics extract(const EventLog& log);

// ---------------------------------------------------------------------------
// Repetition statistics

struct SummaryStats {
    double mean = 0.0;
    double std = 0.0;   // sample, n - 1 denominator
    double ci95 = 0.0;  // Student-t half width
    double cv = 0.0;    // std / mean
    std::size_t n = 0;
};

class InsufficientSamplesError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Two-sided 97.5% quantile of Student's t with `dof` degrees of freedom.
double student_t_quantile_975(std::size_t dof);

SummaryStats summarize(std::span<const double> samples);

// ---------------------------------------------------------------------------
// Calibration against published tables

enum class Metric { Downtime, TotalTime };

std::string_view to_string(Metric metric);
std::optional<Metric> metric_from_string(std::string_view text);

struct CalibrationCell {
    std::string instance;
    double bandwidth_bytes_per_s = 0.0;
    Metric metric = Metric::Downtime;
    double value = 0.0;
};

struct CalibrationTarget {
    std::vector<CalibrationCell> cells;
};

/// Instance parameters the fit may move. Dirty rate is never fitted; it stays
/// at the value configured in the base scenario.
enum class FitParam {
    DiskDelta,
    MemDelta,
    StateOverhead,
    RestoreTime,
    DiskCopyOverhead,
    PreDumpOverhead,
    DumpOverhead,
};

std::string_view to_string(FitParam param);
std::optional<FitParam> fit_param_from_string(std::string_view text);
double get_param(const InstanceSpec& inst, FitParam param);
void set_param(InstanceSpec& inst, FitParam param, double value);

struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;
};

struct CalibrationSetup {
    Scenario base;  // link, pattern, pinned dirty rates and starting point
    std::map<FitParam, ParamRange> bounds;
    double residual_ceiling = 0.15;
    int grid_points = 9;
    int grid_sweeps = 3;
    std::size_t max_evaluations = 200000;
};

struct CellResidual {
    CalibrationCell target;
    double simulated = 0.0;
    double relative_error = 0.0;  // (simulated - target) / target
};

struct CalibrationResult {
    Scenario fitted;
    std::vector<CellResidual> residuals;
    double objective = 0.0;  // sum of squared relative errors
    double max_abs_relative_error = 0.0;
    bool within_ceiling = false;
    std::size_t evaluations = 0;
};

class CalibrationInputError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Cells the fit needs but `targets` lacks: every (instance, bandwidth,
/// metric) combination over the base chain and the bandwidths present.
std::vector<std::string> missing_cells(const CalibrationTarget& targets, const Scenario& base);

/// Noise-free simulation of `scenario` at each target cell.
std::vector<CellResidual> evaluate_cells(const Scenario& scenario, const CalibrationTarget& targets);

/// `scenario` with the migration limit set for one target bandwidth; a
/// bandwidth at or above link capacity means "full".
Scenario at_bandwidth(const Scenario& scenario, double bandwidth_bytes_per_s);

/// Per-coordinate grid sweeps, pattern search and profiled grid moves,
/// minimizing summed squared relative error over all cells. Deterministic.
CalibrationResult calibrate(const CalibrationTarget& targets, const CalibrationSetup& setup);

}  // namespace sfcmig
