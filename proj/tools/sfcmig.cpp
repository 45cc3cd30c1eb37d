// sfcmig: run, sweep and calibrate SFC live-migration simulations.

#include <sfcmig/engine.hpp>
#include <sfcmig/experiment.hpp>
#include <sfcmig/io.hpp>
#include <sfcmig/metrics.hpp>
#include <sfcmig/model.hpp>
#include <sfcmig/patterns.hpp>

#include <CLI11.hpp>
#include <fmt/core.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace sfcmig;

namespace {

enum Exit : int {
    kOk = 0,
    kInternal = 1,
    kValidation = 2,
    kResidual = 3,
    kIo = 4,
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonArgs {
    std::string scenario;
    std::string pattern;
    std::string bandwidth;
    int reps = 0;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    bool emit_events = false;
    bool emit_cpu = false;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--scenario", a.scenario, "scenario JSON")->required();
    cmd->add_option("--pattern", a.pattern, "override pattern (asynchronous, waitforme, roundrobin[+na])");
    cmd->add_option("--reps", a.reps, "override repetition count");
    cmd->add_option("--seed", a.seed, "override base seed");
    cmd->add_option("--out-dir", a.out_dir, "output directory");
    cmd->add_flag("--emit-events", a.emit_events, "write one event-log CSV per repetition");
    cmd->add_flag("--emit-cpu", a.emit_cpu, "write source/destination CPU series per repetition");
}

PatternKind pattern_arg(const std::string& text) {
    auto p = parse_pattern(text);
    if (!p) {
        throw UsageError(fmt::format("unknown pattern '{}'", text));
    }
    return *p;
}

std::optional<double> bandwidth_arg(const std::string& text) {
    try {
        return parse_bandwidth(text);
    } catch (const ParseError& e) {
        throw UsageError(e.what());
    }
}

void check_valid(const Scenario& s) {
    const auto violations = validate_scenario(s);
    if (violations.empty()) {
        return;
    }
    std::string msg = "scenario is invalid:";
    for (const auto& v : violations) {
        msg += "\n  " + v.to_string();
    }
    throw ValidationFailure(msg);
}

Scenario load_with_overrides(const CommonArgs& a) {
    Scenario s = load_scenario(a.scenario);
    if (!a.pattern.empty()) {
        s.pattern = pattern_arg(a.pattern);
    }
    if (a.reps != 0) {
        s.repetitions = a.reps;
    }
    if (a.seed) {
        s.base_seed = *a.seed;
    }
    return s;
}

fs::path prepare_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError(fmt::format("cannot create output directory '{}'", dir));
    }
    return fs::path(dir);
}

std::string cell_tag(const CellRuns& cell) {
    std::string p = to_string(cell.pattern);
    for (char& c : p) {
        if (c == '+') {
            c = '_';
        }
    }
    return fmt::format("{}_{}", p, cell.bandwidth_bytes_per_s);
}

struct Outputs {
    std::ostringstream runs;
    std::ostringstream summary;
    std::ostringstream sfc;
    bool any_summary = false;

    Outputs() {
        write_runs_header(runs);
        write_summary_header(summary);
        write_summary_header(sfc);
    }

    void add(const CellRuns& cell, const fs::path& dir, bool events, bool cpu) {
        write_runs_rows(runs, cell);
        const auto inst = instance_summary(cell);
        const auto chain = sfc_summary(cell);
        any_summary = any_summary || !inst.empty();
        write_summary_rows(summary, inst);
        write_summary_rows(sfc, chain);
        const std::string tag = cell_tag(cell);
        for (const auto& r : cell.reps) {
            if (events) {
                std::ostringstream out;
                write_event_csv(out, r.log);
                write_file(dir / fmt::format("events_{}_rep{}.csv", tag, r.rep), out.str());
            }
            if (cpu) {
                for (NodeRole role : {NodeRole::Source, NodeRole::Destination}) {
                    std::ostringstream out;
                    write_cpu_csv(out, cpu_series(r.log, role));
                    write_file(dir / fmt::format("cpu_{}_rep{}_{}.csv", tag, r.rep,
                                                 role == NodeRole::Source ? "source" : "destination"),
                               out.str());
                }
            }
        }
    }

    void flush(const fs::path& dir) {
        write_file(dir / "runs.csv", runs.str());
        if (any_summary) {
            write_file(dir / "summary.csv", summary.str());
            write_file(dir / "sfc_summary.csv", sfc.str());
        } else {
            std::cerr << "note: fewer than two repetitions, summary omitted\n";
        }
    }
};

int cmd_run(const CommonArgs& a) {
    Scenario s = load_with_overrides(a);
    if (!a.bandwidth.empty()) {
        s.migration_bandwidth_limit_bytes_per_s = bandwidth_arg(a.bandwidth);
    }
    check_valid(s);
    const fs::path dir = prepare_dir(a.out_dir);
    Outputs out;
    out.add(run_cell(s), dir, a.emit_events, a.emit_cpu);
    out.flush(dir);
    return kOk;
}

std::vector<std::string> split_list(const std::vector<std::string>& raw) {
    std::vector<std::string> items;
    for (const auto& r : raw) {
        std::stringstream ss(r);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) {
                items.push_back(item);
            }
        }
    }
    return items;
}

int cmd_sweep(const CommonArgs& a, const std::vector<std::string>& bandwidths_raw,
              const std::vector<std::string>& patterns_raw) {
    const Scenario base = load_with_overrides(a);
    const auto bw_items = split_list(bandwidths_raw);
    if (bw_items.empty()) {
        throw UsageError("--bandwidths needs at least one value");
    }
    std::vector<std::optional<double>> bandwidths;
    for (const auto& b : bw_items) {
        bandwidths.push_back(bandwidth_arg(b));
    }
    std::vector<PatternKind> patterns;
    for (const auto& p : split_list(patterns_raw)) {
        patterns.push_back(pattern_arg(p));
    }
    if (patterns.empty()) {
        patterns.push_back(base.pattern);
    }
    check_valid(base);
    const fs::path dir = prepare_dir(a.out_dir);
    Outputs out;
    for (const auto& pattern : patterns) {
        for (const auto& bw : bandwidths) {
            Scenario s = base;
            s.pattern = pattern;
            s.migration_bandwidth_limit_bytes_per_s = bw;
            try {
                check_valid(s);
                out.add(run_cell(s), dir, a.emit_events, a.emit_cpu);
            } catch (const std::exception& e) {
                const std::string cell =
                    fmt::format("cell (pattern {}, bandwidth {})", to_string(pattern),
                                bw ? fmt::format("{}", *bw) : std::string("full"));
                if (dynamic_cast<const ValidationFailure*>(&e)) {
                    throw ValidationFailure(cell + ": " + e.what());
                }
                throw std::runtime_error(cell + ": " + e.what());
            }
        }
    }
    out.flush(dir);
    return kOk;
}

int cmd_calibrate(const std::string& targets_path, const std::string& bounds_path, const std::string& out_dir,
                  const std::string& output_name) {
    const CalibrationTarget targets = load_targets(targets_path);
    const CalibrationSetup setup = load_setup(bounds_path);
    CalibrationResult result;
    try {
        result = calibrate(targets, setup);
    } catch (const CalibrationInputError& e) {
        throw ValidationFailure(e.what());
    }
    const fs::path dir = prepare_dir(out_dir);
    save_scenario(dir / output_name, result.fitted);
    std::ostringstream csv;
    write_residual_csv(csv, result.residuals);
    write_file(dir / "residuals.csv", csv.str());
    std::cerr << fmt::format("calibration: {} evaluations, objective {:.6g}, max |relative error| {:.4f}\n",
                             result.evaluations, result.objective, result.max_abs_relative_error);
    if (!result.within_ceiling) {
        std::cerr << fmt::format("error: residual {:.4f} exceeds ceiling {:.4f}\n", result.max_abs_relative_error,
                                 setup.residual_ceiling);
        return kResidual;
    }
    return kOk;
}

int cmd_validate(const std::string& path) {
    const Scenario s = load_scenario(path);
    check_valid(s);
    build_plan(s);  // surfaces reservation errors for network-aware patterns
    std::cout << "ok\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SFC live-migration simulator"};
    app.require_subcommand(1);

    CommonArgs run_args;
    auto* run = app.add_subcommand("run", "simulate one scenario for its repetitions");
    add_common(run, run_args);
    run->add_option("--bandwidth", run_args.bandwidth, "migration limit, e.g. 2MB, 300KB, full");

    CommonArgs sweep_args;
    std::vector<std::string> sweep_bandwidths;
    std::vector<std::string> sweep_patterns;
    auto* sweep = app.add_subcommand("sweep", "run every (pattern, bandwidth) combination");
    add_common(sweep, sweep_args);
    sweep->add_option("--bandwidths", sweep_bandwidths, "comma-separated limits")->required();
    sweep->add_option("--patterns", sweep_patterns, "comma-separated patterns (default: scenario pattern)");

    std::string targets_path;
    std::string bounds_path;
    std::string calib_out = ".";
    std::string calib_name = "fitted_scenario.json";
    auto* calib = app.add_subcommand("calibrate", "fit instance parameters to target measurements");
    calib->add_option("--targets", targets_path, "targets JSON")->required();
    calib->add_option("--bounds", bounds_path, "bounds JSON (base scenario and parameter ranges)")->required();
    calib->add_option("--out-dir", calib_out, "output directory");
    calib->add_option("--output", calib_name, "fitted scenario file name inside --out-dir");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "check a scenario file");
    validate->add_option("--scenario", validate_path, "scenario JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (*run) {
            return cmd_run(run_args);
        }
        if (*sweep) {
            return cmd_sweep(sweep_args, sweep_bandwidths, sweep_patterns);
        }
        if (*calib) {
            return cmd_calibrate(targets_path, bounds_path, calib_out, calib_name);
        }
        if (*validate) {
            return cmd_validate(validate_path);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kValidation;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kValidation;
    } catch (const ValidationFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIo;
    } catch (const ReservationError& e) {
        std::cerr << "reservation error: " << e.what() << "\n";
        return kValidation;
    } catch (const SimulationError& e) {
        std::cerr << "simulation error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInternal;
    }
    return kInternal;
}
