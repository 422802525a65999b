#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "zowcvx/diagnostics.hpp"
#include "zowcvx/errors.hpp"
#include "zowcvx/problems.hpp"
#include "zowcvx/solvers.hpp"

namespace zowcvx {

inline constexpr const char* version_string = "0.1.0";

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("ZOWCVX_LOG");
        if (env == nullptr) {
            return LogLevel::Info;
        }
        const std::string name(env);
        if (name == "error") return LogLevel::Error;
        if (name == "info") return LogLevel::Info;
        if (name == "debug") return LogLevel::Debug;
        std::fprintf(stderr, "zowcvx: unknown ZOWCVX_LOG level `%s`, using info\n",
                     name.c_str());
        return LogLevel::Info;
    }();
    return level;
}

inline void log_line(LogLevel level, const std::string& message) {
    if (static_cast<int>(level) <= static_cast<int>(log_level())) {
        const char* tag = level == LogLevel::Error
                              ? "error"
                              : (level == LogLevel::Info ? "info" : "debug");
        std::fprintf(stderr, "zowcvx[%s] %s\n", tag, message.c_str());
    }
}

// Protocol description of one sweep: one instance, a solver list, and
// runs-per-cell replicas per solver with step sizes drawn per replica.
struct ExperimentSpec {
    std::string problem;                 // "phase" or "blind"
    Eigen::Index d = 0;
    Eigen::Index m = 0;
    std::vector<std::string> solvers = {"psdfa", "subgrad", "proxpt"};
    int runs = 10;
    std::int64_t budget = -1;            // horizon T; resolved to 1000*m
    double alpha0_lo = -1.0;             // resolved per problem kind
    double alpha0_hi = -1.0;
    ScheduleLaw law = ScheduleLaw::Constant;
    std::optional<std::uint64_t> master_seed;
    std::string out_dir;
    std::int64_t log_stride = 1;
    std::int64_t snapshot_stride = 0;
};

namespace detail {

inline void require_field(const nlohmann::json& value, const char* field,
                          const char* expected) {
    std::ostringstream msg;
    msg << "experiment spec: field `" << field << "` must be " << expected;
    throw ConfigError(msg.str());
}

} // namespace detail

// Strict parse: unknown keys are errors, so typos cannot silently fall back
// to defaults.
inline ExperimentSpec parse_experiment_spec(const nlohmann::json& j) {
    static const std::vector<std::string> known = {
        "problem", "d",        "m",          "solvers",
        "runs",    "budget",   "alpha0_interval", "schedule_law",
        "master_seed", "out_dir", "log_stride", "snapshot_stride"};
    if (!j.is_object()) {
        throw ConfigError("experiment spec: top level must be an object");
    }
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const auto& k : known) {
            if (item.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw ConfigError("experiment spec: unknown key `" + item.key() + "`");
        }
    }

    ExperimentSpec spec;
    if (!j.contains("problem") || !j["problem"].is_string()) {
        detail::require_field(j, "problem", "\"phase\" or \"blind\"");
    }
    spec.problem = j["problem"].get<std::string>();
    if (spec.problem != "phase" && spec.problem != "blind") {
        throw ConfigError("experiment spec: field `problem` must be \"phase\" or "
                          "\"blind\", got `" + spec.problem + "`");
    }
    if (!j.contains("d") || !j["d"].is_number_integer()) {
        detail::require_field(j, "d", "a positive integer");
    }
    if (!j.contains("m") || !j["m"].is_number_integer()) {
        detail::require_field(j, "m", "a positive integer");
    }
    spec.d = j["d"].get<Eigen::Index>();
    spec.m = j["m"].get<Eigen::Index>();
    if (spec.d < 1 || spec.m < 1) {
        throw ConfigError("experiment spec: fields `d` and `m` must be >= 1");
    }
    if (j.contains("solvers")) {
        if (!j["solvers"].is_array() || j["solvers"].empty()) {
            detail::require_field(j, "solvers", "a nonempty array of names");
        }
        spec.solvers.clear();
        for (const auto& entry : j["solvers"]) {
            if (!entry.is_string()) {
                detail::require_field(j, "solvers", "an array of names");
            }
            const std::string name = entry.get<std::string>();
            if (name != "psdfa" && name != "subgrad" && name != "proxpt") {
                throw ConfigError("experiment spec: unknown solver `" + name +
                                  "` in field `solvers`");
            }
            spec.solvers.push_back(name);
        }
    }
    if (j.contains("runs")) {
        if (!j["runs"].is_number_integer() || j["runs"].get<int>() < 1) {
            detail::require_field(j, "runs", "a positive integer");
        }
        spec.runs = j["runs"].get<int>();
    }
    if (j.contains("budget")) {
        if (!j["budget"].is_number_integer() ||
            j["budget"].get<std::int64_t>() < 0) {
            detail::require_field(j, "budget", "a nonnegative integer");
        }
        spec.budget = j["budget"].get<std::int64_t>();
    }
    if (j.contains("alpha0_interval")) {
        const auto& interval = j["alpha0_interval"];
        if (!interval.is_array() || interval.size() != 2 ||
            !interval[0].is_number() || !interval[1].is_number()) {
            detail::require_field(j, "alpha0_interval", "[lo, hi]");
        }
        spec.alpha0_lo = interval[0].get<double>();
        spec.alpha0_hi = interval[1].get<double>();
        if (!(spec.alpha0_lo > 0.0) || !(spec.alpha0_hi >= spec.alpha0_lo)) {
            throw ConfigError(
                "experiment spec: field `alpha0_interval` needs 0 < lo <= hi");
        }
    }
    if (j.contains("schedule_law")) {
        if (!j["schedule_law"].is_string()) {
            detail::require_field(j, "schedule_law", "a schedule-law name");
        }
        spec.law = schedule_law_from_string(j["schedule_law"].get<std::string>());
    }
    if (j.contains("master_seed")) {
        if (!j["master_seed"].is_number_unsigned() &&
            !j["master_seed"].is_number_integer()) {
            detail::require_field(j, "master_seed", "a 64-bit integer");
        }
        spec.master_seed = j["master_seed"].get<std::uint64_t>();
    }
    if (j.contains("out_dir")) {
        if (!j["out_dir"].is_string()) {
            detail::require_field(j, "out_dir", "a directory path");
        }
        spec.out_dir = j["out_dir"].get<std::string>();
    }
    if (j.contains("log_stride")) {
        if (!j["log_stride"].is_number_integer() ||
            j["log_stride"].get<std::int64_t>() < 1) {
            detail::require_field(j, "log_stride", "a positive integer");
        }
        spec.log_stride = j["log_stride"].get<std::int64_t>();
    }
    if (j.contains("snapshot_stride")) {
        if (!j["snapshot_stride"].is_number_integer() ||
            j["snapshot_stride"].get<std::int64_t>() < 0) {
            detail::require_field(j, "snapshot_stride", "a nonnegative integer");
        }
        spec.snapshot_stride = j["snapshot_stride"].get<std::int64_t>();
    }
    return spec;
}

inline ExperimentSpec load_experiment_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("experiment spec: cannot open " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& err) {
        throw ConfigError(std::string("experiment spec: JSON parse error: ") +
                          err.what());
    }
    return parse_experiment_spec(j);
}

// Fills protocol defaults: budget 1000*m and the per-kind alpha0 intervals.
inline void resolve_experiment_defaults(ExperimentSpec& spec) {
    if (spec.budget < 0) {
        spec.budget = 1000 * static_cast<std::int64_t>(spec.m);
    }
    if (spec.alpha0_lo <= 0.0) {
        if (spec.problem == "phase") {
            spec.alpha0_lo = 1e-5;
            spec.alpha0_hi = 1e-4;
        } else {
            spec.alpha0_lo = 1e-6;
            spec.alpha0_hi = 1e-3;
        }
    }
    if (!spec.master_seed) {
        throw ConfigError(
            "experiment spec: field `master_seed` missing (set it or pass --seed)");
    }
    if (spec.out_dir.empty()) {
        throw ConfigError(
            "experiment spec: field `out_dir` missing (set it or pass --out)");
    }
}

struct ReplicaResult {
    std::string solver;
    int run_index = 0;
    std::uint64_t seed = 0;   // run seed derived from the master seed
    double alpha0 = 0.0;
    RunRecord record;
    std::string csv_path;
};

struct SolverSummary {
    std::string solver;
    int best_run = -1; // -1 when every replica failed
    std::uint64_t seed = 0;
    double alpha0 = std::numeric_limits<double>::quiet_NaN();
    double initial_objective = std::numeric_limits<double>::quiet_NaN();
    double final_objective = std::numeric_limits<double>::quiet_NaN();
    double objective_at_tstar = std::numeric_limits<double>::quiet_NaN();
    std::int64_t t_star = -1;
    std::int64_t oracle_calls = 0;
    double wall_ms = 0.0;
};

struct SweepResult {
    ExperimentSpec spec; // fully resolved
    double rho_bar = 0.0;
    double rho_estimate = 0.0;
    std::uint64_t instance_seed = 0;
    std::string instance_path;
    std::vector<ReplicaResult> replicas;
    std::vector<SolverSummary> summaries;
    bool any_failed = false;
};

inline CompositeProblem make_problem(const LoadedInstance& loaded) {
    if (loaded.phase) {
        return make_phase_retrieval_problem(*loaded.phase);
    }
    if (loaded.blind) {
        return make_blind_deconvolution_problem(*loaded.blind);
    }
    throw ConfigError("make_problem: empty instance");
}

// ---------------------------------------------------------------------------
// Trajectory CSV: fixed column names, snapshot block appended only when the
// run recorded snapshots. wall_ms is the only nondeterministic column.

inline void write_trajectory_csv(const std::string& path,
                                 const RunRecord& record, Eigen::Index n) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("write_trajectory_csv: cannot open " + path);
    }
    bool any_snapshot = false;
    for (const LogPoint& point : record.trajectory) {
        if (point.snapshot) {
            any_snapshot = true;
            break;
        }
    }
    out << "t,alpha_t,objective_full,oracle_calls_cum,wall_ms";
    if (any_snapshot) {
        for (Eigen::Index j = 0; j < n; ++j) {
            out << ",x_" << j;
        }
    }
    out << '\n';
    for (const LogPoint& point : record.trajectory) {
        out << point.t << ',' << detail::format_g17(point.alpha) << ','
            << detail::format_g17(point.objective) << ',' << point.oracle_calls
            << ',';
        char wall[32];
        std::snprintf(wall, sizeof(wall), "%.3f", point.wall_ms);
        out << wall;
        if (any_snapshot) {
            for (Eigen::Index j = 0; j < n; ++j) {
                out << ',';
                if (point.snapshot) {
                    out << detail::format_g17((*point.snapshot)[j]);
                }
            }
        }
        out << '\n';
    }
}

// Reads back the columns written above; snapshot rows regain their vectors.
inline RunRecord parse_trajectory_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("parse_trajectory_csv: cannot open " + path);
    }
    std::string header;
    if (!std::getline(in, header)) {
        throw ConfigError("parse_trajectory_csv: empty file " + path);
    }
    if (header.rfind("t,alpha_t,objective_full,oracle_calls_cum,wall_ms", 0) !=
        0) {
        throw ConfigError("parse_trajectory_csv: unexpected header in " + path);
    }
    Eigen::Index snapshot_dim = 0;
    for (std::size_t pos = header.find(",x_"); pos != std::string::npos;
         pos = header.find(",x_", pos + 1)) {
        ++snapshot_dim;
    }
    RunRecord record;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            const std::size_t next = line.find(',', pos);
            fields.push_back(next == std::string::npos
                                 ? line.substr(pos)
                                 : line.substr(pos, next - pos));
            if (next == std::string::npos) {
                break;
            }
            pos = next + 1;
        }
        if (fields.size() < 5) {
            throw ConfigError("parse_trajectory_csv: short row in " + path);
        }
        LogPoint point;
        try {
            point.t = std::stoll(fields[0]);
            point.alpha = std::stod(fields[1]);
            point.objective = std::stod(fields[2]);
            point.oracle_calls = std::stoll(fields[3]);
            point.wall_ms = std::stod(fields[4]);
        } catch (const std::exception&) {
            throw ConfigError("parse_trajectory_csv: bad row in " + path);
        }
        if (snapshot_dim > 0 &&
            fields.size() == static_cast<std::size_t>(5 + snapshot_dim) &&
            !fields[5].empty()) {
            Vector snapshot(snapshot_dim);
            for (Eigen::Index jj = 0; jj < snapshot_dim; ++jj) {
                snapshot[jj] = std::stod(fields[static_cast<std::size_t>(5 + jj)]);
            }
            point.snapshot = std::move(snapshot);
        }
        record.trajectory.push_back(std::move(point));
    }
    return record;
}

namespace detail {

inline RunRecord dispatch_solver(const std::string& name,
                                 const CompositeProblem& problem,
                                 const SolverConfig& config) {
    if (name == "psdfa") {
        return run_psdfa(problem, config);
    }
    if (name == "subgrad") {
        return run_stochastic_subgradient(problem, config);
    }
    if (name == "proxpt") {
        return run_stochastic_proxpoint(problem, config);
    }
    throw ConfigError("unknown solver `" + name + "`");
}

} // namespace detail

// Runs the full sweep: generates (and saves) the instance, executes
// runs-per-cell replicas of each listed solver on independent derived
// streams, writes one trajectory CSV per replica plus summary.csv and
// manifest.json. Replica seeds are derived by stream splitting, so the
// manifest alone reproduces any replica in isolation.
inline SweepResult run_experiment(ExperimentSpec spec, int parallel = 1) {
    resolve_experiment_defaults(spec);
    if (parallel < 1) {
        throw ConfigError("run_experiment: parallel must be >= 1");
    }

    std::error_code fs_error;
    std::filesystem::create_directories(spec.out_dir, fs_error);
    if (fs_error) {
        throw ConfigError("run_experiment: cannot create out_dir `" +
                          spec.out_dir + "`: " + fs_error.message());
    }

    SweepResult sweep;
    RngStream master(*spec.master_seed);

    // Instance.
    RngStream instance_stream = master.split(0);
    sweep.instance_seed = instance_stream.seed();
    LoadedInstance loaded;
    loaded.kind = spec.problem;
    loaded.seed = sweep.instance_seed;
    if (spec.problem == "phase") {
        loaded.phase = generate_phase_retrieval(spec.d, spec.m, instance_stream);
    } else {
        loaded.blind =
            generate_blind_deconvolution(spec.d, spec.m, instance_stream);
    }
    sweep.instance_path =
        (std::filesystem::path(spec.out_dir) / "instance.csv").string();
    if (loaded.phase) {
        save_instance_csv(*loaded.phase, sweep.instance_seed,
                          sweep.instance_path);
    } else {
        save_instance_csv(*loaded.blind, sweep.instance_seed,
                          sweep.instance_path);
    }

    const CompositeProblem problem = make_problem(loaded);
    sweep.rho_estimate = problem.rho_estimate;
    sweep.rho_bar = default_rho_bar(problem);

    // The largest drawable step must be admissible up front, so a sweep
    // cannot fail halfway through on an unlucky draw.
    try {
        const StepSchedule probe(spec.alpha0_hi, spec.law, spec.budget);
        probe.check_admissible(sweep.rho_bar, problem.rho_estimate);
    } catch (const Error& err) {
        throw ConfigError(
            std::string("experiment spec: field `alpha0_interval` upper end is "
                        "not an admissible step: ") +
            err.what());
    }

    // Replica execution (optionally across a small thread pool; replicas are
    // independent and write distinct files).
    struct Task {
        std::string solver;
        int run_index;
        std::uint64_t key;
    };
    std::vector<Task> tasks;
    for (std::size_t s = 0; s < spec.solvers.size(); ++s) {
        for (int r = 0; r < spec.runs; ++r) {
            tasks.push_back(Task{spec.solvers[s], r,
                                 (static_cast<std::uint64_t>(s + 1) << 32) |
                                     static_cast<std::uint64_t>(r)});
        }
    }
    std::vector<ReplicaResult> results(tasks.size());

    const auto run_task = [&](std::size_t index) {
        const Task& task = tasks[index];
        RngStream replica = master.split(task.key);
        RngStream alpha_stream = replica.split(0);
        const double alpha0 =
            alpha_stream.uniform(spec.alpha0_lo, spec.alpha0_hi);
        const std::uint64_t run_seed = replica.split(1).seed();

        SolverConfig config{
            StepSchedule(alpha0, spec.law, spec.budget), sweep.rho_bar,
            run_seed,  spec.log_stride,
            spec.snapshot_stride, std::nullopt};

        ReplicaResult result;
        result.solver = task.solver;
        result.run_index = task.run_index;
        result.seed = run_seed;
        result.alpha0 = alpha0;
        result.record = detail::dispatch_solver(task.solver, problem, config);
        std::ostringstream name;
        name << task.solver << "_run" << task.run_index << ".csv";
        result.csv_path =
            (std::filesystem::path(spec.out_dir) / name.str()).string();
        write_trajectory_csv(result.csv_path, result.record,
                             problem.dimension());
        {
            std::ostringstream msg;
            msg << task.solver << " run " << task.run_index << " seed "
                << run_seed << " alpha0 " << alpha0 << " -> "
                << (result.record.completed
                        ? "final " +
                              std::to_string(result.record.final_objective())
                        : "failed: " + result.record.failure);
            log_line(LogLevel::Info, msg.str());
        }
        results[index] = std::move(result);
    };

    if (parallel == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            run_task(i);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        const int count = std::min<int>(parallel, static_cast<int>(tasks.size()));
        workers.reserve(static_cast<std::size_t>(count));
        for (int w = 0; w < count; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < tasks.size();
                     i = next.fetch_add(1)) {
                    run_task(i);
                }
            });
        }
        for (auto& worker : workers) {
            worker.join();
        }
    }
    sweep.replicas = std::move(results);
    for (const ReplicaResult& replica : sweep.replicas) {
        if (!replica.record.completed) {
            sweep.any_failed = true;
        }
    }

    // Best-run selection per solver: minimum final full objective among the
    // completed replicas.
    for (const std::string& solver : spec.solvers) {
        SolverSummary summary;
        summary.solver = solver;
        for (const ReplicaResult& replica : sweep.replicas) {
            if (replica.solver != solver || !replica.record.completed) {
                continue;
            }
            const double final_objective = replica.record.final_objective();
            if (summary.best_run < 0 ||
                final_objective < summary.final_objective) {
                summary.best_run = replica.run_index;
                summary.seed = replica.seed;
                summary.alpha0 = replica.alpha0;
                summary.final_objective = final_objective;
                summary.initial_objective =
                    replica.record.trajectory.front().objective;
                summary.objective_at_tstar =
                    problem.full_objective(replica.record.x_star);
                summary.t_star = replica.record.t_star;
                summary.oracle_calls = replica.record.oracle_calls;
                summary.wall_ms = replica.record.wall_ms;
            }
        }
        sweep.summaries.push_back(summary);
    }

    // summary.csv
    {
        const std::string path =
            (std::filesystem::path(spec.out_dir) / "summary.csv").string();
        std::ofstream out(path);
        if (!out) {
            throw ConfigError("run_experiment: cannot open " + path);
        }
        out << "problem,d,m,solver,best_run,seed,alpha0,initial_objective,"
               "final_objective,objective_at_tstar,t_star,oracle_calls,wall_ms\n";
        for (const SolverSummary& row : sweep.summaries) {
            out << spec.problem << ',' << spec.d << ',' << spec.m << ','
                << row.solver << ',' << row.best_run << ',' << row.seed << ','
                << detail::format_g17(row.alpha0) << ','
                << detail::format_g17(row.initial_objective) << ','
                << detail::format_g17(row.final_objective) << ','
                << detail::format_g17(row.objective_at_tstar) << ','
                << row.t_star << ',' << row.oracle_calls << ',';
            char wall[32];
            std::snprintf(wall, sizeof(wall), "%.3f", row.wall_ms);
            out << wall << '\n';
        }
    }

    // manifest.json (no wall-clock fields: byte-identical across reruns).
    {
        nlohmann::ordered_json manifest;
        manifest["version"] = version_string;
        manifest["problem"] = spec.problem;
        manifest["d"] = spec.d;
        manifest["m"] = spec.m;
        manifest["master_seed"] = *spec.master_seed;
        manifest["instance_seed"] = sweep.instance_seed;
        manifest["instance_file"] = "instance.csv";
        if (spec.problem == "blind") {
            manifest["blind_planting"] = "joint-normalized-split";
        }
        manifest["rho_estimate"] = sweep.rho_estimate;
        manifest["rho_bar"] = sweep.rho_bar;
        manifest["schedule_law"] = to_string(spec.law);
        manifest["budget"] = spec.budget;
        manifest["runs"] = spec.runs;
        manifest["alpha0_interval"] = {spec.alpha0_lo, spec.alpha0_hi};
        manifest["log_stride"] = spec.log_stride;
        manifest["snapshot_stride"] = spec.snapshot_stride;
        manifest["solvers"] = spec.solvers;
        manifest["replicas"] = nlohmann::ordered_json::array();
        for (const ReplicaResult& replica : sweep.replicas) {
            nlohmann::ordered_json entry;
            entry["solver"] = replica.solver;
            entry["run"] = replica.run_index;
            entry["seed"] = replica.seed;
            entry["alpha0"] = replica.alpha0;
            entry["csv"] =
                std::filesystem::path(replica.csv_path).filename().string();
            entry["status"] = replica.record.completed
                                  ? "ok"
                                  : ("failed: " + replica.record.failure);
            if (replica.record.completed) {
                entry["final_objective"] = replica.record.final_objective();
                entry["t_star"] = replica.record.t_star;
                entry["oracle_calls"] = replica.record.oracle_calls;
            }
            const StepConditionReport report = step_condition_report(
                StepSchedule(replica.alpha0, spec.law, spec.budget),
                sweep.rho_bar, sweep.rho_estimate);
            entry["step_condition_satisfied"] = report.satisfied;
            entry["delta0"] = report.delta0;
            manifest["replicas"].push_back(std::move(entry));
        }
        const std::string path =
            (std::filesystem::path(spec.out_dir) / "manifest.json").string();
        std::ofstream out(path);
        if (!out) {
            throw ConfigError("run_experiment: cannot open " + path);
        }
        out << manifest.dump(2) << '\n';
    }

    sweep.spec = std::move(spec);
    return sweep;
}

// Envelope trace over the best completed replica of the first listed solver
// that has one; emits stationarity.csv next to the run artifacts. rho_bar
// and stride default to the manifest values.
inline std::string cli_diagnose(const std::string& dir,
                                std::optional<double> rho_bar = std::nullopt,
                                std::optional<std::int64_t> stride = std::nullopt,
                                const EnvelopeOptions& options = {}) {
    const std::filesystem::path base(dir);
    std::ifstream manifest_in(base / "manifest.json");
    if (!manifest_in) {
        throw ConfigError("cli_diagnose: no manifest.json in " + dir);
    }
    nlohmann::json manifest;
    try {
        manifest_in >> manifest;
    } catch (const nlohmann::json::exception& err) {
        throw ConfigError(std::string("cli_diagnose: bad manifest.json: ") +
                          err.what());
    }

    const LoadedInstance loaded =
        load_instance_csv((base / manifest.at("instance_file")
                                      .get<std::string>()).string());
    const CompositeProblem problem = make_problem(loaded);
    const double rb = rho_bar.value_or(manifest.at("rho_bar").get<double>());
    std::int64_t effective_stride =
        stride.value_or(manifest.at("snapshot_stride").get<std::int64_t>());
    if (effective_stride < 1) {
        effective_stride = 1;
    }

    // Best completed replica of the first solver that has one.
    std::string csv_name;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& solver : manifest.at("solvers")) {
        for (const auto& entry : manifest.at("replicas")) {
            if (entry.at("solver") != solver ||
                entry.at("status").get<std::string>() != "ok") {
                continue;
            }
            const double final_objective =
                entry.at("final_objective").get<double>();
            if (final_objective < best) {
                best = final_objective;
                csv_name = entry.at("csv").get<std::string>();
            }
        }
        if (!csv_name.empty()) {
            break;
        }
    }
    if (csv_name.empty()) {
        throw ConfigError("cli_diagnose: no completed replica in " + dir);
    }

    const RunRecord record = parse_trajectory_csv((base / csv_name).string());
    const std::vector<TracePoint> trace =
        stationarity_trace(record, problem, rb, effective_stride, options);

    const std::string out_path = (base / "stationarity.csv").string();
    std::ofstream out(out_path);
    if (!out) {
        throw ConfigError("cli_diagnose: cannot open " + out_path);
    }
    out << "t,grad_norm,envelope_value,inner_residual\n";
    for (const TracePoint& point : trace) {
        out << point.t << ',' << detail::format_g17(point.grad_norm) << ','
            << detail::format_g17(point.envelope_value) << ','
            << detail::format_g17(point.inner_residual) << '\n';
    }
    log_line(LogLevel::Info,
             "diagnose: wrote " + out_path + " from " + csv_name);
    return out_path;
}

} // namespace zowcvx
