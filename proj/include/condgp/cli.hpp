// Command-line front end: subcommands over the harness with JSON configs.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error,
// 3 validation failure.
#pragma once

#include <iomanip>
#include <iostream>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "condgp/config.hpp"
#include "condgp/harness.hpp"
#include "condgp/validate.hpp"

namespace condgp {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2, kExitValidation = 3 };

inline std::string config_keys_help() {
    std::ostringstream os;
    os << "Config keys (JSON sections; override with --override key=value):\n";
    std::size_t width = 0;
    for (const auto& k : config_keys()) width = std::max(width, std::string(k.key).size());
    for (const auto& k : config_keys())
        os << "  " << std::left << std::setw(static_cast<int>(width) + 2) << k.key << "[" << k.unit << "] "
           << k.description << '\n';
    return os.str();
}

struct CliOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string preset;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool quiet = false;
};

namespace detail {

inline ScenarioConfig resolve_cli_config(const CliOptions& o) {
    std::vector<std::string> overrides = o.overrides;
    if (o.seed_given) overrides.push_back("seed=" + std::to_string(o.seed));
    if (!o.out.empty()) overrides.push_back("output_dir=" + json(o.out).dump());
    return load_config(o.config_path, overrides, o.preset);
}

inline int dispatch(const std::string& command, const CliOptions& opts, std::ostream& out, std::ostream& err) {
    auto progress = [&](const std::string& line) {
        if (!opts.quiet) err << line << std::endl;
    };

    if (command == "validate") {
        bool all = true;
        run_invariant_suite([&](const CheckResult& r) {
            all = all && r.passed;
            out << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")" << std::endl;
        });
        return all ? kExitOk : kExitValidation;
    }

    const ScenarioConfig cfg = resolve_cli_config(opts);
    const fs::path dir = cfg.study_dir();
    write_config(dir, cfg);
    progress("study directory: " + dir.string());

    if (command == "gen-data") {
        write_datasets_csv(dir / "data.csv", offline_datasets(cfg));
        progress("wrote data.csv");
        return kExitOk;
    }
    if (command == "fit") {
        OfflineResult r = condition_datasets(cfg, offline_datasets(cfg));
        json models = json::array();
        for (std::size_t j = 0; j < r.models.size(); ++j) {
            json m = r.models[j];
            m["label"] = r.data[j].label;
            models.push_back(std::move(m));
        }
        write_json_file(dir / "models.json", models);
        progress("wrote models.json (" + std::to_string(r.models.size()) + " realizations)");
        return kExitOk;
    }

    progress("offline conditioning");
    const OfflineResult off = offline_pipeline(cfg, dir);

    if (command == "condition") {
        out << "m,sigma_m,cumulative_energy\n";
        for (const auto& row : off.scree())
            out << row.m << ',' << format_double(row.sigma) << ',' << format_double(row.cumulative_energy) << '\n';
        return kExitOk;
    }
    if (command == "sweep") {
        write_sweep_csv(dir / "dof_sweep.csv", dof_error_sweep(cfg, off));
        progress("wrote dof_sweep.csv");
        return kExitOk;
    }
    if (command == "run") {
        const RunRecord rec = run_online_scenario(cfg, off, cfg.seed);
        write_steps_csv(dir / "steps.csv", rec, online_basis(cfg, off).rank());
        write_json_file(dir / "run_summary.json", run_summary_json(rec));
        progress(rec.failed ? "run failed: " + rec.failure_message : "run complete");
        return kExitOk;
    }
    if (command == "mc") {
        const McSummary s = monte_carlo_study(cfg, off, cfg.runs, cfg.seed, dir, progress);
        progress("failure rate " + std::to_string(s.failure_rate()));
        return kExitOk;
    }
    throw std::logic_error("unhandled subcommand " + command);
}

}  // namespace detail

/// Parses argv, runs the subcommand and maps failures to exit codes.
inline int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                              std::ostream& err = std::cerr) {
    CLI::App app{"Conditioned reduced-rank GP learning inside a noise-adaptive particle filter", "condgp"};
    app.require_subcommand(1, 1);
    app.footer(config_keys_help());
    app.fallthrough();

    CliOptions opts;
    app.add_option("--config", opts.config_path, "JSON scenario file")->check(CLI::ExistingFile);
    app.add_option("--override", opts.overrides, "dotted key=value assignments, e.g. filter.np=100")
        ->expected(1, -1)
        ->allow_extra_args();
    app.add_option("--preset", opts.preset, "defaults to start from: battery | sinc");
    app.add_option("--seed", opts.seed, "online seed (MC run r uses seed + r)");
    app.add_option("--out", opts.out, "output root directory");
    app.add_flag("--quiet", opts.quiet, "suppress progress lines on stderr");

    const std::vector<std::pair<std::string, std::string>> commands{
        {"gen-data", "write the offline data set"},
        {"fit", "fit one Hilbert-GP coefficient vector per realization"},
        {"condition", "fit, stack and SVD-condition; print the scree table"},
        {"run", "one online filtering run"},
        {"mc", "Monte-Carlo study over seeds seed..seed+runs-1"},
        {"sweep", "degree-of-freedom error sweep, original vs conditioned basis"},
        {"validate", "built-in invariant suite; exit 3 on any failure"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    app.get_formatter()->column_width(30);
    std::vector<std::string> args;
    for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    opts.seed_given = app.count("--seed") > 0;

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return detail::dispatch(command, opts, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace condgp
