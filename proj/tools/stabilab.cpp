// stabilab command-line runner.
//
//   stabilab <coverage|rate|stability|efron-stein|bounds-table> --config <path.json>
//            [--out <dir>] [--seed <u64>] [--reps <int>] [--emit csv,json,svg]
//
// Exit codes: 0 success, 2 config error, 3 precondition failure,
// 4 an inequality was empirically broken beyond Monte Carlo slack.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stabilab/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kPreconditionError = 3;
constexpr int kInvariantViolated = 4;

struct Options {
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> reps;
    std::string emit = "csv,json";
};

int run(stabilab::ExperimentKind kind, const Options& opt) {
    using namespace stabilab;
    ExperimentConfig config;
    std::vector<EmitFormat> formats;
    try {
        config = load_config(opt.config_path, kind);
        if (opt.out_dir) config.out_dir = *opt.out_dir;
        if (opt.seed) config.base_seed = *opt.seed;
        if (opt.reps) config.reps = *opt.reps;
        validate_config(config);
        formats = parse_emit_formats(opt.emit);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }
    if (std::find(formats.begin(), formats.end(), EmitFormat::svg) != formats.end() &&
        kind != ExperimentKind::coverage && kind != ExperimentKind::rate) {
        std::cerr << "config error: svg output exists only for coverage and rate\n";
        return kConfigError;
    }

    try {
        const std::filesystem::path out_dir = config.out_dir;
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec) throw PreconditionError("cannot create out_dir '" + out_dir.string() + "': " + ec.message());
        RunLock lock(out_dir);
        const Report report = run_experiment(config);
        for (const auto& path : write_report_files(report, formats, out_dir)) std::cerr << "wrote " << path.string() << "\n";
        std::cout << summarize(report);
        if (invariant_violated(report)) {
            std::cerr << "invariant violated: an inequality failed beyond Monte Carlo slack\n";
            return kInvariantViolated;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "precondition failure: " << e.what() << "\n";
        return kPreconditionError;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    using stabilab::ExperimentKind;
    CLI::App app{"Seeded Monte Carlo checks of stability-based generalisation bounds"};
    app.require_subcommand(1);

    Options opt;
    const std::pair<const char*, ExperimentKind> commands[] = {
        {"coverage", ExperimentKind::coverage},
        {"rate", ExperimentKind::rate},
        {"stability", ExperimentKind::stability_sweep},
        {"efron-stein", ExperimentKind::efron_stein},
        {"bounds-table", ExperimentKind::bounds_table},
    };
    std::optional<ExperimentKind> chosen;
    for (const auto& [name, kind] : commands) {
        CLI::App* sub = app.add_subcommand(name, std::string("run the ") + stabilab::to_string(kind) + " experiment");
        sub->add_option("--config", opt.config_path, "experiment config (JSON)")->required();
        sub->add_option("--out", opt.out_dir, "output directory (overrides out_dir)");
        sub->add_option("--seed", opt.seed, "base seed (overrides base_seed)");
        sub->add_option("--reps", opt.reps, "replications (overrides reps)");
        sub->add_option("--emit", opt.emit, "comma-separated formats: csv, json, svg")->capture_default_str();
        sub->callback([&chosen, kind = kind] { chosen = kind; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }
    return run(*chosen, opt);
}
