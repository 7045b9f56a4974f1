#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "stabilab/bounds.hpp"
#include "stabilab/datagen.hpp"
#include "stabilab/stability.hpp"

namespace stabilab {

// Malformed or inconsistent configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A valid configuration whose experiment preconditions fail (CLI exit code 3).
struct PreconditionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ExperimentKind { coverage, rate, stability_sweep, efron_stein, bounds_table };

std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);

// {"type": "ridge", "lambda": 1.0 | [..], "eta": 0.5} or {"type": "knn", "k": 3 | [..]}.
// Grids of lambda / k are swept by stability_sweep and bounds_table; the
// other experiments need a single value.
struct AlgorithmConfig {
    enum class Type { ridge, knn };
    Type type = Type::ridge;
    std::vector<double> lambdas{1.0};
    double eta = 0.5;
    std::vector<std::size_t> ks{1};

    friend bool operator==(const AlgorithmConfig&, const AlgorithmConfig&) = default;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::coverage;
    DataSpec spec;
    AlgorithmConfig algorithm;
    std::vector<std::size_t> n_grid;
    std::vector<double> q_grid;
    std::vector<double> x_grid;
    std::size_t reps = 100;
    std::size_t test_m = 10000;
    std::uint64_t base_seed = 0;
    std::string out_dir = ".";

    // Optional extras, defaulted when absent from the JSON.
    JPolicy j_policy = JPolicy::average_all;
    std::vector<Statistic> statistics{Statistic::constant, Statistic::mean, Statistic::ridge_loo};
    std::size_t y_norm_draws = 1000000;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Both throw ConfigError on malformed input. A config without "kind" takes
// kind_hint; a config whose kind disagrees with the hint is rejected.
ExperimentConfig parse_config(const std::string& json_text, std::optional<ExperimentKind> kind_hint = {});
ExperimentConfig load_config(const std::filesystem::path& path, std::optional<ExperimentKind> kind_hint = {});
std::string config_to_json(const ExperimentConfig& config);

// Checks the per-kind requirements (grids present, single lambda where
// needed, reps >= 50 for coverage, ...). Throws ConfigError.
void validate_config(const ExperimentConfig& config);

// ---------------------------------------------------------------------------

struct CoverageRow {
    std::size_t n = 0;
    double x = 0.0;
    double threshold = 0.0;      // PAC deviation bound at level x
    double failure_bound = 0.0;  // e * e^{-x}, at face value
    bool vacuous = false;        // failure_bound >= 1
    std::size_t exceedances = 0;
    double exceedance_rate = 0.0;
    std::size_t reps = 0;
    double half_width = 0.0;  // 3 sqrt(p (1 - p) / reps), p = min(1, failure_bound)
    double max_ratio = 0.0;   // max_r deviation_r / threshold
    bool sound = true;        // exceedance_rate <= failure_bound + half_width
};

struct CoverageReport {
    ExperimentConfig config;
    std::string bound;  // "bounded" or "subgaussian"
    std::vector<CoverageRow> rows;
    std::vector<std::vector<double>> deviations;  // per n, per replication |R1 - L_P|
    double max_lp_std_error = 0.0;

    bool sound() const;
};

struct RateRow {
    std::size_t n = 0;
    double median_deviation = 0.0;
};

struct RateReport {
    ExperimentConfig config;
    std::vector<RateRow> rows;
    std::vector<std::vector<double>> deviations;
    double slope = 0.0;
    double intercept = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct StabilityRow {
    std::string algo;
    double q = 0.0;
    std::size_t n = 0;
    double lambda_or_k = 0.0;
    double s_q_hat = 0.0;
    double std_error = 0.0;
    double gamma_theory = 0.0;
    double gamma_std_error = 0.0;  // from a Monte Carlo ||Y||_{2q}
    bool dominated = false;
    std::string skipped;  // non-empty when the row was not evaluated
};

struct StabilitySweepReport {
    ExperimentConfig config;
    std::vector<StabilityRow> rows;

    bool all_dominated() const;
};

struct EfronSteinRow {
    std::string f;
    std::size_t n = 0;
    double q = 0.0;
    EfronSteinResult result;
};

struct EfronSteinReport {
    ExperimentConfig config;
    std::vector<EfronSteinRow> rows;

    bool all_pass() const;
};

struct BoundRow {
    std::string bound_name;
    double b_x = 0.0;
    double lambda = 0.0;
    double eta = 0.0;
    std::size_t n = 0;
    double q_or_x = 0.0;
    double value = 0.0;
    bool vacuous = false;
};

struct BoundsTableReport {
    ExperimentConfig config;
    std::vector<BoundRow> rows;
};

using Report = std::variant<CoverageReport, RateReport, StabilitySweepReport, EfronSteinReport, BoundsTableReport>;

/// Replication r at the i-th sample size draws D from
/// SeedSpec{base_seed, i}.substream(r).substream(0) and its test points from
/// .substream(1); deviation = |ridge LoO risk - MC prediction error|. Throws
/// PreconditionError outside the ridge bound domain or when the prediction
/// error standard error is not below 1% of the smallest threshold.
CoverageReport run_coverage(const ExperimentConfig& config);

/// Median deviation per n and the least-squares slope of log median vs log n,
/// with a 95% percentile bootstrap interval (1000 seeded resamples).
RateReport run_rate(const ExperimentConfig& config);

StabilitySweepReport run_stability_sweep(const ExperimentConfig& config);
EfronSteinReport run_efron_stein(const ExperimentConfig& config);
BoundsTableReport run_bounds_table(const ExperimentConfig& config);

Report run_experiment(const ExperimentConfig& config);

// True when a report records an empirically broken inequality beyond Monte
// Carlo slack (CLI exit code 4).
bool invariant_violated(const Report& report);

std::string summarize(const Report& report);

// ---------------------------------------------------------------------------

enum class EmitFormat { csv, json, svg };

std::vector<EmitFormat> parse_emit_formats(const std::string& list);

std::string report_csv(const Report& report);
std::string report_json(const Report& report);
// Throws PreconditionError for kinds without a figure (only coverage and rate).
std::string report_svg(const Report& report);

// File name `<kind>_<base_seed>.<ext>`.
std::string report_file_name(const Report& report, EmitFormat format);

// Writes one file per format into an existing directory without locking.
std::vector<std::filesystem::path> write_report_files(const Report& report, const std::vector<EmitFormat>& formats,
                                                      const std::filesystem::path& out_dir);

/// Writes `<kind>_<base_seed>.<ext>` for every format into out_dir, holding
/// `<out_dir>/.stabilab.lock` for the duration. Throws PreconditionError if
/// the directory is locked or not writable, or the report is empty.
std::vector<std::filesystem::path> emit_report(const Report& report, const std::vector<EmitFormat>& formats,
                                               const std::filesystem::path& out_dir);

// Exclusive lock file for a run directory.
class RunLock {
public:
    explicit RunLock(const std::filesystem::path& dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::filesystem::path path_;
};

}  // namespace stabilab
