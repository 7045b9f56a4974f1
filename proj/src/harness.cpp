#include "stabilab/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stabilab/learners.hpp"

namespace stabilab {

using Json = nlohmann::ordered_json;

namespace {

constexpr double kE = std::numbers::e;
// Stream indices reserved for draws that are not tied to a grid position.
constexpr std::uint64_t kBootstrapStream = 0xB0075742ULL;
constexpr std::uint64_t kYNormStream = 0x59A0E4ULL;

}  // namespace

std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::coverage: return "coverage";
        case ExperimentKind::rate: return "rate";
        case ExperimentKind::stability_sweep: return "stability_sweep";
        case ExperimentKind::efron_stein: return "efron_stein";
        case ExperimentKind::bounds_table: return "bounds_table";
    }
    return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
    for (auto k : {ExperimentKind::coverage, ExperimentKind::rate, ExperimentKind::stability_sweep,
                   ExperimentKind::efron_stein, ExperimentKind::bounds_table})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown experiment kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

void reject_unknown_keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    for (const auto& item : obj.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return item.key() == a; });
        if (!known) throw ConfigError(where + ": unknown field '" + item.key() + "'");
    }
}

const Json& require(const Json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
    return obj.at(key);
}

double as_number(const Json& j, const std::string& what) {
    if (!j.is_number()) throw ConfigError(what + " must be a number");
    return j.get<double>();
}

std::size_t as_count(const Json& j, const std::string& what) {
    if (!j.is_number_integer() || j.get<long long>() < 0) throw ConfigError(what + " must be a non-negative integer");
    return j.get<std::size_t>();
}

std::vector<double> as_numbers(const Json& j, const std::string& what) {
    if (j.is_number()) return {j.get<double>()};
    if (!j.is_array()) throw ConfigError(what + " must be a number or an array of numbers");
    std::vector<double> out;
    for (const auto& v : j) out.push_back(as_number(v, what));
    return out;
}

std::vector<std::size_t> as_counts(const Json& j, const std::string& what) {
    if (j.is_number()) return {as_count(j, what)};
    if (!j.is_array()) throw ConfigError(what + " must be an integer or an array of integers");
    std::vector<std::size_t> out;
    for (const auto& v : j) out.push_back(as_count(v, what));
    return out;
}

DataSpec parse_spec(const Json& j) {
    if (!j.is_object()) throw ConfigError("spec must be an object");
    reject_unknown_keys(j, {"d", "x_family", "b_x", "y_model", "beta_star", "noise_scale", "intercept", "b_y", "v"},
                        "spec");
    DataSpec s;
    try {
        s.d = as_count(require(j, "d", "spec"), "spec.d");
        s.x_family = x_family_from_string(require(j, "x_family", "spec").get<std::string>());
        s.b_x = as_number(require(j, "b_x", "spec"), "spec.b_x");
        s.y_model = y_model_from_string(require(j, "y_model", "spec").get<std::string>());
        s.beta_star = as_numbers(require(j, "beta_star", "spec"), "spec.beta_star");
        s.noise_scale = j.contains("noise_scale") ? as_number(j.at("noise_scale"), "spec.noise_scale") : 0.0;
        s.intercept = j.contains("intercept") ? as_number(j.at("intercept"), "spec.intercept") : 0.0;
        if (j.contains("b_y") && !j.at("b_y").is_null()) s.b_y = as_number(j.at("b_y"), "spec.b_y");
        if (j.contains("v") && !j.at("v").is_null()) s.v = as_number(j.at("v"), "spec.v");
        s.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("spec: ") + e.what());
    }
    return s;
}

Json spec_json(const DataSpec& s) {
    Json j;
    j["d"] = s.d;
    j["x_family"] = to_string(s.x_family);
    j["b_x"] = s.b_x;
    j["y_model"] = to_string(s.y_model);
    j["beta_star"] = s.beta_star;
    j["noise_scale"] = s.noise_scale;
    j["intercept"] = s.intercept;
    if (s.b_y) j["b_y"] = *s.b_y;
    if (s.v) j["v"] = *s.v;
    return j;
}

AlgorithmConfig parse_algorithm(const Json& j) {
    if (!j.is_object()) throw ConfigError("algorithm must be an object");
    const std::string type = require(j, "type", "algorithm").get<std::string>();
    AlgorithmConfig a;
    if (type == "ridge") {
        reject_unknown_keys(j, {"type", "lambda", "eta"}, "algorithm");
        a.type = AlgorithmConfig::Type::ridge;
        a.lambdas = as_numbers(require(j, "lambda", "algorithm"), "algorithm.lambda");
        a.eta = as_number(require(j, "eta", "algorithm"), "algorithm.eta");
        if (a.lambdas.empty()) throw ConfigError("algorithm.lambda must not be empty");
        for (double l : a.lambdas)
            if (!(l > 0.0) || !std::isfinite(l)) throw ConfigError("algorithm.lambda must be positive");
        if (!(a.eta > 0.0 && a.eta < 1.0)) throw ConfigError("algorithm.eta must lie in (0, 1)");
    } else if (type == "knn") {
        reject_unknown_keys(j, {"type", "k"}, "algorithm");
        a.type = AlgorithmConfig::Type::knn;
        a.ks = as_counts(require(j, "k", "algorithm"), "algorithm.k");
        if (a.ks.empty()) throw ConfigError("algorithm.k must not be empty");
        for (std::size_t k : a.ks)
            if (k < 1) throw ConfigError("algorithm.k must be >= 1");
    } else {
        throw ConfigError("algorithm.type must be 'ridge' or 'knn'");
    }
    return a;
}

template <class T>
Json scalar_or_array(const std::vector<T>& v) {
    if (v.size() == 1) return Json(v.front());
    return Json(v);
}

Json algorithm_json(const AlgorithmConfig& a) {
    Json j;
    if (a.type == AlgorithmConfig::Type::ridge) {
        j["type"] = "ridge";
        j["lambda"] = scalar_or_array(a.lambdas);
        j["eta"] = a.eta;
    } else {
        j["type"] = "knn";
        j["k"] = scalar_or_array(a.ks);
    }
    return j;
}

std::vector<double> as_grid(const Json& j, const std::string& what) {
    if (!j.is_array()) throw ConfigError(what + " must be an array");
    return as_numbers(j, what);
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text, std::optional<ExperimentKind> kind_hint) {
    Json j;
    try {
        j = Json::parse(json_text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    reject_unknown_keys(j,
                        {"kind", "spec", "algorithm", "n_grid", "q_grid", "x_grid", "reps", "test_m", "base_seed",
                         "out_dir", "j_policy", "statistics", "y_norm_draws"},
                        "config");

    ExperimentConfig c;
    try {
        if (j.contains("kind")) {
            c.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
            if (kind_hint && *kind_hint != c.kind)
                throw ConfigError("config kind '" + to_string(c.kind) + "' does not match command '" +
                                  to_string(*kind_hint) + "'");
        } else if (kind_hint) {
            c.kind = *kind_hint;
        } else {
            throw ConfigError("config: missing field 'kind'");
        }
        c.spec = parse_spec(require(j, "spec", "config"));
        c.algorithm = parse_algorithm(require(j, "algorithm", "config"));
        const Json& n_grid = require(j, "n_grid", "config");
        if (!n_grid.is_array()) throw ConfigError("n_grid must be an array");
        c.n_grid = as_counts(n_grid, "n_grid");
        if (j.contains("q_grid")) c.q_grid = as_grid(j.at("q_grid"), "q_grid");
        if (j.contains("x_grid")) c.x_grid = as_grid(j.at("x_grid"), "x_grid");
        if (j.contains("reps")) c.reps = as_count(j.at("reps"), "reps");
        if (j.contains("test_m")) c.test_m = as_count(j.at("test_m"), "test_m");
        const Json& seed = require(j, "base_seed", "config");
        if (!seed.is_number_integer()) throw ConfigError("base_seed must be an integer");
        c.base_seed = seed.is_number_unsigned() ? seed.get<std::uint64_t>()
                                                : static_cast<std::uint64_t>(seed.get<std::int64_t>());
        if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
        if (j.contains("j_policy")) c.j_policy = j_policy_from_string(j.at("j_policy").get<std::string>());
        if (j.contains("statistics")) {
            c.statistics.clear();
            for (const auto& s : j.at("statistics")) c.statistics.push_back(statistic_from_string(s.get<std::string>()));
        }
        if (j.contains("y_norm_draws")) c.y_norm_draws = as_count(j.at("y_norm_draws"), "y_norm_draws");
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    validate_config(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::optional<ExperimentKind> kind_hint) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), kind_hint);
}

std::string config_to_json(const ExperimentConfig& c) {
    Json j;
    j["kind"] = to_string(c.kind);
    j["spec"] = spec_json(c.spec);
    j["algorithm"] = algorithm_json(c.algorithm);
    j["n_grid"] = c.n_grid;
    j["q_grid"] = c.q_grid;
    j["x_grid"] = c.x_grid;
    j["reps"] = c.reps;
    j["test_m"] = c.test_m;
    j["base_seed"] = c.base_seed;
    j["out_dir"] = c.out_dir;
    j["j_policy"] = to_string(c.j_policy);
    Json stats = Json::array();
    for (Statistic s : c.statistics) stats.push_back(to_string(s));
    j["statistics"] = stats;
    j["y_norm_draws"] = c.y_norm_draws;
    return j.dump(2);
}

void validate_config(const ExperimentConfig& c) {
    try {
        c.spec.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("spec: ") + e.what());
    }
    if (c.n_grid.empty()) throw ConfigError("n_grid must not be empty");
    for (std::size_t n : c.n_grid)
        if (n < 2) throw ConfigError("n_grid entries must be >= 2");
    for (double q : c.q_grid)
        if (!(q >= 1.0) || !std::isfinite(q)) throw ConfigError("q_grid entries must be finite and >= 1");
    for (double x : c.x_grid)
        if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError("x_grid entries must be finite and positive");
    if (c.reps < 2) throw ConfigError("reps must be >= 2");
    if (c.test_m < 2) throw ConfigError("test_m must be >= 2");
    if (c.y_norm_draws < 2) throw ConfigError("y_norm_draws must be >= 2");

    const bool ridge = c.algorithm.type == AlgorithmConfig::Type::ridge;
    switch (c.kind) {
        case ExperimentKind::coverage:
            if (c.x_grid.empty()) throw ConfigError("coverage needs a nonempty x_grid");
            if (c.reps < 50) throw ConfigError("coverage needs reps >= 50");
            [[fallthrough]];
        case ExperimentKind::rate:
            if (!ridge) throw ConfigError(to_string(c.kind) + " runs ridge only");
            if (c.algorithm.lambdas.size() != 1) throw ConfigError(to_string(c.kind) + " needs a single lambda");
            break;
        case ExperimentKind::stability_sweep:
            if (c.q_grid.empty()) throw ConfigError("stability_sweep needs a nonempty q_grid");
            break;
        case ExperimentKind::efron_stein:
            if (c.q_grid.empty()) throw ConfigError("efron_stein needs a nonempty q_grid");
            if (c.statistics.empty()) throw ConfigError("efron_stein needs at least one statistic");
            if (ridge && c.algorithm.lambdas.size() != 1) throw ConfigError("efron_stein needs a single lambda");
            break;
        case ExperimentKind::bounds_table:
            if (!ridge) throw ConfigError("bounds_table runs ridge only");
            if (c.q_grid.empty() && c.x_grid.empty()) throw ConfigError("bounds_table needs a q_grid or an x_grid");
            break;
    }
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

struct DeviationDraws {
    std::vector<double> deviations;
    double max_lp_std_error = 0.0;
};

// |ridge LoO risk - MC prediction error| for every replication at one n.
DeviationDraws deviation_draws(const ExperimentConfig& c, std::size_t grid_index) {
    const std::size_t n = c.n_grid[grid_index];
    const double lambda = c.algorithm.lambdas.front();
    const SeedSpec stream{c.base_seed, grid_index};
    std::vector<double> dev(c.reps);
    std::vector<double> se(c.reps);
    parallel_for(c.reps, [&](std::size_t r) {
        const SeedSpec rs = stream.substream(r);
        const Dataset data = sample_dataset(c.spec, n, rs.substream(0));
        const double loo = ridge_loo_fast(data, lambda);
        const McEstimate lp = prediction_error_mc(ridge_fit(data, lambda), c.spec, c.test_m, CostKind::squared,
                                                  rs.substream(1));
        dev[r] = std::abs(loo - lp.estimate);
        se[r] = lp.std_error;
    });
    return {dev, *std::max_element(se.begin(), se.end())};
}

void check_bound_domain(const ExperimentConfig& c, double lambda, std::size_t n) {
    try {
        check_ridge_bound_domain(c.spec.b_x, lambda, c.algorithm.eta, n);
    } catch (const std::domain_error& e) {
        throw PreconditionError(std::string(e.what()) + " (lambda = " + std::to_string(lambda) + ")");
    }
}

double median(std::vector<double> v) {
    const std::size_t m = v.size();
    std::sort(v.begin(), v.end());
    return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

struct Line {
    double slope;
    double intercept;
};

Line least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const double m = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= m;
    my /= m;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

// Population norms ||Y||_q, analytic where available, else Monte Carlo on a
// stream keyed by the order so every experiment sees the same value.
class YNormCache {
public:
    explicit YNormCache(const ExperimentConfig& c) : config_(c) {}

    YNormValue get(double order) {
        const auto it = cache_.find(order);
        if (it != cache_.end()) return it->second;
        YNormValue value;
        if (has_analytic_y_norm(config_.spec)) {
            value = y_norm(config_.spec, order, YNormAnalytic{});
        } else {
            const SeedSpec seed = SeedSpec{config_.base_seed, kYNormStream}.substream(std::bit_cast<std::uint64_t>(order));
            value = y_norm(config_.spec, order, YNormMonteCarlo{config_.y_norm_draws, seed});
        }
        cache_.emplace(order, value);
        return value;
    }

private:
    const ExperimentConfig& config_;
    std::map<double, YNormValue> cache_;
};

bool subgaussian_spec(const DataSpec& spec) { return spec.y_model == YModel::linear_gaussian; }

}  // namespace

bool CoverageReport::sound() const {
    return std::all_of(rows.begin(), rows.end(), [](const CoverageRow& r) { return r.sound; });
}

CoverageReport run_coverage(const ExperimentConfig& config) {
    validate_config(config);
    if (config.kind != ExperimentKind::coverage) throw ConfigError("run_coverage needs kind coverage");
    const double lambda = config.algorithm.lambdas.front();
    const bool subg = subgaussian_spec(config.spec);
    if (!subg && !config.spec.b_y) throw PreconditionError("coverage: bounded case needs spec.b_y");

    CoverageReport report;
    report.config = config;
    report.bound = subg ? "subgaussian" : "bounded";

    // Thresholds first so the precision gate can reject before any sampling.
    std::vector<std::vector<double>> thresholds;
    double min_threshold = std::numeric_limits<double>::infinity();
    for (std::size_t n : config.n_grid) {
        check_bound_domain(config, lambda, n);
        const GammaSet g = gamma_set(config.spec.b_x, lambda, config.algorithm.eta);
        std::vector<double> row;
        for (double x : config.x_grid) {
            const double t = subg ? pac_bound_subgaussian(g, config.spec.mean_y(), config.spec.subgaussian_v(), n, x)
                                  : pac_bound_bounded(g, *config.spec.b_y, n, x);
            row.push_back(t);
            if (t > 0.0) min_threshold = std::min(min_threshold, t);
        }
        thresholds.push_back(row);
    }

    for (std::size_t ni = 0; ni < config.n_grid.size(); ++ni) {
        DeviationDraws draws = deviation_draws(config, ni);
        report.max_lp_std_error = std::max(report.max_lp_std_error, draws.max_lp_std_error);
        report.deviations.push_back(std::move(draws.deviations));
    }
    if (std::isfinite(min_threshold) && !(report.max_lp_std_error < 0.01 * min_threshold)) {
        std::ostringstream msg;
        msg << "coverage: prediction-error standard error " << report.max_lp_std_error
            << " is not below 1% of the smallest threshold " << min_threshold << "; increase test_m";
        throw PreconditionError(msg.str());
    }

    const double reps = static_cast<double>(config.reps);
    for (std::size_t ni = 0; ni < config.n_grid.size(); ++ni) {
        const auto& dev = report.deviations[ni];
        for (std::size_t xi = 0; xi < config.x_grid.size(); ++xi) {
            CoverageRow row;
            row.n = config.n_grid[ni];
            row.x = config.x_grid[xi];
            row.threshold = thresholds[ni][xi];
            row.failure_bound = kE * std::exp(-row.x);
            row.vacuous = row.failure_bound >= 1.0;
            row.reps = config.reps;
            for (double d : dev) {
                if (d > row.threshold) ++row.exceedances;
                const double ratio = row.threshold > 0.0 ? d / row.threshold
                                                         : (d > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
                row.max_ratio = std::max(row.max_ratio, ratio);
            }
            row.exceedance_rate = static_cast<double>(row.exceedances) / reps;
            const double p = std::min(1.0, row.failure_bound);
            row.half_width = 3.0 * std::sqrt(p * (1.0 - p) / reps);
            row.sound = row.exceedance_rate <= row.failure_bound + row.half_width;
            report.rows.push_back(row);
        }
    }
    return report;
}

RateReport run_rate(const ExperimentConfig& config) {
    validate_config(config);
    if (config.kind != ExperimentKind::rate) throw ConfigError("run_rate needs kind rate");
    const auto& grid = config.n_grid;
    if (grid.size() < 4) throw PreconditionError("rate: n_grid needs at least 4 values");
    if (config.reps < 100) throw PreconditionError("rate: reps must be >= 100");
    const double ratio = static_cast<double>(grid[1]) / static_cast<double>(grid[0]);
    if (!(ratio > 1.0)) throw PreconditionError("rate: n_grid must be increasing");
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double r = static_cast<double>(grid[i]) / static_cast<double>(grid[i - 1]);
        if (std::abs(r / ratio - 1.0) > 0.05) throw PreconditionError("rate: n_grid must be geometrically spaced");
    }

    RateReport report;
    report.config = config;
    std::vector<double> log_n;
    std::vector<double> log_med;
    for (std::size_t ni = 0; ni < grid.size(); ++ni) {
        report.deviations.push_back(deviation_draws(config, ni).deviations);
        const double med = median(report.deviations.back());
        report.rows.push_back({grid[ni], med});
        if (!(med > 0.0)) throw PreconditionError("rate: degenerate median deviation at n = " + std::to_string(grid[ni]));
        log_n.push_back(std::log(static_cast<double>(grid[ni])));
        log_med.push_back(std::log(med));
    }
    const Line fit = least_squares(log_n, log_med);
    report.slope = fit.slope;
    report.intercept = fit.intercept;

    constexpr std::size_t kResamples = 1000;
    const SeedSpec boot{config.base_seed, kBootstrapStream};
    std::vector<double> slopes(kResamples, std::numeric_limits<double>::quiet_NaN());
    parallel_for(kResamples, [&](std::size_t b) {
        auto engine = boot.substream(b).engine();
        std::vector<double> y(grid.size());
        std::vector<double> sample(config.reps);
        for (std::size_t ni = 0; ni < grid.size(); ++ni) {
            const auto& dev = report.deviations[ni];
            std::uniform_int_distribution<std::size_t> pick(0, dev.size() - 1);
            for (double& s : sample) s = dev[pick(engine)];
            const double med = median(sample);
            if (!(med > 0.0)) return;
            y[ni] = std::log(med);
        }
        slopes[b] = least_squares(log_n, y).slope;
    });
    std::erase_if(slopes, [](double s) { return std::isnan(s); });
    if (slopes.empty()) throw PreconditionError("rate: every bootstrap resample was degenerate");
    std::sort(slopes.begin(), slopes.end());
    const double last = static_cast<double>(slopes.size() - 1);
    report.ci_low = slopes[static_cast<std::size_t>(std::floor(0.025 * last))];
    report.ci_high = slopes[static_cast<std::size_t>(std::ceil(0.975 * last))];
    return report;
}

bool StabilitySweepReport::all_dominated() const {
    return std::all_of(rows.begin(), rows.end(), [](const StabilityRow& r) { return !r.skipped.empty() || r.dominated; });
}

StabilitySweepReport run_stability_sweep(const ExperimentConfig& config) {
    validate_config(config);
    if (config.kind != ExperimentKind::stability_sweep) throw ConfigError("run_stability_sweep needs kind stability_sweep");
    for (double q : config.q_grid)
        if (q > 8.0) throw PreconditionError("stability_sweep: q_grid must lie in [1, 8]");

    StabilitySweepReport report;
    report.config = config;
    YNormCache norms(config);
    const bool ridge = config.algorithm.type == AlgorithmConfig::Type::ridge;
    const std::size_t params = ridge ? config.algorithm.lambdas.size() : config.algorithm.ks.size();

    std::uint64_t group = 0;
    for (std::size_t n : config.n_grid) {
        for (std::size_t pi = 0; pi < params; ++pi, ++group) {
            StabilityConfig sc;
            sc.n = n;
            sc.reps = config.reps;
            sc.j_policy = config.j_policy;
            sc.seed = SeedSpec{config.base_seed, group};

            std::vector<StabilityRow> rows;
            for (double q : config.q_grid) {
                StabilityRow row;
                row.algo = ridge ? "ridge" : "knn";
                row.q = q;
                row.n = n;
                row.lambda_or_k = ridge ? config.algorithm.lambdas[pi] : static_cast<double>(config.algorithm.ks[pi]);
                rows.push_back(row);
            }

            Algorithm algorithm;
            CostKind cost_kind;
            if (ridge) {
                const double lambda = config.algorithm.lambdas[pi];
                algorithm = Ridge{lambda};
                cost_kind = CostKind::squared;
                std::string violation;
                try {
                    check_ridge_stability_domain(config.spec.b_x, lambda, config.algorithm.eta, n);
                } catch (const std::domain_error& e) {
                    violation = e.what();
                }
                for (auto& row : rows) {
                    if (!violation.empty()) {
                        row.skipped = violation;
                        continue;
                    }
                    const YNormValue yn = norms.get(2.0 * row.q);
                    row.gamma_theory = ridge_gamma_q({config.spec.b_x, lambda, config.algorithm.eta, n, yn.value});
                    row.gamma_std_error = yn.value > 0.0 ? row.gamma_theory * 2.0 * yn.std_error / yn.value : 0.0;
                }
            } else {
                const std::size_t k = config.algorithm.ks[pi];
                algorithm = Knn{k};
                cost_kind = CostKind::zero_one;
                if (config.spec.y_model != YModel::bernoulli_label)
                    throw PreconditionError("stability_sweep: knn needs binary labels (bernoulli_label)");
                for (auto& row : rows) {
                    if (row.q != 1.0) {
                        row.skipped = "knn stability constant exists for q = 1 only";
                    } else if (n < k + 2) {
                        row.skipped = "knn needs n >= k + 2";
                    } else {
                        row.gamma_theory = knn_gamma_1(k, n);
                    }
                }
            }

            std::vector<double> qs;
            for (const auto& row : rows)
                if (row.skipped.empty()) qs.push_back(row.q);
            if (!qs.empty()) {
                const auto estimates = empirical_lq_stability(algorithm, config.spec, cost_kind, sc, qs);
                std::size_t e = 0;
                for (auto& row : rows) {
                    if (!row.skipped.empty()) continue;
                    row.s_q_hat = estimates[e].s_q_hat;
                    row.std_error = estimates[e].std_error;
                    ++e;
                    const double slack = 3.0 * std::hypot(row.std_error, row.gamma_std_error);
                    row.dominated = row.s_q_hat <= row.gamma_theory + slack;
                }
            }
            report.rows.insert(report.rows.end(), rows.begin(), rows.end());
        }
    }
    return report;
}

bool EfronSteinReport::all_pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const EfronSteinRow& r) { return r.result.pass(); });
}

EfronSteinReport run_efron_stein(const ExperimentConfig& config) {
    validate_config(config);
    if (config.kind != ExperimentKind::efron_stein) throw ConfigError("run_efron_stein needs kind efron_stein");
    for (double q : config.q_grid)
        if (q < 2.0 || q > 8.0) throw PreconditionError("efron_stein: q_grid must lie in [2, 8]");
    const double lambda =
        config.algorithm.type == AlgorithmConfig::Type::ridge ? config.algorithm.lambdas.front() : 1.0;

    EfronSteinReport report;
    report.config = config;
    std::uint64_t index = 0;
    for (Statistic f : config.statistics) {
        for (std::size_t n : config.n_grid) {
            for (double q : config.q_grid) {
                EfronSteinRow row;
                row.f = to_string(f);
                row.n = n;
                row.q = q;
                row.result = efron_stein_moment_check(f, config.spec, n, q, config.reps,
                                                      SeedSpec{config.base_seed, index++}, lambda);
                report.rows.push_back(row);
            }
        }
    }
    return report;
}

BoundsTableReport run_bounds_table(const ExperimentConfig& config) {
    validate_config(config);
    if (config.kind != ExperimentKind::bounds_table) throw ConfigError("run_bounds_table needs kind bounds_table");
    for (double q : config.q_grid)
        if (q < 2.0) throw PreconditionError("bounds_table: moment bounds need q >= 2");
    const DataSpec& spec = config.spec;
    const bool subg = subgaussian_spec(spec);
    const double eta = config.algorithm.eta;

    BoundsTableReport report;
    report.config = config;
    YNormCache norms(config);
    for (std::size_t n : config.n_grid) {
        for (double lambda : config.algorithm.lambdas) {
            check_bound_domain(config, lambda, n);
            const GammaSet g = gamma_set(spec.b_x, lambda, eta);
            // Largest possible squared error of a ridge predictor when |Y| <= b_y.
            const double trivial = spec.b_y ? std::pow(*spec.b_y * (1.0 + spec.b_x * spec.b_x / lambda), 2.0)
                                            : std::numeric_limits<double>::infinity();
            auto add = [&](const std::string& name, double q_or_x, double value, bool vacuous) {
                report.rows.push_back({name, spec.b_x, lambda, eta, n, q_or_x, value, vacuous || value >= trivial});
            };
            for (double q : config.q_grid) {
                const double yq = norms.get(q).value;
                const double y2q = norms.get(2.0 * q).value;
                add("ridge_moment_centered", q, ridge_moment_bound(g, q, n, yq, y2q, true), false);
                add("ridge_moment_uncentered", q, ridge_moment_bound(g, q, n, yq, y2q, false), false);
                add("ridge_variance_term", q, ridge_variance_term_bound(spec.b_x, lambda, yq, y2q), false);
                add("ridge_stability_gamma", q, ridge_gamma_q({spec.b_x, lambda, eta, n, y2q}), false);
            }
            for (double x : config.x_grid) {
                const bool vacuous_prob = kE * std::exp(-x) >= 1.0;
                if (subg) {
                    add("pac_subgaussian", x, pac_bound_subgaussian(g, spec.mean_y(), spec.subgaussian_v(), n, x),
                        vacuous_prob);
                } else if (spec.b_y) {
                    add("pac_bounded", x, pac_bound_bounded(g, *spec.b_y, n, x), vacuous_prob);
                }
            }
        }
    }
    return report;
}

Report run_experiment(const ExperimentConfig& config) {
    switch (config.kind) {
        case ExperimentKind::coverage: return run_coverage(config);
        case ExperimentKind::rate: return run_rate(config);
        case ExperimentKind::stability_sweep: return run_stability_sweep(config);
        case ExperimentKind::efron_stein: return run_efron_stein(config);
        case ExperimentKind::bounds_table: return run_bounds_table(config);
    }
    throw ConfigError("unknown experiment kind");
}

bool invariant_violated(const Report& report) {
    if (const auto* r = std::get_if<CoverageReport>(&report)) {
        for (const auto& row : r->rows)
            if (!row.sound || !std::isfinite(row.max_ratio)) return true;
        return false;
    }
    if (const auto* r = std::get_if<StabilitySweepReport>(&report)) return !r->all_dominated();
    if (const auto* r = std::get_if<EfronSteinReport>(&report)) return !r->all_pass();
    return false;
}

}  // namespace stabilab
