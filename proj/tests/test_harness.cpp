#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "stabilab/harness.hpp"
#include "support.hpp"

using namespace stabilab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig base_config(ExperimentKind kind, DataSpec spec) {
    ExperimentConfig c;
    c.kind = kind;
    c.spec = std::move(spec);
    c.algorithm.type = AlgorithmConfig::Type::ridge;
    c.algorithm.lambdas = {1.0};
    c.algorithm.eta = 0.5;
    c.base_seed = 17;
    return c;
}

ExperimentConfig small_coverage(DataSpec spec = testing_support::clipped_spec(3)) {
    ExperimentConfig c = base_config(ExperimentKind::coverage, std::move(spec));
    c.n_grid = {40, 80};
    c.x_grid = {1.0, 2.0, 3.0};
    c.reps = 60;
    c.test_m = 4000;
    return c;
}

ExperimentConfig small_rate(DataSpec spec = testing_support::clipped_spec(3)) {
    ExperimentConfig c = base_config(ExperimentKind::rate, std::move(spec));
    c.n_grid = {32, 64, 128, 256};
    c.reps = 100;
    c.test_m = 4000;
    return c;
}

ExperimentConfig small_sweep() {
    ExperimentConfig c = base_config(ExperimentKind::stability_sweep, testing_support::clipped_spec(2));
    c.n_grid = {20};
    c.q_grid = {1.0, 2.0};
    c.algorithm.lambdas = {0.01, 1.0};
    c.reps = 60;
    return c;
}

ExperimentConfig small_efron() {
    ExperimentConfig c = base_config(ExperimentKind::efron_stein, testing_support::clipped_spec(2));
    c.n_grid = {10};
    c.q_grid = {2.0};
    c.reps = 200;
    return c;
}

ExperimentConfig small_bounds() {
    ExperimentConfig c = base_config(ExperimentKind::bounds_table, testing_support::clipped_spec(2));
    c.n_grid = {100, 1000};
    c.q_grid = {2.0, 4.0};
    c.x_grid = {1.0, 5.0};
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t count_of(const std::string& hay, const std::string& needle) {
    std::size_t count = 0;
    for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++count;
    return count;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("stabilab_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

const char* kMinimalJson = R"({
  "kind": "coverage",
  "spec": {"d": 2, "x_family": "uniform_ball", "b_x": 1.0, "y_model": "linear_clipped",
           "beta_star": [0.5, -0.25], "noise_scale": 0.2, "b_y": 1.0},
  "algorithm": {"type": "ridge", "lambda": 1.0, "eta": 0.5},
  "n_grid": [50, 100],
  "x_grid": [1, 2, 3],
  "reps": 100,
  "test_m": 5000,
  "base_seed": 42
})";

}  // namespace

TEST_CASE("config: parse and emit round trip") {
    const ExperimentConfig c = parse_config(kMinimalJson);
    CHECK(c.kind == ExperimentKind::coverage);
    CHECK(c.spec.d == 2);
    CHECK(c.spec.beta_star == std::vector<double>{0.5, -0.25});
    CHECK(c.n_grid == std::vector<std::size_t>{50, 100});
    CHECK(c.base_seed == 42);
    CHECK(c.j_policy == JPolicy::average_all);
    CHECK(parse_config(config_to_json(c)) == c);

    ExperimentConfig k = base_config(ExperimentKind::stability_sweep, testing_support::label_spec(2, 0.5));
    k.algorithm.type = AlgorithmConfig::Type::knn;
    k.algorithm.ks = {1, 3, 5};
    k.n_grid = {50};
    k.q_grid = {1.0};
    k.base_seed = 18446744073709551615ULL;
    k.j_policy = JPolicy::fixed_last;
    CHECK(parse_config(config_to_json(k)) == k);

    ExperimentConfig g = small_bounds();
    g.spec.y_model = YModel::linear_gaussian;
    g.spec.b_y.reset();
    g.spec.v = 0.3;
    g.algorithm.lambdas = {0.1, 0.7, 3.0};
    g.statistics = {Statistic::max};
    CHECK(parse_config(config_to_json(g)) == g);
    CHECK(config_to_json(parse_config(config_to_json(g))) == config_to_json(g));
}

TEST_CASE("config: malformed input is a ConfigError") {
    CHECK_THROWS_AS(parse_config("{ not json"), ConfigError);
    CHECK_THROWS_AS(parse_config("[1, 2]"), ConfigError);

    auto with = [](const std::string& from, const std::string& to) {
        std::string s = kMinimalJson;
        const auto pos = s.find(from);
        REQUIRE(pos != std::string::npos);
        return s.replace(pos, from.size(), to);
    };
    CHECK_THROWS_AS(parse_config(with("\"reps\": 100", "\"reps\": 100, \"repz\": 3")), ConfigError);
    CHECK_THROWS_AS(parse_config(with("\"b_y\": 1.0", "\"b_y\": 1.0, \"colour\": 1")), ConfigError);
    CHECK_THROWS_AS(parse_config(with("\"uniform_ball\"", "\"sphere\"")), ConfigError);
    CHECK_THROWS_AS(parse_config(with("\"ridge\"", "\"lasso\"")), ConfigError);
    CHECK_THROWS_AS(parse_config(with("\"eta\": 0.5", "\"eta\": 1.5")), ConfigError);
    CHECK_THROWS_AS(parse_config(with("\"lambda\": 1.0", "\"lambda\": -1.0")), ConfigError);
    CHECK_THROWS_AS(parse_config(with("\"base_seed\": 42", "\"base_seed\": \"x\"")), ConfigError);
    CHECK_THROWS_AS(parse_config(with("\"n_grid\": [50, 100]", "\"n_grid\": [1]")), ConfigError);
    CHECK_THROWS_AS(parse_config(with("\"n_grid\": [50, 100]", "\"n_grid\": 50")), ConfigError);
    CHECK_THROWS_AS(parse_config(with("\"b_y\": 1.0", "\"b_y\": 0.1")), ConfigError);  // b_y < ||beta|| b_x

    // kind from the command when absent, rejected when it disagrees
    const std::string no_kind = with("\"kind\": \"coverage\",", "");
    CHECK_THROWS_AS(parse_config(no_kind), ConfigError);
    CHECK(parse_config(no_kind, ExperimentKind::coverage).kind == ExperimentKind::coverage);
    CHECK_THROWS_AS(parse_config(kMinimalJson, ExperimentKind::rate), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config: per-kind validation") {
    ExperimentConfig c = small_coverage();
    c.x_grid.clear();
    CHECK_THROWS_AS(validate_config(c), ConfigError);
    c = small_coverage();
    c.reps = 49;
    CHECK_THROWS_AS(validate_config(c), ConfigError);
    c = small_coverage();
    c.algorithm.lambdas = {1.0, 2.0};
    CHECK_THROWS_AS(validate_config(c), ConfigError);
    c = small_coverage();
    c.x_grid = {0.0};
    CHECK_THROWS_AS(validate_config(c), ConfigError);

    ExperimentConfig s = small_sweep();
    s.q_grid.clear();
    CHECK_THROWS_AS(validate_config(s), ConfigError);
    ExperimentConfig e = small_efron();
    e.statistics.clear();
    CHECK_THROWS_AS(validate_config(e), ConfigError);
    ExperimentConfig b = small_bounds();
    b.q_grid.clear();
    b.x_grid.clear();
    CHECK_THROWS_AS(validate_config(b), ConfigError);
    b = small_bounds();
    b.algorithm.type = AlgorithmConfig::Type::knn;
    CHECK_THROWS_AS(validate_config(b), ConfigError);

    CHECK_THROWS_AS(parse_emit_formats("csv,pdf"), ConfigError);
    CHECK(parse_emit_formats("json,csv,json").size() == 2);
}

TEST_CASE("coverage: Y = 0 gives zero deviations and zero exceedances") {
    const CoverageReport r = run_coverage(small_coverage(testing_support::zero_spec(3)));
    CHECK(r.bound == "bounded");
    REQUIRE(r.rows.size() == 6);
    for (const auto& dev : r.deviations)
        for (double d : dev) CHECK(d == 0.0);
    for (const auto& row : r.rows) {
        CHECK(row.exceedances == 0);
        CHECK(row.max_ratio == 0.0);
        CHECK(row.sound);
    }
    CHECK_FALSE(invariant_violated(Report{r}));
}

TEST_CASE("coverage: rows, thresholds and vacuity") {
    ExperimentConfig c = small_coverage();
    c.x_grid = {0.5, 1.0, 40.0};
    const CoverageReport r = run_coverage(c);
    REQUIRE(r.rows.size() == 6);
    const GammaSet g = gamma_set(1.0, 1.0, 0.5);
    for (const auto& row : r.rows) {
        CHECK(row.threshold == doctest::Approx(pac_bound_bounded(g, 1.0, row.n, row.x)).epsilon(1e-15));
        CHECK(row.failure_bound == doctest::Approx(std::numbers::e * std::exp(-row.x)).epsilon(1e-15));
        CHECK(row.vacuous == (row.x <= 1.0));
        CHECK(row.reps == 60);
        CHECK(row.exceedance_rate == static_cast<double>(row.exceedances) / 60.0);
        if (row.x == 40.0) {
            CHECK(row.exceedances == 0);
            CHECK(row.max_ratio < 1.0);
        }
    }
    CHECK(r.sound());
    CHECK(r.max_lp_std_error < 0.01 * r.rows.front().threshold);
}

TEST_CASE("coverage: preconditions") {
    ExperimentConfig c = small_coverage();
    c.algorithm.lambdas = {1e-3};
    CHECK_THROWS_AS(run_coverage(c), PreconditionError);

    // A tiny declared variance proxy shrinks the threshold below what test_m can resolve.
    DataSpec g;
    g.d = 2;
    g.x_family = XFamily::uniform_ball;
    g.y_model = YModel::linear_gaussian;
    g.beta_star = {0.0, 0.0};
    g.noise_scale = 1.0;
    g.v = 1e-9;
    ExperimentConfig gc = small_coverage(g);
    gc.test_m = 10;
    CHECK_THROWS_AS(run_coverage(gc), PreconditionError);

    ExperimentConfig wrong = small_coverage();
    wrong.kind = ExperimentKind::rate;
    CHECK_THROWS_AS(run_coverage(wrong), ConfigError);
}

TEST_CASE("coverage: sub-Gaussian case uses the Gaussian threshold") {
    DataSpec g;
    g.d = 2;
    g.x_family = XFamily::uniform_ball;
    g.y_model = YModel::linear_gaussian;
    g.beta_star = {0.3, -0.2};
    g.noise_scale = 0.5;
    g.intercept = 0.1;
    ExperimentConfig c = small_coverage(g);
    c.n_grid = {50};
    c.x_grid = {2.0};
    c.reps = 50;
    c.test_m = 2000;
    const CoverageReport r = run_coverage(c);
    CHECK(r.bound == "subgaussian");
    const GammaSet gs = gamma_set(1.0, 1.0, 0.5);
    CHECK(r.rows[0].threshold == doctest::Approx(pac_bound_subgaussian(gs, 0.1, g.subgaussian_v(), 50, 2.0)));
    CHECK(r.rows[0].exceedances == 0);
}

TEST_CASE("rate: preconditions") {
    CHECK_THROWS_AS(run_rate(small_rate(testing_support::zero_spec(2))), PreconditionError);
    ExperimentConfig c = small_rate();
    c.n_grid = {32, 64, 128};
    CHECK_THROWS_AS(run_rate(c), PreconditionError);
    c = small_rate();
    c.n_grid = {32, 64, 100, 256};
    CHECK_THROWS_AS(run_rate(c), PreconditionError);
    c = small_rate();
    c.reps = 99;
    CHECK_THROWS_AS(run_rate(c), PreconditionError);
}

TEST_CASE("rate: fit, interval and figure") {
    const RateReport r = run_rate(small_rate());
    REQUIRE(r.rows.size() == 4);
    CHECK(r.slope < 0.0);
    CHECK(r.ci_low <= r.slope);
    CHECK(r.slope <= r.ci_high);
    // The fitted line goes through the median points in least squares.
    double resid = 0.0;
    for (const auto& row : r.rows)
        resid += std::log(row.median_deviation) - (r.intercept + r.slope * std::log(static_cast<double>(row.n)));
    CHECK(std::abs(resid) < 1e-9);
    const std::string svg = report_svg(Report{r});
    CHECK(count_of(svg, "<circle") == 4);
    CHECK(svg.rfind("<svg", 0) == 0);
}

TEST_CASE("stability sweep: ridge rows and domain skips") {
    const StabilitySweepReport r = run_stability_sweep(small_sweep());
    REQUIRE(r.rows.size() == 4);
    for (const auto& row : r.rows) {
        CHECK(row.algo == "ridge");
        if (row.lambda_or_k == 0.01) {
            CHECK_FALSE(row.skipped.empty());
        } else {
            CHECK(row.skipped.empty());
            CHECK(row.s_q_hat > 0.0);
            CHECK(row.dominated);
        }
    }
    CHECK(r.all_dominated());
    const std::string csv = report_csv(Report{r});
    CHECK(csv.rfind("algo,q,n,lambda_or_k,s_q_hat,std_error,gamma_theory,dominated\n", 0) == 0);
    CHECK(count_of(csv, "skipped") == 2);

    ExperimentConfig z = small_sweep();
    z.spec = testing_support::zero_spec(2);
    z.algorithm.lambdas = {1.0};
    for (const auto& row : run_stability_sweep(z).rows) {
        CHECK(row.s_q_hat == 0.0);
        CHECK(row.gamma_theory == 0.0);
        CHECK(row.dominated);
    }
}

TEST_CASE("stability sweep: knn rows report the closed-form constant") {
    ExperimentConfig c = base_config(ExperimentKind::stability_sweep, testing_support::label_spec(2, 0.5));
    c.algorithm.type = AlgorithmConfig::Type::knn;
    c.algorithm.ks = {1, 3};
    c.n_grid = {4, 30};
    c.q_grid = {1.0, 2.0};
    c.reps = 200;
    const StabilitySweepReport r = run_stability_sweep(c);
    REQUIRE(r.rows.size() == 8);
    for (const auto& row : r.rows) {
        const auto k = static_cast<std::size_t>(row.lambda_or_k);
        if (row.q != 1.0 || row.n < k + 2) {
            CHECK_FALSE(row.skipped.empty());
        } else {
            CHECK(row.gamma_theory == knn_gamma_1(k, row.n));
            CHECK(row.dominated);
        }
    }
    ExperimentConfig bad = c;
    bad.spec = testing_support::clipped_spec(2);
    CHECK_THROWS_AS(run_stability_sweep(bad), PreconditionError);
    ExperimentConfig big_q = small_sweep();
    big_q.q_grid = {9.0};
    CHECK_THROWS_AS(run_stability_sweep(big_q), PreconditionError);
}

TEST_CASE("efron-stein experiment") {
    const EfronSteinReport r = run_efron_stein(small_efron());
    REQUIRE(r.rows.size() == 3);
    CHECK(r.rows[0].f == "constant");
    CHECK(r.rows[0].result.lhs == 0.0);
    CHECK(r.rows[0].result.rhs == 0.0);
    CHECK(r.all_pass());
    ExperimentConfig c = small_efron();
    c.q_grid = {1.5};
    CHECK_THROWS_AS(run_efron_stein(c), PreconditionError);
}

TEST_CASE("bounds table matches the direct evaluators") {
    const BoundsTableReport r = run_bounds_table(small_bounds());
    // per n: 4 rows per q + 1 per x
    REQUIRE(r.rows.size() == 2 * (2 * 4 + 2));
    const GammaSet g = gamma_set(1.0, 1.0, 0.5);
    for (const auto& row : r.rows) {
        CHECK(row.b_x == 1.0);
        CHECK(row.lambda == 1.0);
        CHECK(row.eta == 0.5);
        if (row.bound_name == "pac_bounded") {
            CHECK(row.value == pac_bound_bounded(g, 1.0, row.n, row.q_or_x));
            CHECK(row.vacuous == (row.q_or_x == 1.0 || row.value >= 4.0));
        }
        if (row.bound_name == "ridge_stability_gamma") CHECK(row.value > 0.0);
    }
    ExperimentConfig c = small_bounds();
    c.q_grid = {1.5};
    CHECK_THROWS_AS(run_bounds_table(c), PreconditionError);
    c = small_bounds();
    c.n_grid = {5};
    CHECK_THROWS_AS(run_bounds_table(c), PreconditionError);
}

TEST_CASE("invariant_violated flags broken rows") {
    CoverageReport c;
    c.rows.push_back(CoverageRow{});
    CHECK_FALSE(invariant_violated(Report{c}));
    c.rows[0].sound = false;
    CHECK(invariant_violated(Report{c}));
    StabilitySweepReport s;
    s.rows.push_back(StabilityRow{});
    CHECK(invariant_violated(Report{s}));
    s.rows[0].skipped = "domain";
    CHECK_FALSE(invariant_violated(Report{s}));
    EfronSteinReport e;
    e.rows.push_back(EfronSteinRow{"mean", 10, 2.0, EfronSteinResult{1.0, 0.5, 0.01, 0.01}});
    CHECK(invariant_violated(Report{e}));
    CHECK_FALSE(invariant_violated(Report{BoundsTableReport{}}));
}

TEST_CASE("emit: files, byte identity, lock and errors") {
    TempDir tmp("emit");
    const Report report = run_experiment(small_coverage());
    const auto files = emit_report(report, {EmitFormat::csv, EmitFormat::json, EmitFormat::svg}, tmp.path / "a");
    REQUIRE(files.size() == 3);
    CHECK(files[0].filename() == "coverage_17.csv");
    CHECK(files[1].filename() == "coverage_17.json");
    CHECK(files[2].filename() == "coverage_17.svg");
    CHECK_FALSE(fs::exists(tmp.path / "a" / ".stabilab.lock"));

    // Same config, same bytes.
    const Report again = run_experiment(small_coverage());
    emit_report(again, {EmitFormat::csv, EmitFormat::json, EmitFormat::svg}, tmp.path / "b");
    for (const char* name : {"coverage_17.csv", "coverage_17.json", "coverage_17.svg"})
        CHECK(slurp(tmp.path / "a" / name) == slurp(tmp.path / "b" / name));

    const std::string json = slurp(tmp.path / "a" / "coverage_17.json");
    const auto parsed_config = json.find("\"config\"");
    CHECK(parsed_config != std::string::npos);
    CHECK(json.find("\"invariant_violated\": false") != std::string::npos);

    {
        RunLock held(tmp.path / "a");
        CHECK_THROWS_AS(emit_report(report, {EmitFormat::csv}, tmp.path / "a"), PreconditionError);
        CHECK_THROWS_AS(RunLock(tmp.path / "a"), PreconditionError);
    }
    CHECK_NOTHROW(emit_report(report, {EmitFormat::csv}, tmp.path / "a"));

    std::ofstream(tmp.path / "plain_file") << "x";
    CHECK_THROWS_AS(emit_report(report, {EmitFormat::csv}, tmp.path / "plain_file" / "sub"), PreconditionError);
    CHECK_THROWS_AS(emit_report(Report{CoverageReport{}}, {EmitFormat::csv}, tmp.path / "c"), PreconditionError);

    const Report table = run_experiment(small_bounds());
    CHECK_THROWS_AS(report_svg(table), PreconditionError);
    CHECK(report_csv(table).rfind("bound_name,b_x,lambda,eta,n,q_or_x,value,vacuous\n", 0) == 0);
}

TEST_CASE("results do not depend on the worker count") {
    const ExperimentConfig c = small_sweep();
    ::setenv("STABILAB_THREADS", "1", 1);
    const std::string one = report_json(run_experiment(c));
    ::setenv("STABILAB_THREADS", "3", 1);
    const std::string three = report_json(run_experiment(c));
    ::unsetenv("STABILAB_THREADS");
    CHECK(one == three);
}

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(STABILAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("cli exit codes") {
    TempDir tmp("cli");
    const fs::path good = tmp.path / "good.json";
    {
        ExperimentConfig c = small_bounds();
        c.out_dir = (tmp.path / "out").string();
        std::ofstream(good) << config_to_json(c);
    }
    CHECK(run_cli("bounds-table --config " + good.string()) == 0);
    CHECK(fs::exists(tmp.path / "out" / "bounds_table_17.csv"));
    CHECK(fs::exists(tmp.path / "out" / "bounds_table_17.json"));
    CHECK(run_cli("bounds-table --config " + good.string() + " --seed 5 --out " + (tmp.path / "o2").string()) == 0);
    CHECK(fs::exists(tmp.path / "o2" / "bounds_table_5.csv"));

    // config errors
    CHECK(run_cli("bounds-table --config " + (tmp.path / "missing.json").string()) == 2);
    CHECK(run_cli("coverage --config " + good.string()) == 2);  // kind mismatch
    CHECK(run_cli("bounds-table --config " + good.string() + " --emit svg") == 2);
    CHECK(run_cli("bounds-table --config " + good.string() + " --emit xml") == 2);
    CHECK(run_cli("bounds-table") == 2);
    CHECK(run_cli("frobnicate --config " + good.string()) == 2);
    const fs::path broken = tmp.path / "broken.json";
    std::ofstream(broken) << "{\"kind\": \"bounds_table\",";
    CHECK(run_cli("bounds-table --config " + broken.string()) == 2);

    // precondition failures
    {
        ExperimentConfig c = small_bounds();
        c.n_grid = {5};
        c.out_dir = (tmp.path / "out3").string();
        std::ofstream(tmp.path / "domain.json") << config_to_json(c);
    }
    CHECK(run_cli("bounds-table --config " + (tmp.path / "domain.json").string()) == 3);
    {
        RunLock held(tmp.path / "out");
        CHECK(run_cli("bounds-table --config " + good.string()) == 3);
    }
    {
        ExperimentConfig c = small_rate(testing_support::zero_spec(2));
        c.out_dir = (tmp.path / "out4").string();
        std::ofstream(tmp.path / "rate.json") << config_to_json(c);
    }
    CHECK(run_cli("rate --config " + (tmp.path / "rate.json").string()) == 3);
}

TEST_CASE("shipped configs parse and validate") {
    std::size_t count = 0;
    for (const auto& entry : fs::directory_iterator(STABILAB_CONFIG_DIR)) {
        if (entry.path().extension() != ".json") continue;
        ++count;
        const ExperimentConfig c = load_config(entry.path());
        CHECK_NOTHROW(validate_config(c));
        CHECK(parse_config(config_to_json(c)) == c);
    }
    CHECK(count == 6);
}
