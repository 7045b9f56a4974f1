#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "stabilab/stability.hpp"
#include "support.hpp"

using namespace stabilab;

namespace {

// X = +-1 with probability 1/2 each, Y = (1 + X) / 2.
DataSpec sign_spec() {
    DataSpec s;
    s.d = 1;
    s.x_family = XFamily::rademacher_coords;
    s.b_x = 1.0;
    s.y_model = YModel::linear_clipped;
    s.beta_star = {0.5};
    s.intercept = 0.5;
    s.noise_scale = 0.0;
    s.b_y = 1.0;
    return s;
}

}  // namespace

TEST_CASE("ridge_gamma_q: worked examples") {
    CHECK(ridge_gamma_q({1.0, 1.0, 0.5, 100, 1.0}) == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(ridge_gamma_q({1.0, 1.0, 0.5, 200, 1.0}) == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(ridge_gamma_q({1.0, 1.0, 0.5, 100, 0.0}) == 0.0);
    CHECK(std::isinf(ridge_gamma_q({1.0, 1.0, 0.5, 100, std::numeric_limits<double>::infinity()})));

    // Independent arithmetic at an off-grid point.
    const double bx = 1.7, lam = 2.3, eta = 0.35, y = 0.8;
    const std::size_t n = 57;
    const double expected =
        2 * y * y * (bx * bx / (n * lam)) * (1 + (bx * bx + lam) / (lam * (1 - eta))) * (1 + bx * bx / lam);
    CHECK(ridge_gamma_q({bx, lam, eta, n, y}) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("ridge_gamma_q: strictly decreasing in lambda over the domain") {
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda = 0.05; lambda < 50.0; lambda *= 1.3) {
        const double g = ridge_gamma_q({1.0, lambda, 0.5, 100, 1.0});
        CHECK(g < prev);
        prev = g;
    }
}

TEST_CASE("ridge stability domain") {
    CHECK_THROWS_AS(ridge_gamma_q({1.0, 1.0, 1.0, 100, 1.0}), std::domain_error);
    CHECK_THROWS_AS(ridge_gamma_q({1.0, 1.0, 0.5, 2, 1.0}), std::domain_error);       // n eta = 1
    CHECK_THROWS_AS(ridge_gamma_q({1.0, 0.01, 0.5, 100, 1.0}), std::domain_error);    // lambda <= 1/(eta(n-1))
    CHECK_THROWS_AS(ridge_gamma_q({3.0, 0.1, 0.5, 100, 1.0}), std::domain_error);     // lambda <= b_x^2/(n eta - 1)
    try {
        check_ridge_stability_domain(3.0, 0.1, 0.5, 100);
    } catch (const std::domain_error& e) {
        CHECK(std::string(e.what()).find("b_x^2") != std::string::npos);
    }
    CHECK_NOTHROW(check_ridge_stability_domain(1.0, 1.0, 0.5, 100));
}

TEST_CASE("knn_gamma_1") {
    CHECK(knn_gamma_1(4, 100) == doctest::Approx(8.0 / (100.0 * std::sqrt(2.0 * std::numbers::pi))).epsilon(1e-14));
    CHECK(knn_gamma_1(4, 100) == doctest::Approx(0.0319154).epsilon(1e-6));
    CHECK(knn_gamma_1(1, 200) == doctest::Approx(knn_gamma_1(1, 100) / 2.0).epsilon(1e-14));
    CHECK(knn_gamma_1(1, 2) == doctest::Approx(0.797885).epsilon(1e-6));
    CHECK_THROWS(knn_gamma_1(0, 10));
    CHECK_THROWS(knn_gamma_1(10, 10));
}

TEST_CASE("ridge_param_diff_check: worked examples") {
    const Dataset zeros = sample_dataset(testing_support::zero_spec(2), 30, {1, 0});
    const auto z = ridge_param_diff_check(zeros, 3, 1.0, 0.5, 1.0);
    CHECK(z.lhs == 0.0);
    CHECK(z.rhs == 0.0);

    // X = (1, 1), Y = (0, 2): full fit 1 / 5 = 0.2, fit without point 0 is 2 / 5 = 0.4.
    const Dataset hand(1, {1.0, 1.0}, {0.0, 2.0});
    const auto h = ridge_param_diff_check(hand, 0, 4.0, 0.9, 1.0);
    CHECK(h.lhs == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(h.rhs == doctest::Approx(3.125).epsilon(1e-14));
    CHECK(h.lhs <= h.rhs);

    CHECK_THROWS_AS(ridge_param_diff_check(hand, 0, 1.0, 0.5, 1.0), std::domain_error);
    CHECK_THROWS_AS(ridge_param_diff_check(Dataset(1, {2.0, 1.0, 1.0}, {1.0, 1.0, 1.0}), 0, 4.0, 0.9, 1.0),
                    std::domain_error);
    CHECK_THROWS_AS(ridge_param_diff_check(hand, 2, 4.0, 0.9, 1.0), std::out_of_range);
}

TEST_CASE("ridge_param_diff_check: lhs matches explicit refits and never exceeds rhs") {
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 1 + trial % 5;
        const std::size_t n = 5 + trial % 60;
        const double eta = 0.1 + 0.8 * u(rng);
        const double b_x = 0.5 + 1.5 * u(rng);
        const double floor = std::max(1.0 / (eta * (n - 1.0)), b_x * b_x / (n * eta - 1.0));
        if (!(n * eta > 1.0)) continue;
        const double lambda = floor * (1.01 + 3.0 * u(rng));
        const oracle::Points p = oracle::random_points(rng, n, d, b_x, [&](std::mt19937_64& r, const std::vector<double>&) {
            return 2.0 * g(r);
        });
        const std::size_t j = trial % n;
        const auto check = ridge_param_diff_check(testing_support::to_dataset(p), j, lambda, eta, b_x);
        const auto full = oracle::ridge(p, lambda);
        const auto red = oracle::ridge(oracle::without(p, j), lambda);
        double diff = 0.0;
        for (std::size_t k = 0; k < d; ++k) diff += (full[k] - red[k]) * (full[k] - red[k]);
        CHECK(check.lhs == doctest::Approx(std::sqrt(diff)).epsilon(1e-8).scale(1e-12));
        CHECK(check.lhs <= check.rhs);
    }
}

TEST_CASE("empirical_lq_stability: degenerate spec gives zero") {
    StabilityConfig c;
    c.n = 20;
    c.reps = 30;
    c.seed = {1, 0};
    for (double q : {1.0, 2.0, 4.0}) {
        c.q = q;
        const auto est = empirical_lq_stability(Ridge{1.0}, testing_support::zero_spec(2), CostKind::squared, c);
        CHECK(est.s_q_hat == 0.0);
        CHECK(est.std_error == 0.0);
    }
}

TEST_CASE("empirical_lq_stability: knn q = 1 is the disagreement frequency") {
    const DataSpec spec = testing_support::label_spec();
    StabilityConfig c;
    c.q = 1.0;
    c.n = 30;
    c.reps = 200;
    c.seed = {77, 3};
    for (JPolicy policy : {JPolicy::average_all, JPolicy::fixed_last}) {
        c.j_policy = policy;
        const auto est = empirical_lq_stability(Knn{3}, spec, CostKind::zero_one, c);

        // Recount disagreements on the same draws with the sort-based classifier.
        double disagree = 0.0;
        double count = 0.0;
        for (std::size_t r = 0; r < c.reps; ++r) {
            const SeedSpec rs = c.seed.substream(r);
            const oracle::Points p = testing_support::to_points(sample_dataset(spec, c.n, rs.substream(0)));
            const Dataset probe = sample_dataset(spec, 1, rs.substream(1));
            const std::vector<double> x(probe.x(0).begin(), probe.x(0).end());
            const int full = oracle::knn(p, 3, x);
            const std::size_t first = policy == JPolicy::fixed_last ? c.n - 1 : 0;
            for (std::size_t j = first; j < c.n; ++j) {
                disagree += full != oracle::knn(p, 3, x, j) ? 1.0 : 0.0;
                count += 1.0;
            }
        }
        CHECK(est.s_q_hat == doctest::Approx(disagree / count).epsilon(1e-12));
    }
}

TEST_CASE("empirical_lq_stability: two-point distribution matches exhaustive expectation") {
    // n = 2, Z in {(1, 1), (-1, 0)}: enumerate D, the probe and j.
    const DataSpec spec = sign_spec();
    const double lambda = 0.5;
    for (double q : {1.0, 2.0}) {
        double exact = 0.0;
        for (int a : {-1, 1})
            for (int b : {-1, 1})
                for (int t : {-1, 1}) {
                    auto label = [](int x) { return 0.5 + 0.5 * x; };
                    const oracle::Points d{1, {{double(a)}, {double(b)}}, {label(a), label(b)}};
                    const auto full = oracle::ridge(d, lambda);
                    const double cf = std::pow(label(t) - full[0] * t, 2.0);
                    for (std::size_t j = 0; j < 2; ++j) {
                        const auto red = oracle::ridge(oracle::without(d, j), lambda);
                        const double cr = std::pow(label(t) - red[0] * t, 2.0);
                        exact += std::pow(std::abs(cf - cr), q) / 16.0;
                    }
                }
        exact = std::pow(exact, 1.0 / q);

        StabilityConfig c;
        c.q = q;
        c.n = 2;
        c.reps = 20000;
        c.seed = {2, 0};
        const auto est = empirical_lq_stability(Ridge{lambda}, spec, CostKind::squared, c);
        CHECK(exact > 0.0);
        CHECK(std::abs(est.s_q_hat - exact) <= 4.0 * est.std_error);
    }
}

TEST_CASE("empirical_lq_stability: monotone in q on shared draws") {
    StabilityConfig c;
    c.n = 40;
    c.reps = 100;
    c.seed = {5, 5};
    const double qs[] = {1.0, 2.0, 4.0, 8.0};
    for (JPolicy policy : {JPolicy::average_all, JPolicy::fixed_last}) {
        c.j_policy = policy;
        const auto est = empirical_lq_stability(Ridge{0.5}, testing_support::clipped_spec(3), CostKind::squared, c, qs);
        REQUIRE(est.size() == 4);
        for (std::size_t i = 1; i < est.size(); ++i) CHECK(est[i].s_q_hat >= est[i - 1].s_q_hat);
        // Each entry equals the single-q call.
        c.q = 4.0;
        CHECK(empirical_lq_stability(Ridge{0.5}, testing_support::clipped_spec(3), CostKind::squared, c).s_q_hat ==
              est[2].s_q_hat);
    }
}

TEST_CASE("empirical_lq_stability: deterministic regardless of worker count") {
    StabilityConfig c;
    c.q = 2.0;
    c.n = 25;
    c.reps = 64;
    c.seed = {9, 1};
    const auto a = stability_cost_differences(Ridge{1.0}, testing_support::clipped_spec(2), CostKind::squared, c);
    const auto b = stability_cost_differences(Ridge{1.0}, testing_support::clipped_spec(2), CostKind::squared, c);
    CHECK(a == b);
    REQUIRE(a.size() == 64);
    CHECK(a.front().size() == 25);
    c.j_policy = JPolicy::fixed_last;
    CHECK(stability_cost_differences(Ridge{1.0}, testing_support::clipped_spec(2), CostKind::squared, c).front().size() ==
          1);
}

TEST_CASE("empirical_lq_stability: config errors") {
    StabilityConfig c;
    c.q = 0.5;
    c.n = 10;
    c.reps = 10;
    CHECK_THROWS(empirical_lq_stability(Ridge{1.0}, testing_support::clipped_spec(2), CostKind::squared, c));
    c.q = 1.0;
    c.reps = 1;
    CHECK_THROWS(empirical_lq_stability(Ridge{1.0}, testing_support::clipped_spec(2), CostKind::squared, c));
    c.reps = 10;
    c.n = 4;
    CHECK_THROWS(empirical_lq_stability(Knn{3}, testing_support::label_spec(), CostKind::zero_one, c));
}

TEST_CASE("ridge dominance on a small grid") {
    const DataSpec spec = testing_support::clipped_spec(3);
    const double qs[] = {1.0, 2.0};
    for (std::size_t n : {30u, 60u}) {
        StabilityConfig c;
        c.n = n;
        c.reps = 100;
        c.seed = {11, n};
        const auto est = empirical_lq_stability(Ridge{1.0}, spec, CostKind::squared, c, qs);
        for (std::size_t i = 0; i < 2; ++i) {
            const auto yn = y_norm(spec, 2.0 * qs[i], YNormMonteCarlo{200000, {3, i}});
            const double gamma = ridge_gamma_q({1.0, 1.0, 0.5, n, yn.value});
            CHECK(est[i].s_q_hat <= gamma + 3.0 * est[i].std_error);
        }
    }
}

TEST_CASE("y_norm") {
    DataSpec two = testing_support::zero_spec(2);
    two.intercept = 2.0;
    two.b_y = 2.0;
    for (double q : {1.0, 2.0, 3.5, 8.0}) {
        CHECK(y_norm(two, q, YNormAnalytic{}).value == 2.0);
        const auto mc = y_norm(two, q, YNormMonteCarlo{1000, {1, 0}});
        CHECK(mc.value == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(mc.std_error < 1e-12);
    }
    CHECK(y_norm(testing_support::label_spec(2, 0.36), 2.0, YNormAnalytic{}).value == doctest::Approx(0.6));

    // Noise-free linear Y over a sign cube: enumeration against Monte Carlo.
    DataSpec cube;
    cube.d = 3;
    cube.x_family = XFamily::rademacher_coords;
    cube.y_model = YModel::linear_clipped;
    cube.beta_star = {0.5, -0.25, 1.0};
    cube.b_y = 1.5;
    const double side = 1.0 / std::sqrt(3.0);
    double total = 0.0;
    for (int s = 0; s < 8; ++s) {
        double y = 0.0;
        for (int k = 0; k < 3; ++k) y += cube.beta_star[k] * (((s >> k) & 1) ? side : -side);
        total += std::pow(std::abs(y), 4.0);
    }
    const double exact = std::pow(total / 8.0, 0.25);
    CHECK(y_norm(cube, 4.0, YNormAnalytic{}).value == doctest::Approx(exact).epsilon(1e-14));
    const auto mc = y_norm(cube, 4.0, YNormMonteCarlo{100000, {4, 0}});
    CHECK(std::abs(mc.value - exact) <= 4.0 * mc.std_error);

    CHECK_FALSE(has_analytic_y_norm(testing_support::clipped_spec(3)));
    CHECK_THROWS_AS(y_norm(testing_support::clipped_spec(3), 2.0, YNormAnalytic{}), std::invalid_argument);
    CHECK_THROWS(y_norm(two, 2.0, YNormMonteCarlo{1, {1, 0}}));
    CHECK_THROWS(y_norm(two, 0.5, YNormAnalytic{}));
}
