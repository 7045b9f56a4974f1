#include "stabilab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace stabilab {

std::string to_string(JPolicy p) { return p == JPolicy::fixed_last ? "fixed_last" : "average_all"; }

JPolicy j_policy_from_string(const std::string& s) {
    if (s == "fixed_last") return JPolicy::fixed_last;
    if (s == "average_all") return JPolicy::average_all;
    throw std::invalid_argument("unknown j_policy '" + s + "'");
}

void StabilityConfig::validate() const {
    if (!(q >= 1.0) || !std::isfinite(q)) throw std::invalid_argument("StabilityConfig: q must be >= 1");
    if (reps < 2) throw std::invalid_argument("StabilityConfig: reps must be >= 2");
    if (n < 2) throw std::invalid_argument("StabilityConfig: n must be >= 2");
}

namespace {

void check_algorithm(const Algorithm& algorithm, std::size_t n) {
    if (const auto* knn = std::get_if<Knn>(&algorithm)) {
        if (knn->k < 1 || n < knn->k + 2)
            throw std::invalid_argument("stability: knn needs 1 <= k and n >= k + 2");
    } else if (!(std::get<Ridge>(algorithm).lambda > 0.0)) {
        throw std::invalid_argument("stability: ridge lambda must be positive");
    }
}

std::vector<double> replication_differences(const Algorithm& algorithm, const DataSpec& spec, CostKind cost_kind,
                                            const StabilityConfig& config, std::size_t r) {
    const SeedSpec rs = config.seed.substream(r);
    const Dataset data = sample_dataset(spec, config.n, rs.substream(0));
    const Dataset probe = sample_dataset(spec, 1, rs.substream(1));
    const auto x = probe.x(0);
    const double y = probe.y(0);

    std::vector<std::size_t> js;
    if (config.j_policy == JPolicy::fixed_last) {
        js.push_back(config.n - 1);
    } else {
        for (std::size_t j = 0; j < config.n; ++j) js.push_back(j);
    }

    std::vector<double> diffs;
    diffs.reserve(js.size());
    if (const auto* ridge = std::get_if<Ridge>(&algorithm)) {
        const RidgeGram gram(data);
        const double full = cost(cost_kind, predict(gram.fit(ridge->lambda), x), y);
        for (std::size_t j : js) {
            const double reduced = cost(cost_kind, predict(gram.fit_without(j, ridge->lambda), x), y);
            diffs.push_back(std::abs(full - reduced));
        }
    } else {
        const KnnParams params{std::get<Knn>(algorithm).k};
        const double full = cost(cost_kind, knn_classify(data, params, x), y);
        for (std::size_t j : js) {
            const double reduced = cost(cost_kind, knn_classify_without(data, j, params, x), y);
            diffs.push_back(std::abs(full - reduced));
        }
    }
    return diffs;
}

}  // namespace

std::vector<std::vector<double>> stability_cost_differences(const Algorithm& algorithm, const DataSpec& spec,
                                                            CostKind cost, const StabilityConfig& config) {
    config.validate();
    spec.validate();
    check_algorithm(algorithm, config.n);
    std::vector<std::vector<double>> out(config.reps);
    parallel_for(config.reps,
                 [&](std::size_t r) { out[r] = replication_differences(algorithm, spec, cost, config, r); });
    return out;
}

std::vector<StabilityEstimate> empirical_lq_stability(const Algorithm& algorithm, const DataSpec& spec,
                                                      CostKind cost, const StabilityConfig& config,
                                                      std::span<const double> qs) {
    for (double q : qs)
        if (!(q >= 1.0) || !std::isfinite(q)) throw std::invalid_argument("stability: q must be >= 1");
    const auto diffs = stability_cost_differences(algorithm, spec, cost, config);
    const double reps = static_cast<double>(config.reps);

    std::vector<StabilityEstimate> out;
    out.reserve(qs.size());
    for (double q : qs) {
        std::vector<double> inner(diffs.size());
        for (std::size_t r = 0; r < diffs.size(); ++r) {
            double s = 0.0;
            for (double v : diffs[r]) s += std::pow(v, q);
            inner[r] = s / static_cast<double>(diffs[r].size());
        }
        double mean = 0.0;
        for (double w : inner) mean += w;
        mean /= reps;
        double ss = 0.0;
        for (double w : inner) ss += (w - mean) * (w - mean);
        const double se_mean = std::sqrt(ss / (reps - 1.0) / reps);

        StabilityEstimate est;
        est.config = config;
        est.config.q = q;
        est.s_q_hat = std::pow(mean, 1.0 / q);
        // d/dm m^{1/q} = (1/q) m^{1/q - 1}
        est.std_error = mean > 0.0 ? std::pow(mean, 1.0 / q - 1.0) / q * se_mean : 0.0;
        out.push_back(est);
    }
    return out;
}

StabilityEstimate empirical_lq_stability(const Algorithm& algorithm, const DataSpec& spec, CostKind cost,
                                         const StabilityConfig& config) {
    const double q = config.q;
    return empirical_lq_stability(algorithm, spec, cost, config, std::span<const double>(&q, 1)).front();
}

// ---------------------------------------------------------------------------

void check_ridge_stability_domain(double b_x, double lambda, double eta, std::size_t n) {
    if (!(b_x > 0.0)) throw std::domain_error("ridge stability: b_x must be positive");
    if (!(eta > 0.0 && eta < 1.0)) throw std::domain_error("ridge stability: eta must lie in (0, 1)");
    if (n < 2) throw std::domain_error("ridge stability: n must be > 1");
    const double nd = static_cast<double>(n);
    if (!(nd * eta > 1.0)) throw std::domain_error("ridge stability: requires n * eta > 1");
    if (!(lambda > 1.0 / (eta * (nd - 1.0))))
        throw std::domain_error("ridge stability: requires lambda > 1 / (eta (n - 1))");
    if (!(lambda > b_x * b_x / (nd * eta - 1.0)))
        throw std::domain_error("ridge stability: requires lambda > b_x^2 / (n eta - 1)");
}

double ridge_gamma_q(const RidgeStabilityInputs& in) {
    check_ridge_stability_domain(in.b_x, in.lambda, in.eta, in.n);
    if (!(in.y_norm_2q >= 0.0)) throw std::invalid_argument("ridge_gamma_q: y_norm_2q must be >= 0");
    if (std::isinf(in.y_norm_2q)) return std::numeric_limits<double>::infinity();
    const double bx2 = in.b_x * in.b_x;
    const double lam = in.lambda;
    const double nd = static_cast<double>(in.n);
    return 2.0 * in.y_norm_2q * in.y_norm_2q * (bx2 / (nd * lam)) * (1.0 + (bx2 + lam) / (lam * (1.0 - in.eta))) *
           (1.0 + bx2 / lam);
}

double knn_gamma_1(std::size_t k, std::size_t n) {
    if (k < 1 || n < 2 || k > n - 1) throw std::invalid_argument("knn_gamma_1: requires 1 <= k <= n - 1");
    return 4.0 / std::sqrt(2.0 * std::numbers::pi) * std::sqrt(static_cast<double>(k)) / static_cast<double>(n);
}

ParamDiffCheck ridge_param_diff_check(const Dataset& data, std::size_t j, double lambda, double eta, double b_x) {
    const std::size_t n = data.n();
    check_ridge_stability_domain(b_x, lambda, eta, n);
    if (j >= n) throw std::out_of_range("ridge_param_diff_check: index out of range");
    for (std::size_t i = 0; i < n; ++i)
        if (norm2(data.x(i)) > b_x) throw std::domain_error("ridge_param_diff_check: data violates ||X|| <= b_x");

    const RidgeGram gram(data);
    const RidgeModel full = gram.fit(lambda);
    const RidgeModel reduced = gram.fit_without(j, lambda);
    RealVector diff(full.beta.size());
    for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = full.beta[k] - reduced.beta[k];

    double others = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (i != j) others += std::abs(data.y(i));
    const double nd = static_cast<double>(n);
    const double bx2 = b_x * b_x;
    const double rhs = b_x / (nd * lambda) *
                       (std::abs(data.y(j)) + (bx2 + lambda) / (lambda * (1.0 - eta)) * (others / (nd - 1.0)));
    return {norm2(diff), rhs};
}

// ---------------------------------------------------------------------------

namespace {

bool constant_y(const DataSpec& spec) {
    return spec.y_model != YModel::bernoulli_label && spec.noise_scale == 0.0 && norm2(spec.beta_star) == 0.0;
}

bool enumerable_y(const DataSpec& spec) {
    return spec.y_model != YModel::bernoulli_label && spec.noise_scale == 0.0 &&
           spec.x_family == XFamily::rademacher_coords && spec.d <= 24;
}

double clip_y(const DataSpec& spec, double y) {
    return spec.y_model == YModel::linear_clipped ? std::clamp(y, -*spec.b_y, *spec.b_y) : y;
}

}  // namespace

bool has_analytic_y_norm(const DataSpec& spec) {
    return spec.y_model == YModel::bernoulli_label || constant_y(spec) || enumerable_y(spec);
}

YNormValue y_norm(const DataSpec& spec, double q, const YNormMethod& method) {
    spec.validate();
    if (!(q >= 1.0) || !std::isfinite(q)) throw std::invalid_argument("y_norm: q must be >= 1");

    if (const auto* mc = std::get_if<YNormMonteCarlo>(&method)) {
        if (mc->m < 2) throw std::invalid_argument("y_norm: Monte Carlo needs m >= 2");
        const Dataset draws = sample_dataset(spec, mc->m, mc->seed);
        const double m = static_cast<double>(mc->m);
        double mean = 0.0;
        std::vector<double> powers(mc->m);
        for (std::size_t i = 0; i < mc->m; ++i) {
            powers[i] = std::pow(std::abs(draws.y(i)), q);
            mean += powers[i];
        }
        mean /= m;
        double ss = 0.0;
        for (double p : powers) ss += (p - mean) * (p - mean);
        const double se_mean = std::sqrt(ss / (m - 1.0) / m);
        const double value = std::pow(mean, 1.0 / q);
        return {value, mean > 0.0 ? std::pow(mean, 1.0 / q - 1.0) / q * se_mean : 0.0};
    }

    if (spec.y_model == YModel::bernoulli_label) return {std::pow(spec.intercept, 1.0 / q), 0.0};
    if (constant_y(spec)) return {std::abs(clip_y(spec, spec.intercept)), 0.0};
    if (enumerable_y(spec)) {
        const std::size_t d = spec.d;
        const double side = spec.b_x / std::sqrt(static_cast<double>(d));
        const std::uint64_t patterns = std::uint64_t{1} << d;
        double total = 0.0;
        for (std::uint64_t s = 0; s < patterns; ++s) {
            double y = spec.intercept;
            for (std::size_t k = 0; k < d; ++k) y += spec.beta_star[k] * (((s >> k) & 1U) ? side : -side);
            total += std::pow(std::abs(clip_y(spec, y)), q);
        }
        return {std::pow(total / static_cast<double>(patterns), 1.0 / q), 0.0};
    }
    throw std::invalid_argument("y_norm: no closed form for this spec; use the Monte Carlo method");
}

}  // namespace stabilab
