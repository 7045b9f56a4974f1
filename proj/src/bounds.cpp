#include "stabilab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "stabilab/learners.hpp"

namespace stabilab {

namespace {

constexpr double kE = std::numbers::e;

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be positive");
}

void require_nonnegative(double v, const char* what) {
    if (!(v >= 0.0)) throw std::invalid_argument(std::string(what) + " must be >= 0");
}

}  // namespace

GammaSet gamma_set(double b_x, double lambda, double eta, double kappa) {
    require_positive(b_x, "b_x");
    require_positive(lambda, "lambda");
    require_positive(kappa, "kappa");
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("gamma_set: eta must lie in (0, 1)");

    const double r = b_x * b_x / lambda;
    const double f = (1.0 + (b_x * b_x + lambda) / (lambda * (1.0 - eta))) * (1.0 + r);
    const double sk = std::sqrt(kappa);
    GammaSet g;
    g.gamma1 = 8.0 * sk * r;
    g.gamma2 = 2.0 * sk * r * ((8.0 + std::numbers::sqrt2) * f + 4.0 * r);
    g.gamma3 = 2.0 * r * f;
    g.b_x = b_x;
    g.lambda = lambda;
    g.eta = eta;
    g.kappa = kappa;
    return g;
}

void check_ridge_bound_domain(double b_x, double lambda, double eta, std::size_t n) {
    if (!(eta > 0.0 && eta < 1.0)) throw std::domain_error("ridge bound: eta must lie in (0, 1)");
    if (n < 3) throw std::domain_error("ridge bound: requires n > 2");
    const double nd = static_cast<double>(n);
    if (!(lambda > 1.0 / (eta * (nd - 2.0))))
        throw std::domain_error("ridge bound: requires lambda > 1 / (eta (n - 2))");
    for (std::size_t m : {n, n - 1}) {
        const double md = static_cast<double>(m);
        const std::string at = " at sample size " + std::to_string(m);
        if (!(md * eta > 1.0)) throw std::domain_error("ridge bound: requires m * eta > 1" + at);
        if (!(lambda > b_x * b_x / (md * eta - 1.0)))
            throw std::domain_error("ridge bound: requires lambda > b_x^2 / (m eta - 1)" + at);
    }
}

double moment_bound_generic(double s_q_n, double s_q_n1, double var_term_norm, double q, std::size_t n) {
    if (!(q >= 2.0)) throw std::invalid_argument("moment_bound_generic: q must be >= 2");
    if (n < 2) throw std::invalid_argument("moment_bound_generic: n must be >= 2");
    require_nonnegative(s_q_n, "s_q_n");
    require_nonnegative(s_q_n1, "s_q_n1");
    require_nonnegative(var_term_norm, "var_term_norm");
    const double nd = static_cast<double>(n);
    return std::sqrt(kKappa * q * nd) * (std::numbers::sqrt2 * s_q_n + 4.0 * s_q_n1) +
           2.0 * std::sqrt(kKappa * q) / std::sqrt(nd) * var_term_norm;
}

double ridge_variance_term_bound(double b_x, double lambda, double y_norm_q, double y_norm_2q) {
    require_nonnegative(b_x, "b_x");
    require_positive(lambda, "lambda");
    require_nonnegative(y_norm_q, "y_norm_q");
    require_nonnegative(y_norm_2q, "y_norm_2q");
    const double r = b_x * b_x / lambda;
    return 4.0 * r * y_norm_q * y_norm_q + 4.0 * r * r * y_norm_2q * y_norm_2q;
}

double ridge_moment_bound(const GammaSet& g, double q, std::size_t n, double y_norm_q, double y_norm_2q,
                          bool centered) {
    if (!(q >= 2.0)) throw std::invalid_argument("ridge_moment_bound: q must be >= 2");
    if (n < 3) throw std::invalid_argument("ridge_moment_bound: n must be >= 3");
    require_nonnegative(y_norm_q, "y_norm_q");
    require_nonnegative(y_norm_2q, "y_norm_2q");
    const double nd = static_cast<double>(n);
    const double yq2 = y_norm_q * y_norm_q;
    const double y2q2 = y_norm_2q * y_norm_2q;
    double value = std::sqrt(q) / std::sqrt(nd) * (g.gamma1 * yq2 + g.gamma2 * y2q2);
    if (!centered) value += g.gamma3 / nd * y2q2;
    return value;
}

// ---------------------------------------------------------------------------

void TailSpec::validate() const {
    require_positive(c, "TailSpec c");
    if (!(q0 >= 1.0) || !std::isfinite(q0)) throw std::invalid_argument("TailSpec q0 must be >= 1");
    if (terms.empty()) throw std::invalid_argument("TailSpec needs at least one term");
    for (const auto& t : terms) {
        if (!(t.lambda >= 0.0) || !std::isfinite(t.lambda))
            throw std::invalid_argument("TailSpec lambda_i must be finite and >= 0");
        require_positive(t.alpha, "TailSpec alpha_i");
    }
}

double TailSpec::min_alpha() const {
    double m = terms.front().alpha;
    for (const auto& t : terms) m = std::min(m, t.alpha);
    return m;
}

double tail_threshold(const TailSpec& spec, double x) {
    spec.validate();
    require_positive(x, "x");
    const double base = kE * x / spec.min_alpha();
    double total = 0.0;
    for (const auto& t : spec.terms) total += t.lambda * std::pow(base, t.alpha);
    return total;
}

double tail_prob_bound(const TailSpec& spec, double x) {
    spec.validate();
    require_positive(x, "x");
    return spec.c * std::exp(spec.q0 * spec.min_alpha()) * std::exp(-x);
}

double pac_bound_bounded(const GammaSet& g, double b_y, std::size_t n, double x) {
    require_nonnegative(b_y, "b_y");
    require_positive(x, "x");
    if (n < 3) throw std::invalid_argument("pac_bound_bounded: n must be >= 3");
    return std::sqrt(2.0 * kE * x / static_cast<double>(n)) * b_y * b_y * g.sum();
}

double pac_bound_subgaussian(const GammaSet& g, double mean_y, double v, std::size_t n, double x) {
    require_positive(v, "v");
    require_positive(x, "x");
    if (n < 3) throw std::invalid_argument("pac_bound_subgaussian: n must be >= 3");
    const double s = g.sum();
    const double m1 = 2.0 * std::sqrt(2.0 * kE) * s;
    const double m2 = 16.0 * kE * kE * std::pow(2.0 * kE, 1.5) * s;
    return (m1 * mean_y * mean_y * std::sqrt(x) + m2 * v * std::pow(x, 1.5)) / std::sqrt(static_cast<double>(n));
}

TailSpec bounded_tail_spec(const GammaSet& g, double b_y, std::size_t n) {
    const double root_n = std::sqrt(static_cast<double>(n));
    return TailSpec{1.0, 2.0, {{b_y * b_y * g.sum() / root_n, 0.5}}};
}

TailSpec subgaussian_tail_spec(const GammaSet& g, double mean_y, double v, std::size_t n) {
    const double root_n = std::sqrt(static_cast<double>(n));
    const double s = g.sum();
    // ||Y||^2 <= 2 E[Y]^2 + 4 (2e)^2 v q
    return TailSpec{1.0, 2.0, {{2.0 * s * mean_y * mean_y / root_n, 0.5}, {16.0 * kE * kE * s * v / root_n, 1.5}}};
}

// ---------------------------------------------------------------------------

std::string to_string(Statistic s) {
    switch (s) {
        case Statistic::constant: return "constant";
        case Statistic::mean: return "mean";
        case Statistic::max: return "max";
        case Statistic::ridge_loo: return "ridge_loo";
    }
    return "?";
}

Statistic statistic_from_string(const std::string& tag) {
    if (tag == "constant") return Statistic::constant;
    if (tag == "mean") return Statistic::mean;
    if (tag == "max") return Statistic::max;
    if (tag == "ridge_loo") return Statistic::ridge_loo;
    throw std::invalid_argument("unknown statistic '" + tag + "'");
}

double EfronSteinResult::combined_se() const { return std::sqrt(lhs_se * lhs_se + rhs_se * rhs_se); }

bool EfronSteinResult::pass() const { return lhs <= rhs + 3.0 * combined_se(); }

namespace {

double evaluate(Statistic f, const Dataset& data, double lambda) {
    switch (f) {
        case Statistic::constant:
            return 0.0;
        case Statistic::mean: {
            double s = 0.0;
            for (double y : data.ys()) s += y;
            return s / static_cast<double>(data.n());
        }
        case Statistic::max:
            return *std::max_element(data.ys().begin(), data.ys().end());
        case Statistic::ridge_loo:
            return ridge_loo_fast(data, lambda);
    }
    return 0.0;
}

struct PowerMean {
    double value;
    double se;
};

// (mean w)^{1/p} with a delta-method standard error.
PowerMean power_mean(const std::vector<double>& w, double p) {
    const double m = static_cast<double>(w.size());
    double mean = 0.0;
    for (double x : w) mean += x;
    mean /= m;
    double ss = 0.0;
    for (double x : w) ss += (x - mean) * (x - mean);
    const double se_mean = std::sqrt(ss / (m - 1.0) / m);
    const double value = std::pow(mean, 1.0 / p);
    return {value, mean > 0.0 ? std::pow(mean, 1.0 / p - 1.0) / p * se_mean : 0.0};
}

}  // namespace

EfronSteinResult efron_stein_moment_check(Statistic f, const DataSpec& spec, std::size_t n, double q,
                                          std::size_t reps, const SeedSpec& seed, double lambda) {
    spec.validate();
    if (!(q >= 2.0) || !std::isfinite(q)) throw std::invalid_argument("efron_stein: q must be >= 2");
    if (reps < 2) throw std::invalid_argument("efron_stein: reps must be >= 2");
    if (n < 2) throw std::invalid_argument("efron_stein: n must be >= 2");

    const SeedSpec main{seed.derive(), 0};
    const SeedSpec centre{seed.derive(), 1};

    std::vector<double> z(reps);
    std::vector<double> swap_sums(reps);
    parallel_for(reps, [&](std::size_t r) {
        const SeedSpec rs = main.substream(r);
        const Dataset data = sample_dataset(spec, n, rs.substream(0));
        const Dataset copy = sample_dataset(spec, n, rs.substream(1));
        const double zr = evaluate(f, data, lambda);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double zj = evaluate(f, replace_point(data, j, copy.x(j), copy.y(j)), lambda);
            s += (zr - zj) * (zr - zj);
        }
        z[r] = zr;
        swap_sums[r] = s;
    });

    std::vector<double> z_centre(2 * reps);
    parallel_for(2 * reps, [&](std::size_t r) {
        z_centre[r] = evaluate(f, sample_dataset(spec, n, centre.substream(r)), lambda);
    });
    double ez = 0.0;
    for (double v : z_centre) ez += v;
    ez /= static_cast<double>(z_centre.size());

    std::vector<double> dev(reps);
    std::vector<double> inner(reps);
    for (std::size_t r = 0; r < reps; ++r) {
        dev[r] = std::pow(std::abs(z[r] - ez), q);
        inner[r] = std::pow(swap_sums[r], q / 2.0);
    }
    const PowerMean lhs = power_mean(dev, q);
    const PowerMean inner_norm = power_mean(inner, q / 2.0);  // ||sum_j (Z - Z_j')^2||_{q/2}
    const double factor = std::sqrt(2.0 * kKappa * q);

    EfronSteinResult out;
    out.lhs = lhs.value;
    out.lhs_se = lhs.se;
    out.rhs = factor * std::sqrt(inner_norm.value);
    // d sqrt(u) = du / (2 sqrt u)
    out.rhs_se = inner_norm.value > 0.0 ? factor * inner_norm.se / (2.0 * std::sqrt(inner_norm.value)) : 0.0;
    return out;
}

}  // namespace stabilab
