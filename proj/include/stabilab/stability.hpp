#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stabilab/datagen.hpp"
#include "stabilab/learners.hpp"
#include "stabilab/rng.hpp"

namespace stabilab {

enum class JPolicy { fixed_last, average_all };

std::string to_string(JPolicy p);
JPolicy j_policy_from_string(const std::string& s);

struct StabilityConfig {
    double q = 1.0;
    std::size_t n = 2;
    std::size_t reps = 2;
    JPolicy j_policy = JPolicy::average_all;
    SeedSpec seed;

    void validate() const;
};

struct StabilityEstimate {
    double s_q_hat = 0.0;
    double std_error = 0.0;
    StabilityConfig config;
};

/// Monte Carlo estimate of S_q(A, n) = E[|c(A(D, X), Y) - c(A(tau_j(D), X), Y)|^q]^{1/q}.
///
/// Replication r draws D (n points) and an independent (X, Y) from
/// config.seed.substream(r). Under average_all the inner q-th power is
/// averaged over every j before the outer mean. std_error comes from the
/// delta method applied to the mean of the q-th powers.
StabilityEstimate empirical_lq_stability(const Algorithm& algorithm, const DataSpec& spec, CostKind cost,
                                         const StabilityConfig& config);

// One estimate per entry of qs, all computed from the same replication draws
// (config.q is ignored).
std::vector<StabilityEstimate> empirical_lq_stability(const Algorithm& algorithm, const DataSpec& spec,
                                                      CostKind cost, const StabilityConfig& config,
                                                      std::span<const double> qs);

// Per-replication |cost difference| samples, reps x (1 or n) values; the raw
// material of the estimator above, exposed for oracle checks.
std::vector<std::vector<double>> stability_cost_differences(const Algorithm& algorithm, const DataSpec& spec,
                                                            CostKind cost, const StabilityConfig& config);

struct RidgeStabilityInputs {
    double b_x = 1.0;
    double lambda = 1.0;
    double eta = 0.5;
    std::size_t n = 2;
    double y_norm_2q = 0.0;
};

// Throws std::domain_error naming the violated inequality unless
// eta in (0, 1), n eta > 1, lambda > 1 / (eta (n - 1)) and
// lambda > b_x^2 / (n eta - 1).
void check_ridge_stability_domain(double b_x, double lambda, double eta, std::size_t n);

/// gamma_q = 2 ||Y||_{2q}^2 (b_x^2 / (n lambda)) (1 + (b_x^2 + lambda) / (lambda (1 - eta))) (1 + b_x^2 / lambda),
/// +infinity when ||Y||_{2q} is infinite.
double ridge_gamma_q(const RidgeStabilityInputs& inputs);

/// gamma_1 = (4 / sqrt(2 pi)) sqrt(k) / n for 1 <= k <= n - 1.
double knn_gamma_1(std::size_t k, std::size_t n);

struct ParamDiffCheck {
    double lhs = 0.0;  // ||A(D) - A(tau_j(D))||_2
    double rhs = 0.0;  // deterministic bound evaluated on the data
};

// j is 0-based. Requires the ridge stability domain at n and XBd with b_x.
ParamDiffCheck ridge_param_diff_check(const Dataset& data, std::size_t j, double lambda, double eta,
                                      double b_x);

struct YNormAnalytic {};
struct YNormMonteCarlo {
    std::size_t m = 1000000;
    SeedSpec seed;
};
using YNormMethod = std::variant<YNormAnalytic, YNormMonteCarlo>;

struct YNormValue {
    double value = 0.0;
    double std_error = 0.0;  // zero for analytic values
};

// True when an analytic ||Y||_q exists for spec (see y_norm).
bool has_analytic_y_norm(const DataSpec& spec);

/// Population L^q norm of Y under spec.
///
/// Closed forms: bernoulli_label gives intercept^{1/q}; a constant Y (no noise,
/// beta_star = 0) gives |Y|; a noise-free linear model over rademacher_coords
/// (d <= 24) is enumerated exactly. Anything else needs the Monte Carlo method.
YNormValue y_norm(const DataSpec& spec, double q, const YNormMethod& method);

}  // namespace stabilab
