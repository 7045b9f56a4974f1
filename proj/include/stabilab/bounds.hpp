#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stabilab/datagen.hpp"
#include "stabilab/rng.hpp"

namespace stabilab {

// Constant of the generalised Efron-Stein moment inequality, fixed at its
// ceiling so every bound stays valid.
inline constexpr double kKappa = 1.271;

struct GammaSet {
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double gamma3 = 0.0;
    double b_x = 1.0;
    double lambda = 1.0;
    double eta = 0.5;
    double kappa = kKappa;

    double sum() const { return gamma1 + gamma2 + gamma3; }
};

/// Ridge moment/PAC constants:
///   G1 = 8 sqrt(kappa) b_x^2 / lambda
///   G2 = 2 sqrt(kappa) (b_x^2 / lambda) [(8 + sqrt 2) F + 4 b_x^2 / lambda]
///   G3 = (2 b_x^2 / lambda) F
/// with F = (1 + (b_x^2 + lambda) / (lambda (1 - eta))) (1 + b_x^2 / lambda).
/// The kappa argument exists for sensitivity checks; production callers use
/// the default.
GammaSet gamma_set(double b_x, double lambda, double eta, double kappa = kKappa);

// Throws std::domain_error unless the sample-size conditions behind the ridge
// moment and PAC bounds hold: n > 2, lambda > 1 / (eta (n - 2)) and the
// parameter-difference condition lambda > b_x^2 / (m eta - 1) at m = n and
// m = n - 1.
void check_ridge_bound_domain(double b_x, double lambda, double eta, std::size_t n);

// sqrt(kappa q n) (sqrt 2 s_n + 4 s_{n-1}) + (2 sqrt(kappa q) / sqrt n) var_term_norm, q >= 2.
double moment_bound_generic(double s_q_n, double s_q_n1, double var_term_norm, double q, std::size_t n);

// (4 b_x^2 / lambda) ||Y||_q^2 + (4 b_x^4 / lambda^2) ||Y||_{2q}^2
double ridge_variance_term_bound(double b_x, double lambda, double y_norm_q, double y_norm_2q);

// (sqrt q / sqrt n)(G1 ||Y||_q^2 + G2 ||Y||_{2q}^2), plus (G3 / n) ||Y||_{2q}^2 when !centered.
double ridge_moment_bound(const GammaSet& gammas, double q, std::size_t n, double y_norm_q, double y_norm_2q,
                          bool centered);

// Moment growth E|X|^q <= C (sum_i lambda_i q^{alpha_i})^q for q >= q0.
struct TailSpec {
    struct Term {
        double lambda;
        double alpha;
    };

    double c = 1.0;
    double q0 = 2.0;
    std::vector<Term> terms;

    void validate() const;
    double min_alpha() const;
};

// sum_i lambda_i (e x / min_j alpha_j)^{alpha_i}
double tail_threshold(const TailSpec& spec, double x);
// C e^{q0 min_j alpha_j} e^{-x}
double tail_prob_bound(const TailSpec& spec, double x);

// sqrt(2 e x / n) b_y^2 (G1 + G2 + G3); holds with probability >= 1 - e e^{-x}.
double pac_bound_bounded(const GammaSet& gammas, double b_y, std::size_t n, double x);

// (M1 mean_y^2 sqrt x + M2 v x^{3/2}) / sqrt n with M1 = 2 sqrt(2e) S and
// M2 = 16 e^2 (2e)^{3/2} S, S = G1 + G2 + G3.
double pac_bound_subgaussian(const GammaSet& gammas, double mean_y, double v, std::size_t n, double x);

// Moment-growth specs the two PAC bounds are derived from (C = 1, q0 = 2):
// bounded   one term  (b_y^2 S / sqrt n, 1/2)
// sub-Gauss two terms (2 S mean_y^2 / sqrt n, 1/2), (16 e^2 S v / sqrt n, 3/2)
TailSpec bounded_tail_spec(const GammaSet& gammas, double b_y, std::size_t n);
TailSpec subgaussian_tail_spec(const GammaSet& gammas, double mean_y, double v, std::size_t n);

// Statistics Z = f(Z_1, ..., Z_n) available to the Efron-Stein check.
enum class Statistic { constant, mean, max, ridge_loo };

std::string to_string(Statistic s);
// Throws std::invalid_argument for an unknown tag.
Statistic statistic_from_string(const std::string& tag);

struct EfronSteinResult {
    double lhs = 0.0;  // MC estimate of ||Z - EZ||_q
    double rhs = 0.0;  // sqrt(2 kappa q) sqrt(MC estimate of ||sum_j (Z - Z_j')^2||_{q/2})
    double lhs_se = 0.0;
    double rhs_se = 0.0;

    double combined_se() const;
    // lhs <= rhs + 3 combined_se()
    bool pass() const;
};

/// Monte Carlo check of ||Z - EZ||_q <= sqrt(2 kappa q) sqrt(||sum_j (Z - Z_j')^2||_{q/2}).
///
/// Replication r draws D and an independent copy D' from the same stream
/// family; Z_j' swaps point j of D for point j of D'. The lhs and the inner
/// q/2 norm share these draws; EZ comes from 2 reps independent draws. The
/// ridge_loo statistic is the ridge leave-one-out risk at `lambda`; mean and
/// max act on the labels.
EfronSteinResult efron_stein_moment_check(Statistic f, const DataSpec& spec, std::size_t n, double q,
                                          std::size_t reps, const SeedSpec& seed, double lambda = 1.0);

}  // namespace stabilab
