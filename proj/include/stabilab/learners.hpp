#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>

#include "stabilab/core_math.hpp"
#include "stabilab/datagen.hpp"
#include "stabilab/rng.hpp"

namespace stabilab {

enum class CostKind { squared, zero_one };

std::string to_string(CostKind k);

// c(y_hat, y). zero_one requires both arguments in {0, 1}.
double cost(CostKind kind, double y_hat, double y);

struct RidgeModel {
    RealVector beta;
    double lambda = 1.0;
    std::size_t n_fit = 1;
};

// {"lambda": float, "n_fit": int, "beta": [float, ...]}
std::string to_json(const RidgeModel& model);
RidgeModel ridge_model_from_json(const std::string& text);

/// Minimiser of (1/n) sum (Y_i - <X_i, beta>)^2 + lambda ||beta||^2, i.e.
/// beta = (1/n) (Sigma_hat + lambda I)^{-1} X^T Y with Sigma_hat = X^T X / n.
RidgeModel ridge_fit(const Dataset& data, double lambda);

double predict(const RidgeModel& model, std::span<const double> x);

// Gram statistics of a sample, from which the ridge fit on the full sample or
// on the sample with one point removed is solved in O(d^3) without copying.
class RidgeGram {
public:
    explicit RidgeGram(const Dataset& data);

    RidgeModel fit(double lambda) const;
    RidgeModel fit_without(std::size_t j, double lambda) const;

private:
    const Dataset* data_;
    SquareMatrix gram_;  // sum X_i X_i^T
    RealVector moment_;  // sum X_i Y_i
};

struct KnnParams {
    std::size_t k = 1;
};

/// Majority vote of the k nearest neighbours (Euclidean, ties to the lowest
/// index): 1 iff the neighbour label sum is >= k/2.
int knn_classify(const Dataset& data, const KnnParams& params, std::span<const double> x);

// Same vote with point `skip` treated as absent (the classifier on tau_skip(D)).
int knn_classify_without(const Dataset& data, std::size_t skip, const KnnParams& params,
                         std::span<const double> x);

struct Ridge {
    double lambda = 1.0;
};
struct Knn {
    std::size_t k = 1;
};
using Algorithm = std::variant<Ridge, Knn>;

/// Leave-one-out risk (1/n) sum_i c(A(tau_i(D), X_i), Y_i) by n explicit refits.
double loo_estimate(const Algorithm& algorithm, const Dataset& data, CostKind kind);

/// Ridge leave-one-out risk under squared cost via a rank-one downdate.
///
/// The fit on tau_i(D) solves (G - x_i x_i^T + (n-1) lambda I) b = c - x_i y_i
/// with G = sum x x^T, c = sum x y, which keeps the 1/(n-1) normalisation of
/// the n-1 point objective. With H = G + (n-1) lambda I and
/// h_i = x_i^T H^{-1} x_i, the held-out residual is
/// (y_i - x_i^T H^{-1} c) / (1 - h_i). Points whose amplification
/// 1/(1 - h_i) exceeds 1e12 are refit explicitly instead.
double ridge_loo_fast(const Dataset& data, double lambda);

struct McEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

/// Monte Carlo estimate of L_P = E[c(A(D, X), Y)] over m fresh draws from spec.
McEstimate prediction_error_mc(const RidgeModel& model, const DataSpec& spec, std::size_t m, CostKind kind,
                               const SeedSpec& seed);
McEstimate prediction_error_mc(const Dataset& train, const KnnParams& params, const DataSpec& spec,
                               std::size_t m, const SeedSpec& seed);

}  // namespace stabilab
