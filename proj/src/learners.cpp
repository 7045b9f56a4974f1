#include "stabilab/learners.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace stabilab {

std::string to_string(CostKind k) { return k == CostKind::squared ? "squared" : "zero_one"; }

namespace {

bool is_binary(double y) { return y == 0.0 || y == 1.0; }

}  // namespace

double cost(CostKind kind, double y_hat, double y) {
    switch (kind) {
        case CostKind::squared:
            return (y_hat - y) * (y_hat - y);
        case CostKind::zero_one:
            if (!is_binary(y_hat) || !is_binary(y))
                throw std::invalid_argument("zero_one cost requires arguments in {0, 1}");
            return y_hat != y ? 1.0 : 0.0;
    }
    return 0.0;
}

std::string to_json(const RidgeModel& model) {
    nlohmann::ordered_json j;
    j["lambda"] = model.lambda;
    j["n_fit"] = model.n_fit;
    j["beta"] = model.beta;
    return j.dump();
}

RidgeModel ridge_model_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    RidgeModel m;
    m.lambda = j.at("lambda").get<double>();
    m.n_fit = j.at("n_fit").get<std::size_t>();
    m.beta = j.at("beta").get<RealVector>();
    if (m.beta.empty()) throw std::invalid_argument("RidgeModel JSON: empty beta");
    return m;
}

// ---------------------------------------------------------------------------

namespace {

void check_lambda(double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("ridge: lambda must be positive and finite");
}

RidgeModel solve_from_sums(const SquareMatrix& gram, std::span<const double> moment, std::size_t n,
                           double lambda) {
    const double inv_n = 1.0 / static_cast<double>(n);
    const SquareMatrix sigma = inv_n * gram;
    RealVector rhs(moment.begin(), moment.end());
    for (double& r : rhs) r *= inv_n;
    return RidgeModel{solve_regularized(sigma, lambda, rhs), lambda, n};
}

}  // namespace

RidgeGram::RidgeGram(const Dataset& data) : data_(&data), gram_(data.d()), moment_(data.d(), 0.0) {
    for (std::size_t i = 0; i < data.n(); ++i) {
        const auto x = data.x(i);
        gram_.add_outer(x);
        for (std::size_t k = 0; k < x.size(); ++k) moment_[k] += x[k] * data.y(i);
    }
}

RidgeModel RidgeGram::fit(double lambda) const {
    check_lambda(lambda);
    return solve_from_sums(gram_, moment_, data_->n(), lambda);
}

RidgeModel RidgeGram::fit_without(std::size_t j, double lambda) const {
    check_lambda(lambda);
    if (data_->n() < 2) throw std::invalid_argument("ridge: leave-one-out fit needs n >= 2");
    if (j >= data_->n()) throw std::out_of_range("ridge: index out of range");
    const auto x = data_->x(j);
    SquareMatrix gram = gram_;
    gram.add_outer(x, -1.0);
    // exact symmetry after the downdate
    for (std::size_t a = 0; a < gram.dim(); ++a)
        for (std::size_t b = a + 1; b < gram.dim(); ++b) gram(b, a) = gram(a, b);
    RealVector moment = moment_;
    for (std::size_t k = 0; k < x.size(); ++k) moment[k] -= x[k] * data_->y(j);
    return solve_from_sums(gram, moment, data_->n() - 1, lambda);
}

RidgeModel ridge_fit(const Dataset& data, double lambda) {
    check_lambda(lambda);
    return RidgeGram(data).fit(lambda);
}

double predict(const RidgeModel& model, std::span<const double> x) {
    if (x.size() != model.beta.size()) throw std::invalid_argument("predict: dimension mismatch");
    return dot(model.beta, x);
}

// ---------------------------------------------------------------------------

namespace {

void check_labels(const Dataset& data) {
    for (double y : data.ys())
        if (!is_binary(y)) throw std::invalid_argument("knn: labels must be in {0, 1}");
}

int knn_vote(const Dataset& data, std::size_t skip, const KnnParams& params, std::span<const double> x) {
    const std::size_t available = data.n() - (skip < data.n() ? 1 : 0);
    if (available < 2 || params.k < 1 || params.k > available - 1)
        throw std::invalid_argument("knn: k must satisfy 1 <= k <= n - 1");
    if (x.size() != data.d()) throw std::invalid_argument("knn: dimension mismatch");
    check_labels(data);

    struct Cand {
        double dist;
        std::size_t index;
    };
    std::vector<Cand> cands;
    cands.reserve(available);
    for (std::size_t i = 0; i < data.n(); ++i) {
        if (i == skip) continue;
        const auto xi = data.x(i);
        double s = 0.0;
        for (std::size_t c = 0; c < xi.size(); ++c) s += (xi[c] - x[c]) * (xi[c] - x[c]);
        cands.push_back({s, i});
    }
    auto closer = [](const Cand& a, const Cand& b) {
        return a.dist < b.dist || (a.dist == b.dist && a.index < b.index);
    };
    std::nth_element(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(params.k - 1), cands.end(),
                     closer);
    double votes = 0.0;
    for (std::size_t i = 0; i < params.k; ++i) votes += data.y(cands[i].index);
    return 2.0 * votes >= static_cast<double>(params.k) ? 1 : 0;
}

}  // namespace

int knn_classify(const Dataset& data, const KnnParams& params, std::span<const double> x) {
    return knn_vote(data, data.n(), params, x);
}

int knn_classify_without(const Dataset& data, std::size_t skip, const KnnParams& params,
                         std::span<const double> x) {
    if (skip >= data.n()) throw std::out_of_range("knn: index out of range");
    return knn_vote(data, skip, params, x);
}

// ---------------------------------------------------------------------------

double loo_estimate(const Algorithm& algorithm, const Dataset& data, CostKind kind) {
    const std::size_t n = data.n();
    double total = 0.0;
    if (const auto* ridge = std::get_if<Ridge>(&algorithm)) {
        if (n < 2) throw std::invalid_argument("loo_estimate: ridge needs n >= 2");
        for (std::size_t i = 0; i < n; ++i) {
            const RidgeModel m = ridge_fit(leave_one_out(data, i), ridge->lambda);
            total += cost(kind, predict(m, data.x(i)), data.y(i));
        }
    } else {
        const auto& knn = std::get<Knn>(algorithm);
        if (knn.k < 1 || n < knn.k + 2) throw std::invalid_argument("loo_estimate: knn needs n >= k + 2");
        for (std::size_t i = 0; i < n; ++i) {
            const int label = knn_classify_without(data, i, KnnParams{knn.k}, data.x(i));
            total += cost(kind, static_cast<double>(label), data.y(i));
        }
    }
    return total / static_cast<double>(n);
}

double ridge_loo_fast(const Dataset& data, double lambda) {
    check_lambda(lambda);
    const std::size_t n = data.n();
    const std::size_t d = data.d();
    if (n < 2) throw std::invalid_argument("ridge_loo_fast: need n >= 2");

    SquareMatrix h(d);
    RealVector c(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = data.x(i);
        h.add_outer(x);
        for (std::size_t k = 0; k < d; ++k) c[k] += x[k] * data.y(i);
    }
    for (std::size_t k = 0; k < d; ++k) h(k, k) += static_cast<double>(n - 1) * lambda;
    const Cholesky chol(h);
    const RealVector beta_tilde = chol.solve(c);

    std::unique_ptr<RidgeGram> gram;  // built lazily for fallback refits
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = data.x(i);
        const RealVector hx = chol.solve(x);
        const double leverage = dot(x, hx);
        const double slack = 1.0 - leverage;
        double resid;
        if (slack > 0.0 && 1.0 / slack <= 1e12) {
            resid = (data.y(i) - dot(x, beta_tilde)) / slack;
        } else {
            if (!gram) gram = std::make_unique<RidgeGram>(data);
            resid = data.y(i) - predict(gram->fit_without(i, lambda), x);
        }
        total += resid * resid;
    }
    return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------

namespace {

template <typename Loss>
McEstimate mc_mean(const DataSpec& spec, std::size_t m, const SeedSpec& seed, Loss&& loss) {
    if (m < 2) throw std::invalid_argument("prediction_error_mc: m must be >= 2");
    const Dataset test = sample_dataset(spec, m, seed);
    std::vector<double> losses(m);
    for (std::size_t i = 0; i < m; ++i) losses[i] = loss(test.x(i), test.y(i));
    const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(m);
    double ss = 0.0;
    for (double l : losses) ss += (l - mean) * (l - mean);
    const double var = ss / static_cast<double>(m - 1);
    return {mean, std::sqrt(var / static_cast<double>(m))};
}

}  // namespace

McEstimate prediction_error_mc(const RidgeModel& model, const DataSpec& spec, std::size_t m, CostKind kind,
                               const SeedSpec& seed) {
    if (model.beta.size() != spec.d) throw std::invalid_argument("prediction_error_mc: dimension mismatch");
    return mc_mean(spec, m, seed,
                   [&](std::span<const double> x, double y) { return cost(kind, predict(model, x), y); });
}

McEstimate prediction_error_mc(const Dataset& train, const KnnParams& params, const DataSpec& spec,
                               std::size_t m, const SeedSpec& seed) {
    return mc_mean(spec, m, seed, [&](std::span<const double> x, double y) {
        return cost(CostKind::zero_one, static_cast<double>(knn_classify(train, params, x)), y);
    });
}

}  // namespace stabilab
