#pragma once

#include "oracles.hpp"
#include "stabilab/datagen.hpp"

namespace testing_support {

inline stabilab::Dataset to_dataset(const oracle::Points& p) {
    std::vector<double> xs;
    for (const auto& x : p.x) xs.insert(xs.end(), x.begin(), x.end());
    return stabilab::Dataset(p.d, xs, p.y);
}

inline oracle::Points to_points(const stabilab::Dataset& data) {
    oracle::Points p{data.d(), {}, {}};
    for (std::size_t i = 0; i < data.n(); ++i) {
        const auto x = data.x(i);
        p.x.emplace_back(x.begin(), x.end());
        p.y.push_back(data.y(i));
    }
    return p;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max({1e-300, std::abs(a), std::abs(b)}); }

// A clipped linear spec with a non-trivial signal, used across suites.
inline stabilab::DataSpec clipped_spec(std::size_t d = 3) {
    stabilab::DataSpec s;
    s.d = d;
    s.x_family = stabilab::XFamily::uniform_ball;
    s.b_x = 1.0;
    s.y_model = stabilab::YModel::linear_clipped;
    s.beta_star.assign(d, 0.0);
    const double base[] = {0.5, -0.3, 0.2, 0.1, -0.1, 0.05, 0.3, -0.2};
    for (std::size_t i = 0; i < d; ++i) s.beta_star[i] = base[i % 8];
    s.noise_scale = 0.3;
    s.b_y = 1.0;
    return s;
}

inline stabilab::DataSpec zero_spec(std::size_t d = 2) {
    stabilab::DataSpec s;
    s.d = d;
    s.beta_star.assign(d, 0.0);
    s.y_model = stabilab::YModel::linear_clipped;
    s.b_y = 1.0;
    return s;
}

inline stabilab::DataSpec label_spec(std::size_t d = 2, double p = 0.5) {
    stabilab::DataSpec s;
    s.d = d;
    s.x_family = stabilab::XFamily::uniform_cube;
    s.y_model = stabilab::YModel::bernoulli_label;
    s.beta_star.assign(d, 0.0);
    s.beta_star[0] = 0.3;
    s.intercept = p;
    s.b_y = 1.0;
    return s;
}

}  // namespace testing_support
