#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stabilab/core_math.hpp"
#include "stabilab/rng.hpp"

namespace stabilab {

enum class XFamily { uniform_ball, uniform_cube, rademacher_coords };
enum class YModel { linear_clipped, linear_gaussian, bernoulli_label };

std::string to_string(XFamily f);
std::string to_string(YModel m);
XFamily x_family_from_string(const std::string& s);
YModel y_model_from_string(const std::string& s);

// Synthetic distribution P over (X, Y).
//
// X families are symmetric about 0 and satisfy ||X||_2 <= b_x by construction:
//   uniform_ball       uniform on the ball of radius b_x
//   uniform_cube       uniform on [-b_x/sqrt(d), b_x/sqrt(d)]^d
//   rademacher_coords  entries +-b_x/sqrt(d)
//
// Y models, with s = intercept + <beta_star, X> and e ~ N(0, 1):
//   linear_clipped   Y = clamp(s + noise_scale e, -b_y, b_y)
//   linear_gaussian  Y = s + noise_scale e
//   bernoulli_label  Y ~ Bernoulli(s), so intercept is the marginal P(Y = 1)
struct DataSpec {
    std::size_t d = 1;
    XFamily x_family = XFamily::uniform_ball;
    double b_x = 1.0;
    YModel y_model = YModel::linear_clipped;
    RealVector beta_star{0.0};
    double noise_scale = 0.0;
    double intercept = 0.0;
    std::optional<double> b_y;
    std::optional<double> v;

    // Throws std::invalid_argument naming the first violated constraint.
    void validate() const;

    // SubG proxy: v when given, else noise_scale^2 + ||beta_star||^2 b_x^2.
    double subgaussian_v() const;
    // E[Y] in closed form; exact for linear_gaussian and bernoulli_label
    // because every X family is centred.
    double mean_y() const;

    friend bool operator==(const DataSpec&, const DataSpec&) = default;
};

// n labelled points stored row-major.
class Dataset {
public:
    Dataset(std::size_t d, std::vector<double> xs, std::vector<double> ys);

    std::size_t n() const { return ys_.size(); }
    std::size_t d() const { return d_; }
    std::span<const double> x(std::size_t i) const { return {xs_.data() + i * d_, d_}; }
    double y(std::size_t i) const { return ys_[i]; }
    const std::vector<double>& xs() const { return xs_; }
    const std::vector<double>& ys() const { return ys_; }

    friend bool operator==(const Dataset&, const Dataset&) = default;

private:
    std::size_t d_;
    std::vector<double> xs_;
    std::vector<double> ys_;
};

Dataset sample_dataset(const DataSpec& spec, std::size_t n, const SeedSpec& seed);

// Both take a 0-based index j.
Dataset leave_one_out(const Dataset& data, std::size_t j);
Dataset replace_point(const Dataset& data, std::size_t j, std::span<const double> x_new, double y_new);

struct AssumptionReport {
    struct SubGRatio {
        double q;
        double ratio;  // ||Y - mean||_q / (2 e sqrt(v) sqrt(q)) on the sample
    };

    double max_x_norm = 0.0;
    double max_abs_y = 0.0;
    bool x_bound_ok = true;
    std::optional<bool> y_bound_ok;
    std::vector<SubGRatio> subg_ratios;
};

AssumptionReport verify_assumptions(const Dataset& data, const DataSpec& spec);

// CSV with header x1,...,xd,y and 17 significant digits.
void write_csv(std::ostream& out, const Dataset& data);
Dataset read_csv(std::istream& in);

}  // namespace stabilab
