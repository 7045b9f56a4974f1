#include "stabilab/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "stabilab/io.hpp"

namespace stabilab {

std::string to_string(XFamily f) {
    switch (f) {
        case XFamily::uniform_ball: return "uniform_ball";
        case XFamily::uniform_cube: return "uniform_cube";
        case XFamily::rademacher_coords: return "rademacher_coords";
    }
    return "?";
}

std::string to_string(YModel m) {
    switch (m) {
        case YModel::linear_clipped: return "linear_clipped";
        case YModel::linear_gaussian: return "linear_gaussian";
        case YModel::bernoulli_label: return "bernoulli_label";
    }
    return "?";
}

XFamily x_family_from_string(const std::string& s) {
    if (s == "uniform_ball") return XFamily::uniform_ball;
    if (s == "uniform_cube") return XFamily::uniform_cube;
    if (s == "rademacher_coords") return XFamily::rademacher_coords;
    throw std::invalid_argument("unknown x_family '" + s + "'");
}

YModel y_model_from_string(const std::string& s) {
    if (s == "linear_clipped") return YModel::linear_clipped;
    if (s == "linear_gaussian") return YModel::linear_gaussian;
    if (s == "bernoulli_label") return YModel::bernoulli_label;
    throw std::invalid_argument("unknown y_model '" + s + "'");
}

void DataSpec::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("invalid DataSpec: " + what); };
    if (d < 1) fail("d must be >= 1");
    if (beta_star.size() != d) fail("beta_star must have dimension d");
    if (!all_finite(beta_star)) fail("beta_star must be finite");
    if (!(b_x > 0.0) || !std::isfinite(b_x)) fail("b_x must be positive and finite");
    if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) fail("noise_scale must be >= 0");
    if (!std::isfinite(intercept)) fail("intercept must be finite");
    if (b_y && (!(*b_y > 0.0) || !std::isfinite(*b_y))) fail("b_y must be positive and finite");
    if (v && (!(*v > 0.0) || !std::isfinite(*v))) fail("v must be positive and finite");

    const double signal = norm2(beta_star) * b_x;
    switch (y_model) {
        case YModel::linear_clipped:
            if (!b_y) fail("linear_clipped requires b_y");
            if (*b_y < std::abs(intercept) + signal)
                fail("linear_clipped requires b_y >= |intercept| + ||beta_star|| b_x");
            break;
        case YModel::linear_gaussian:
            break;
        case YModel::bernoulli_label:
            if (!b_y) fail("bernoulli_label requires b_y");
            if (*b_y < 1.0) fail("bernoulli_label requires b_y >= 1");
            if (intercept - signal < 0.0 || intercept + signal > 1.0)
                fail("bernoulli_label requires intercept +- ||beta_star|| b_x within [0, 1]");
            break;
    }
}

double DataSpec::subgaussian_v() const {
    if (v) return *v;
    const double s = norm2(beta_star) * b_x;
    return noise_scale * noise_scale + s * s;
}

double DataSpec::mean_y() const {
    // Clipping is symmetric, so a centred linear_clipped model stays centred.
    const bool constant = noise_scale == 0.0 && norm2(beta_star) == 0.0;
    if (y_model == YModel::linear_clipped && intercept != 0.0 && !constant) {
        throw std::domain_error("mean_y: no closed form for an off-centre noisy linear_clipped model");
    }
    if (y_model == YModel::linear_clipped) return std::clamp(intercept, -*b_y, *b_y);
    return intercept;
}

// ---------------------------------------------------------------------------

Dataset::Dataset(std::size_t d, std::vector<double> xs, std::vector<double> ys)
    : d_(d), xs_(std::move(xs)), ys_(std::move(ys)) {
    if (d_ < 1) throw std::invalid_argument("Dataset: d must be >= 1");
    if (ys_.empty()) throw std::invalid_argument("Dataset: n must be >= 1");
    if (xs_.size() != ys_.size() * d_) throw std::invalid_argument("Dataset: xs size must equal n * d");
    if (!all_finite(xs_) || !all_finite(ys_)) throw std::invalid_argument("Dataset: non-finite entries");
}

namespace {

// Shrinks x onto the closed ball of radius r when rounding pushed it outside.
void clamp_to_ball(std::span<double> x, double r) {
    while (norm2(x) > r) {
        for (double& c : x) c *= 1.0 - 0x1p-50;
    }
}

void sample_x(const DataSpec& spec, std::mt19937_64& rng, std::span<double> x) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double side = spec.b_x / std::sqrt(static_cast<double>(spec.d));
    switch (spec.x_family) {
        case XFamily::uniform_ball: {
            double nrm = 0.0;
            do {
                for (double& c : x) c = normal(rng);
                nrm = norm2(x);
            } while (nrm == 0.0);
            const double radius = spec.b_x * std::pow(unif(rng), 1.0 / static_cast<double>(spec.d));
            for (double& c : x) c *= radius / nrm;
            break;
        }
        case XFamily::uniform_cube:
            for (double& c : x) c = side * (2.0 * unif(rng) - 1.0);
            break;
        case XFamily::rademacher_coords:
            for (double& c : x) c = (rng() >> 63) ? side : -side;
            break;
    }
    clamp_to_ball(x, spec.b_x);
}

double sample_y(const DataSpec& spec, std::mt19937_64& rng, std::span<const double> x) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double signal = spec.intercept + dot(spec.beta_star, x);
    switch (spec.y_model) {
        case YModel::linear_clipped: {
            const double y = signal + spec.noise_scale * normal(rng);
            return std::clamp(y, -*spec.b_y, *spec.b_y);
        }
        case YModel::linear_gaussian:
            return signal + spec.noise_scale * normal(rng);
        case YModel::bernoulli_label:
            return unif(rng) < signal ? 1.0 : 0.0;
    }
    return 0.0;
}

}  // namespace

Dataset sample_dataset(const DataSpec& spec, std::size_t n, const SeedSpec& seed) {
    spec.validate();
    if (n < 1) throw std::invalid_argument("sample_dataset: n must be >= 1");
    auto rng = seed.engine();
    std::vector<double> xs(n * spec.d);
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::span<double> x(xs.data() + i * spec.d, spec.d);
        sample_x(spec, rng, x);
        ys[i] = sample_y(spec, rng, x);
    }
    return Dataset(spec.d, std::move(xs), std::move(ys));
}

Dataset leave_one_out(const Dataset& data, std::size_t j) {
    if (data.n() < 2) throw std::invalid_argument("leave_one_out: need n >= 2");
    if (j >= data.n()) throw std::out_of_range("leave_one_out: index out of range");
    const std::size_t d = data.d();
    std::vector<double> xs;
    std::vector<double> ys;
    xs.reserve((data.n() - 1) * d);
    ys.reserve(data.n() - 1);
    for (std::size_t i = 0; i < data.n(); ++i) {
        if (i == j) continue;
        const auto x = data.x(i);
        xs.insert(xs.end(), x.begin(), x.end());
        ys.push_back(data.y(i));
    }
    return Dataset(d, std::move(xs), std::move(ys));
}

Dataset replace_point(const Dataset& data, std::size_t j, std::span<const double> x_new, double y_new) {
    if (j >= data.n()) throw std::out_of_range("replace_point: index out of range");
    if (x_new.size() != data.d()) throw std::invalid_argument("replace_point: dimension mismatch");
    std::vector<double> xs = data.xs();
    std::vector<double> ys = data.ys();
    std::copy(x_new.begin(), x_new.end(), xs.begin() + static_cast<std::ptrdiff_t>(j * data.d()));
    ys[j] = y_new;
    return Dataset(data.d(), std::move(xs), std::move(ys));
}

AssumptionReport verify_assumptions(const Dataset& data, const DataSpec& spec) {
    AssumptionReport rep;
    double mean = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        rep.max_x_norm = std::max(rep.max_x_norm, norm2(data.x(i)));
        rep.max_abs_y = std::max(rep.max_abs_y, std::abs(data.y(i)));
        mean += data.y(i);
    }
    mean /= static_cast<double>(data.n());
    rep.x_bound_ok = rep.max_x_norm <= spec.b_x;
    if (spec.b_y) rep.y_bound_ok = rep.max_abs_y <= *spec.b_y;

    if (spec.y_model == YModel::linear_gaussian) {
        const double v = spec.subgaussian_v();
        for (double q : {2.0, 4.0, 8.0}) {
            double m = 0.0;
            for (double y : data.ys()) m += std::pow(std::abs(y - mean), q);
            const double norm_q = std::pow(m / static_cast<double>(data.n()), 1.0 / q);
            rep.subg_ratios.push_back({q, norm_q / (2.0 * std::numbers::e * std::sqrt(v) * std::sqrt(q))});
        }
    }
    return rep;
}

void write_csv(std::ostream& out, const Dataset& data) {
    for (std::size_t k = 0; k < data.d(); ++k) out << 'x' << (k + 1) << ',';
    out << "y\n";
    for (std::size_t i = 0; i < data.n(); ++i) {
        for (double c : data.x(i)) out << fmt17(c) << ',';
        out << fmt17(data.y(i)) << '\n';
    }
}

Dataset read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("read_csv: missing header");
    std::size_t cols = std::count(line.begin(), line.end(), ',') + 1;
    if (cols < 2) throw std::invalid_argument("read_csv: need at least one feature column and y");
    std::istringstream hs(line);
    std::string field;
    for (std::size_t k = 0; k < cols; ++k) {
        std::getline(hs, field, ',');
        const std::string want = k + 1 < cols ? "x" + std::to_string(k + 1) : "y";
        if (field != want) throw std::invalid_argument("read_csv: bad header field '" + field + "'");
    }
    const std::size_t d = cols - 1;
    std::vector<double> xs;
    std::vector<double> ys;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t k = 0;
        while (std::getline(ls, field, ',')) {
            std::size_t used = 0;
            const double v = std::stod(field, &used);
            if (used != field.size()) throw std::invalid_argument("read_csv: bad number '" + field + "'");
            if (k < d) xs.push_back(v);
            else if (k == d) ys.push_back(v);
            ++k;
        }
        if (k != cols) throw std::invalid_argument("read_csv: wrong column count");
    }
    return Dataset(d, std::move(xs), std::move(ys));
}

}  // namespace stabilab
