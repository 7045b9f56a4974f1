#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "stabilab/harness.hpp"
#include "stabilab/io.hpp"

namespace stabilab {

using Json = nlohmann::ordered_json;

namespace {

const ExperimentConfig& config_of(const Report& report) {
    return std::visit([](const auto& r) -> const ExperimentConfig& { return r.config; }, report);
}

std::size_t row_count(const Report& report) {
    return std::visit([](const auto& r) { return r.rows.size(); }, report);
}

const char* flag(bool b) { return b ? "true" : "false"; }

// JSON has no infinity; such values are written as strings.
Json number(double v) {
    if (std::isfinite(v)) return Json(v);
    if (std::isnan(v)) return Json(nullptr);
    return Json(v > 0 ? "inf" : "-inf");
}

std::string csv_of(const CoverageReport& r) {
    std::ostringstream out;
    out << "n,x,threshold,failure_bound,vacuous,exceedances,exceedance_rate,reps,half_width,max_ratio,sound\n";
    for (const auto& row : r.rows)
        out << row.n << ',' << fmt17(row.x) << ',' << fmt17(row.threshold) << ',' << fmt17(row.failure_bound) << ','
            << flag(row.vacuous) << ',' << row.exceedances << ',' << fmt17(row.exceedance_rate) << ',' << row.reps
            << ',' << fmt17(row.half_width) << ',' << fmt17(row.max_ratio) << ',' << flag(row.sound) << '\n';
    return out.str();
}

std::string csv_of(const RateReport& r) {
    std::ostringstream out;
    out << "n,median_deviation,slope,intercept,ci_low,ci_high\n";
    for (const auto& row : r.rows)
        out << row.n << ',' << fmt17(row.median_deviation) << ',' << fmt17(r.slope) << ',' << fmt17(r.intercept)
            << ',' << fmt17(r.ci_low) << ',' << fmt17(r.ci_high) << '\n';
    return out.str();
}

std::string csv_of(const StabilitySweepReport& r) {
    std::ostringstream out;
    out << "algo,q,n,lambda_or_k,s_q_hat,std_error,gamma_theory,dominated\n";
    for (const auto& row : r.rows) {
        out << row.algo << ',' << fmt17(row.q) << ',' << row.n << ',' << fmt17(row.lambda_or_k) << ',';
        if (row.skipped.empty())
            out << fmt17(row.s_q_hat) << ',' << fmt17(row.std_error) << ',' << fmt17(row.gamma_theory) << ','
                << flag(row.dominated) << '\n';
        else
            out << ",,,skipped\n";
    }
    return out.str();
}

std::string csv_of(const EfronSteinReport& r) {
    std::ostringstream out;
    out << "f,n,q,lhs,rhs,lhs_se,rhs_se,pass\n";
    for (const auto& row : r.rows)
        out << row.f << ',' << row.n << ',' << fmt17(row.q) << ',' << fmt17(row.result.lhs) << ','
            << fmt17(row.result.rhs) << ',' << fmt17(row.result.lhs_se) << ',' << fmt17(row.result.rhs_se) << ','
            << flag(row.result.pass()) << '\n';
    return out.str();
}

std::string csv_of(const BoundsTableReport& r) {
    std::ostringstream out;
    out << "bound_name,b_x,lambda,eta,n,q_or_x,value,vacuous\n";
    for (const auto& row : r.rows)
        out << row.bound_name << ',' << fmt17(row.b_x) << ',' << fmt17(row.lambda) << ',' << fmt17(row.eta) << ','
            << row.n << ',' << fmt17(row.q_or_x) << ',' << fmt17(row.value) << ',' << flag(row.vacuous) << '\n';
    return out.str();
}

Json rows_json(const CoverageReport& r) {
    Json out = Json::object();
    out["bound"] = r.bound;
    out["max_lp_std_error"] = number(r.max_lp_std_error);
    Json rows = Json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"n", row.n},
                        {"x", number(row.x)},
                        {"threshold", number(row.threshold)},
                        {"failure_bound", number(row.failure_bound)},
                        {"vacuous", row.vacuous},
                        {"exceedances", row.exceedances},
                        {"exceedance_rate", number(row.exceedance_rate)},
                        {"reps", row.reps},
                        {"half_width", number(row.half_width)},
                        {"max_ratio", number(row.max_ratio)},
                        {"sound", row.sound}});
    out["rows"] = rows;
    Json dev = Json::array();
    for (std::size_t i = 0; i < r.deviations.size(); ++i)
        dev.push_back({{"n", r.config.n_grid[i]}, {"deviations", r.deviations[i]}});
    out["deviations"] = dev;
    return out;
}

Json rows_json(const RateReport& r) {
    Json out = Json::object();
    out["slope"] = number(r.slope);
    out["intercept"] = number(r.intercept);
    out["ci_low"] = number(r.ci_low);
    out["ci_high"] = number(r.ci_high);
    Json rows = Json::array();
    for (std::size_t i = 0; i < r.rows.size(); ++i)
        rows.push_back({{"n", r.rows[i].n},
                        {"median_deviation", number(r.rows[i].median_deviation)},
                        {"deviations", r.deviations[i]}});
    out["rows"] = rows;
    return out;
}

Json rows_json(const StabilitySweepReport& r) {
    Json rows = Json::array();
    for (const auto& row : r.rows) {
        Json j = {{"algo", row.algo}, {"q", number(row.q)}, {"n", row.n}, {"lambda_or_k", number(row.lambda_or_k)}};
        if (row.skipped.empty()) {
            j["s_q_hat"] = number(row.s_q_hat);
            j["std_error"] = number(row.std_error);
            j["gamma_theory"] = number(row.gamma_theory);
            j["gamma_std_error"] = number(row.gamma_std_error);
            j["dominated"] = row.dominated;
        } else {
            j["skipped"] = row.skipped;
        }
        rows.push_back(j);
    }
    return {{"rows", rows}};
}

Json rows_json(const EfronSteinReport& r) {
    Json rows = Json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"f", row.f},
                        {"n", row.n},
                        {"q", number(row.q)},
                        {"lhs", number(row.result.lhs)},
                        {"rhs", number(row.result.rhs)},
                        {"lhs_se", number(row.result.lhs_se)},
                        {"rhs_se", number(row.result.rhs_se)},
                        {"pass", row.result.pass()}});
    return {{"rows", rows}};
}

Json rows_json(const BoundsTableReport& r) {
    Json rows = Json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"bound_name", row.bound_name},
                        {"b_x", number(row.b_x)},
                        {"lambda", number(row.lambda)},
                        {"eta", number(row.eta)},
                        {"n", row.n},
                        {"q_or_x", number(row.q_or_x)},
                        {"value", number(row.value)},
                        {"vacuous", row.vacuous}});
    return {{"rows", rows}};
}

// ---------------------------------------------------------------------------
// SVG

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

std::string num(double v, int decimals = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string sig(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

struct Axes {
    double x0, x1, y0, y1;

    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

void svg_open(std::ostringstream& out, const std::string& title) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth, 0) << "\" height=\""
        << num(kHeight, 0) << "\" viewBox=\"0 0 " << num(kWidth, 0) << ' ' << num(kHeight, 0) << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"14\">" << title << "</text>\n";
}

void svg_frame(std::ostringstream& out, const Axes& a, const std::string& xlabel, const std::string& ylabel,
               const std::vector<std::pair<double, std::string>>& xticks,
               const std::vector<std::pair<double, std::string>>& yticks) {
    const double left = kLeft, right = kWidth - kRight, top = kTop, bottom = kHeight - kBottom;
    out << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(right - left)
        << "\" height=\"" << num(bottom - top) << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (const auto& [v, label] : xticks)
        out << "<text x=\"" << num(a.px(v)) << "\" y=\"" << num(bottom + 16)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << label << "</text>\n";
    for (const auto& [v, label] : yticks)
        out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(a.py(v) + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << label << "</text>\n";
    out << "<text x=\"" << num((left + right) / 2) << "\" y=\"" << num(kHeight - 12)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xlabel << "</text>\n";
    out << "<text x=\"16\" y=\"" << num((top + bottom) / 2) << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"12\" transform=\"rotate(-90 16 " << num((top + bottom) / 2) << ")\">" << ylabel << "</text>\n";
}

void polyline(std::ostringstream& out, const Axes& a, const std::vector<std::pair<double, double>>& pts,
              const std::string& stroke, const std::string& extra = "") {
    out << "<polyline fill=\"none\" stroke=\"" << stroke << "\"" << extra << " points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
        out << (i ? " " : "") << num(a.px(pts[i].first)) << ',' << num(a.py(pts[i].second));
    out << "\"/>\n";
}

std::string svg_of(const CoverageReport& r) {
    const auto& xs = r.config.x_grid;
    const double xmax = *std::max_element(xs.begin(), xs.end()) * 1.05;
    const Axes a{0.0, xmax, 0.0, 1.0};
    std::ostringstream out;
    svg_open(out, "Exceedance rate of the deviation bound (" + r.bound + " case)");
    std::vector<std::pair<double, std::string>> xticks, yticks;
    for (int i = 0; i <= 5; ++i) xticks.emplace_back(xmax * i / 5.0, sig(xmax * i / 5.0));
    for (int i = 0; i <= 4; ++i) yticks.emplace_back(i / 4.0, num(i / 4.0));
    svg_frame(out, a, "x", "exceedance rate", xticks, yticks);

    std::vector<std::pair<double, double>> curve;
    for (int i = 0; i <= 200; ++i) {
        const double x = xmax * i / 200.0;
        curve.emplace_back(x, std::min(1.0, std::numbers::e * std::exp(-x)));
    }
    polyline(out, a, curve, "gray", " stroke-dasharray=\"6 4\"");

    const std::size_t nx = xs.size();
    for (std::size_t ni = 0; ni < r.config.n_grid.size(); ++ni) {
        const std::string color = kPalette[ni % std::size(kPalette)];
        std::vector<std::pair<double, double>> pts;
        for (std::size_t xi = 0; xi < nx; ++xi) {
            const auto& row = r.rows[ni * nx + xi];
            pts.emplace_back(row.x, row.exceedance_rate);
        }
        std::sort(pts.begin(), pts.end());
        polyline(out, a, pts, color);
        for (const auto& [x, y] : pts)
            out << "<circle cx=\"" << num(a.px(x)) << "\" cy=\"" << num(a.py(y)) << "\" r=\"3.5\" fill=\"" << color
                << "\"/>\n";
        out << "<text x=\"" << num(kWidth - kRight - 8) << "\" y=\"" << num(kTop + 16 + 14.0 * ni)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color << "\">n = "
            << r.config.n_grid[ni] << "</text>\n";
    }
    out << "<text x=\"" << num(kWidth - kRight - 8) << "\" y=\"" << num(kTop + 16 + 14.0 * r.config.n_grid.size())
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"gray\">e exp(-x)</text>\n";
    out << "</svg>\n";
    return out.str();
}

std::string svg_of(const RateReport& r) {
    std::vector<double> lx, ly;
    for (const auto& row : r.rows) {
        lx.push_back(std::log10(static_cast<double>(row.n)));
        ly.push_back(std::log10(row.median_deviation));
    }
    const auto [xmin, xmax] = std::minmax_element(lx.begin(), lx.end());
    const auto [ymin, ymax] = std::minmax_element(ly.begin(), ly.end());
    const double xpad = 0.05 * std::max(*xmax - *xmin, 0.1);
    const double ypad = 0.1 * std::max(*ymax - *ymin, 0.1);
    const Axes a{*xmin - xpad, *xmax + xpad, *ymin - ypad, *ymax + ypad};

    std::ostringstream out;
    svg_open(out, "Median deviation vs n (slope " + sig(r.slope) + ", 95% CI [" + sig(r.ci_low) + ", " +
                      sig(r.ci_high) + "])");
    std::vector<std::pair<double, std::string>> xticks, yticks;
    for (const auto& row : r.rows) xticks.emplace_back(std::log10(static_cast<double>(row.n)), std::to_string(row.n));
    for (int i = 0; i <= 4; ++i) {
        const double v = a.y0 + (a.y1 - a.y0) * i / 4.0;
        yticks.emplace_back(v, sig(std::pow(10.0, v)));
    }
    svg_frame(out, a, "n (log scale)", "median |LoO - L_P| (log scale)", xticks, yticks);

    // Fit is in natural logs: ln med = intercept + slope ln n.
    auto fitted = [&](double log10_n) { return (r.intercept + r.slope * log10_n * std::numbers::ln10) / std::numbers::ln10; };
    polyline(out, a, {{a.x0, fitted(a.x0)}, {a.x1, fitted(a.x1)}}, "#d62728");
    for (std::size_t i = 0; i < lx.size(); ++i)
        out << "<circle cx=\"" << num(a.px(lx[i])) << "\" cy=\"" << num(a.py(ly[i])) << "\" r=\"4\" fill=\""
            << kPalette[0] << "\"/>\n";
    out << "</svg>\n";
    return out.str();
}

std::string extension(EmitFormat f) {
    switch (f) {
        case EmitFormat::csv: return "csv";
        case EmitFormat::json: return "json";
        case EmitFormat::svg: return "svg";
    }
    return "?";
}

}  // namespace

std::vector<EmitFormat> parse_emit_formats(const std::string& list) {
    std::vector<EmitFormat> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        EmitFormat f;
        if (item == "csv")
            f = EmitFormat::csv;
        else if (item == "json")
            f = EmitFormat::json;
        else if (item == "svg")
            f = EmitFormat::svg;
        else
            throw ConfigError("unknown emit format '" + item + "' (expected csv, json or svg)");
        if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
    }
    if (out.empty()) throw ConfigError("no emit format given");
    return out;
}

std::string report_csv(const Report& report) {
    return std::visit([](const auto& r) { return csv_of(r); }, report);
}

std::string report_json(const Report& report) {
    const ExperimentConfig& config = config_of(report);
    Json out;
    out["kind"] = to_string(config.kind);
    out["config"] = Json::parse(config_to_json(config));
    const Json body = std::visit([](const auto& r) { return rows_json(r); }, report);
    for (const auto& item : body.items()) out[item.key()] = item.value();
    out["invariant_violated"] = invariant_violated(report);
    return out.dump(2) + "\n";
}

std::string report_svg(const Report& report) {
    if (const auto* r = std::get_if<CoverageReport>(&report)) return svg_of(*r);
    if (const auto* r = std::get_if<RateReport>(&report)) return svg_of(*r);
    throw PreconditionError("svg output exists only for coverage and rate reports");
}

std::string report_file_name(const Report& report, EmitFormat format) {
    const ExperimentConfig& config = config_of(report);
    return to_string(config.kind) + "_" + std::to_string(config.base_seed) + "." + extension(format);
}

std::vector<std::filesystem::path> write_report_files(const Report& report, const std::vector<EmitFormat>& formats,
                                                      const std::filesystem::path& out_dir) {
    if (row_count(report) == 0) throw PreconditionError("report is empty");
    // Render everything before touching the disk so a bad format leaves no partial output.
    std::vector<std::pair<std::filesystem::path, std::string>> files;
    for (EmitFormat f : formats) {
        std::string body = f == EmitFormat::csv ? report_csv(report)
                           : f == EmitFormat::json ? report_json(report)
                                                   : report_svg(report);
        files.emplace_back(out_dir / report_file_name(report, f), std::move(body));
    }
    std::vector<std::filesystem::path> written;
    for (const auto& [path, body] : files) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << body;
        out.close();
        if (!out) throw PreconditionError("cannot write '" + path.string() + "'");
        written.push_back(path);
    }
    return written;
}

std::vector<std::filesystem::path> emit_report(const Report& report, const std::vector<EmitFormat>& formats,
                                               const std::filesystem::path& out_dir) {
    if (row_count(report) == 0) throw PreconditionError("report is empty");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw PreconditionError("cannot create out_dir '" + out_dir.string() + "': " + ec.message());
    RunLock lock(out_dir);
    return write_report_files(report, formats, out_dir);
}

RunLock::RunLock(const std::filesystem::path& dir) : path_(dir / ".stabilab.lock") {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        if (errno == EEXIST)
            throw PreconditionError("run directory '" + dir.string() + "' is locked by another run (" +
                                    path_.string() + ")");
        throw PreconditionError("cannot lock run directory '" + dir.string() + "': " + std::strerror(errno));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

RunLock::~RunLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
}

// ---------------------------------------------------------------------------

std::string summarize(const Report& report) {
    std::ostringstream out;
    if (const auto* r = std::get_if<CoverageReport>(&report)) {
        out << "coverage (" << r->bound << " case), reps = " << r->config.reps << "\n";
        for (const auto& row : r->rows)
            out << "  n=" << row.n << " x=" << sig(row.x) << " threshold=" << sig(row.threshold)
                << " exceedance=" << sig(row.exceedance_rate) << " bound=" << sig(row.failure_bound)
                << (row.vacuous ? " (vacuous)" : "") << " max_ratio=" << sig(row.max_ratio)
                << (row.sound ? "" : " UNSOUND") << "\n";
    } else if (const auto* r = std::get_if<RateReport>(&report)) {
        out << "rate, reps = " << r->config.reps << "\n";
        for (const auto& row : r->rows) out << "  n=" << row.n << " median=" << sig(row.median_deviation) << "\n";
        out << "  slope=" << sig(r->slope) << " 95% CI [" << sig(r->ci_low) << ", " << sig(r->ci_high) << "]\n";
    } else if (const auto* r = std::get_if<StabilitySweepReport>(&report)) {
        out << "stability sweep, reps = " << r->config.reps << "\n";
        for (const auto& row : r->rows) {
            out << "  " << row.algo << " q=" << sig(row.q) << " n=" << row.n << " param=" << sig(row.lambda_or_k);
            if (row.skipped.empty())
                out << " s=" << sig(row.s_q_hat) << " +- " << sig(row.std_error) << " gamma=" << sig(row.gamma_theory)
                    << (row.dominated ? "" : " NOT DOMINATED");
            else
                out << " skipped: " << row.skipped;
            out << "\n";
        }
    } else if (const auto* r = std::get_if<EfronSteinReport>(&report)) {
        out << "efron-stein, reps = " << r->config.reps << "\n";
        for (const auto& row : r->rows)
            out << "  f=" << row.f << " n=" << row.n << " q=" << sig(row.q) << " lhs=" << sig(row.result.lhs)
                << " rhs=" << sig(row.result.rhs) << (row.result.pass() ? "" : " FAIL") << "\n";
    } else if (const auto* r = std::get_if<BoundsTableReport>(&report)) {
        out << "bounds table, " << r->rows.size() << " rows\n";
        for (const auto& row : r->rows)
            out << "  " << row.bound_name << " n=" << row.n << " lambda=" << sig(row.lambda)
                << " q_or_x=" << sig(row.q_or_x) << " value=" << sig(row.value) << (row.vacuous ? " (vacuous)" : "")
                << "\n";
    }
    return out.str();
}

}  // namespace stabilab
