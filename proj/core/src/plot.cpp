#include "rulkit/plot.hpp"

#include <algorithm>
#include <fstream>

#include "rulkit/errors.hpp"
#include "rulkit/experiment.hpp"

namespace rulkit {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 420;
constexpr double kMargin = 50;

struct Range {
    double lo = 0, hi = 1;
    double map(double v, double out_lo, double out_hi) const {
        const double span = hi - lo;
        const double t = span > 0 ? (v - lo) / span : 0.5;
        return out_lo + t * (out_hi - out_lo);
    }
};

std::ofstream open_svg(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path.string());
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth
        << "' height='" << kHeight << "' viewBox='0 0 " << kWidth << " "
        << kHeight << "'>\n"
        << "<rect width='100%' height='100%' fill='white'/>\n";
    return out;
}

void axes(std::ofstream& out, const std::string& x_label,
          const std::string& y_label) {
    out << "<line x1='" << kMargin << "' y1='" << kHeight - kMargin << "' x2='"
        << kWidth - kMargin << "' y2='" << kHeight - kMargin
        << "' stroke='black'/>\n"
        << "<line x1='" << kMargin << "' y1='" << kMargin << "' x2='" << kMargin
        << "' y2='" << kHeight - kMargin << "' stroke='black'/>\n"
        << "<text x='" << kWidth / 2 << "' y='" << kHeight - 12
        << "' text-anchor='middle' font-size='13'>" << x_label << "</text>\n"
        << "<text x='16' y='" << kHeight / 2
        << "' text-anchor='middle' font-size='13' transform='rotate(-90 16 "
        << kHeight / 2 << ")'>" << y_label << "</text>\n";
}

} // namespace

void write_loss_curve_svg(const LossHistory& history,
                          const std::filesystem::path& path) {
    if (history.size() == 0) throw UsageError("loss curve needs history");
    auto out = open_svg(path);
    Range x{1, double(std::max<std::size_t>(history.size(), 2))};
    const auto& v = history.values();
    Range y{*std::min_element(v.begin(), v.end()),
            *std::max_element(v.begin(), v.end())};
    if (y.lo == y.hi) y.hi = y.lo + 1;
    axes(out, "epoch", "mean training loss");
    out << "<polyline fill='none' stroke='#1f6fb2' stroke-width='1.5' points='";
    for (std::size_t e = 1; e <= history.size(); ++e) {
        out << format_double(x.map(double(e), kMargin, kWidth - kMargin)) << ","
            << format_double(y.map(history.at(e), kHeight - kMargin, kMargin))
            << " ";
    }
    out << "'/>\n</svg>\n";
    if (!out) throw IoError("write failed: " + path.string());
}

void write_scatter_svg(std::span<const double> truths,
                       std::span<const double> preds,
                       const std::filesystem::path& path) {
    if (truths.empty() || truths.size() != preds.size())
        throw UsageError("scatter needs matching non-empty inputs");
    auto out = open_svg(path);
    double hi = 1;
    for (double v : truths) hi = std::max(hi, v);
    for (double v : preds) hi = std::max(hi, v);
    Range r{0, hi * 1.05};
    axes(out, "true RUL (cycles)", "predicted RUL (cycles)");
    out << "<line x1='" << format_double(r.map(0, kMargin, kWidth - kMargin))
        << "' y1='" << format_double(r.map(0, kHeight - kMargin, kMargin))
        << "' x2='" << format_double(r.map(r.hi, kMargin, kWidth - kMargin))
        << "' y2='" << format_double(r.map(r.hi, kHeight - kMargin, kMargin))
        << "' stroke='#999' stroke-dasharray='4 3'/>\n";
    for (std::size_t i = 0; i < truths.size(); ++i) {
        out << "<circle cx='"
            << format_double(r.map(truths[i], kMargin, kWidth - kMargin))
            << "' cy='"
            << format_double(r.map(preds[i], kHeight - kMargin, kMargin))
            << "' r='3' fill='#c23b22' fill-opacity='0.7'/>\n";
    }
    out << "</svg>\n";
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace rulkit
