#include "qdcav/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace qdcav::svg {

namespace {

constexpr double kWidth = 640.0, kHeight = 420.0;
constexpr double kLeft = 80.0, kRight = 20.0, kTop = 40.0, kBottom = 60.0;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string render(const Plot& plot) {
    auto tx = [&](double x) { return plot.log_x ? std::log10(x) : x; };
    auto usable = [&](double x, double y) { return std::isfinite(tx(x)) && std::isfinite(y); };

    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : plot.series)
        for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
            if (!usable(s.x[k], s.y[k])) continue;
            x0 = std::min(x0, tx(s.x[k]));
            x1 = std::max(x1, tx(s.x[k]));
            y0 = std::min(y0, s.y[k]);
            y1 = std::max(y1, s.y[k]);
        }
    if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;

    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (tx(x) - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return kTop + (y1 - y) / (y1 - y0) * ph; };

    std::string o;
    o += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\" fill=\"white\"/>\n";
    o += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
    o += "<text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" + escape_xml(plot.title) +
         "</text>\n";
    o += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 14) + "\" text-anchor=\"middle\">" +
         escape_xml(plot.x_label) + "</text>\n";
    o += "<text x=\"18\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         num(kTop + ph / 2) + ")\">" + escape_xml(plot.y_label) + "</text>\n";

    for (int k = 0; k <= 4; ++k) {
        const double fx = x0 + (x1 - x0) * k / 4.0;
        const double sx = kLeft + pw * k / 4.0;
        const double label = plot.log_x ? std::pow(10.0, fx) : fx;
        o += "<line x1=\"" + num(sx) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(sx) + "\" y2=\"" +
             num(kTop + ph + 5) + "\" stroke=\"black\"/>\n";
        o += "<text x=\"" + num(sx) + "\" y=\"" + num(kTop + ph + 18) + "\" text-anchor=\"middle\">" +
             escape_xml(tick_label(label)) + "</text>\n";
        const double fy = y0 + (y1 - y0) * k / 4.0;
        const double sy = py(fy);
        o += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(sy) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(sy) +
             "\" stroke=\"black\"/>\n";
        o += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(sy + 4) + "\" text-anchor=\"end\">" +
             escape_xml(tick_label(fy)) + "</text>\n";
    }

    for (std::size_t s = 0; s < plot.series.size(); ++s) {
        const auto& ser = plot.series[s];
        const char* color = kColors[s % (sizeof kColors / sizeof *kColors)];
        const std::size_t n = std::min(ser.x.size(), ser.y.size());
        if (ser.markers) {
            for (std::size_t k = 0; k < n; ++k) {
                if (!usable(ser.x[k], ser.y[k])) continue;
                o += "<circle cx=\"" + num(px(ser.x[k])) + "\" cy=\"" + num(py(ser.y[k])) + "\" r=\"3\" fill=\"" +
                     color + "\"/>\n";
            }
        } else {
            std::string pts;
            for (std::size_t k = 0; k < n; ++k) {
                if (!usable(ser.x[k], ser.y[k])) continue;
                pts += num(px(ser.x[k])) + "," + num(py(ser.y[k])) + " ";
            }
            if (!pts.empty()) pts.pop_back();
            o += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts +
                 "\"/>\n";
        }
        if (!ser.label.empty()) {
            const double ly = kTop + 16.0 + 16.0 * static_cast<double>(s);
            o += "<rect x=\"" + num(kLeft + pw - 150) + "\" y=\"" + num(ly - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
                 color + "\"/>\n";
            o += "<text x=\"" + num(kLeft + pw - 134) + "\" y=\"" + num(ly) + "\">" + escape_xml(ser.label) + "</text>\n";
        }
    }
    o += "</svg>\n";
    return o;
}

}  // namespace qdcav::svg
