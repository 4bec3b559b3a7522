#pragma once

// Minimal SVG line and scatter plots.

#include <string>
#include <vector>

namespace qdcav::svg {

struct Series {
    std::string label;
    std::vector<double> x, y;
    bool markers = false;  // points instead of a polyline
};

struct Plot {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    std::vector<Series> series;
};

/// Standalone SVG document. Non-finite points are skipped.
std::string render(const Plot& plot);

std::string escape_xml(const std::string& s);

}  // namespace qdcav::svg
