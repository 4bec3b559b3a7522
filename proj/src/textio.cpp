#include "qdcav/textio.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "qdcav/error.hpp"

namespace qdcav::io {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

double parse_field(const std::string& field, const std::filesystem::path& path, std::size_t line) {
    const char* first = field.data();
    const char* last = first + field.size();
    while (first < last && *first == ' ') ++first;
    while (last > first && last[-1] == ' ') --last;
    double v = 0.0;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw IoError(path.string() + ":" + std::to_string(line) + ": not a number: '" + field + "'");
    return v;
}

}  // namespace

std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path,
                                                  const std::string& expected_header) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError("'" + path.string() + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected_header)
        throw IoError("'" + path.string() + "': expected header '" + expected_header + "', got '" + line + "'");

    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) row.push_back(parse_field(field, path, lineno));
        if (!rows.empty() && row.size() != rows.front().size())
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": inconsistent column count");
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_numeric_csv(const std::filesystem::path& path, const std::string& header,
                       const std::vector<std::vector<double>>& rows) {
    std::string text = header + "\n";
    for (const auto& row : rows) {
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (k) text += ',';
            text += format_double(row[k]);
        }
        text += '\n';
    }
    write_text_file(path, text);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace qdcav::io
