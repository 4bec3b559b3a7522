#pragma once

// Small text helpers shared by the CSV writers and readers.

#include <filesystem>
#include <string>
#include <vector>

namespace qdcav::io {

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);

/// Numeric CSV with a fixed header. Rows are returned as parsed doubles;
/// the header must match `expected_header` exactly (trailing CR ignored).
std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path,
                                                  const std::string& expected_header);

/// Writes `header` then each row, comma separated, with round-trip formatting.
void write_numeric_csv(const std::filesystem::path& path, const std::string& header,
                       const std::vector<std::vector<double>>& rows);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace qdcav::io
