#pragma once

// Header-plus-payload container shared by `.epsmap` and `.fldmap` files:
// a single UTF-8 JSON line terminated by '\n', then raw little-endian
// IEEE-754 doubles.

#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"

namespace qdcav::io {

void write_binary_doc(const std::filesystem::path& path, const nlohmann::json& header,
                      std::span<const double> payload);

struct BinaryDoc {
    nlohmann::json header;
    std::vector<double> payload;
};

BinaryDoc read_binary_doc(const std::filesystem::path& path);

}  // namespace qdcav::io
