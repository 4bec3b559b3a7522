#include "qdcav/binfile.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "qdcav/error.hpp"

namespace qdcav::io {

static_assert(std::endian::native == std::endian::little,
              "binary containers assume a little-endian host");

void write_binary_doc(const std::filesystem::path& path, const nlohmann::json& header,
                      std::span<const double> payload) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    const std::string line = header.dump();
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.put('\n');
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size_bytes()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

BinaryDoc read_binary_doc(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError("missing header line in '" + path.string() + "'");

    BinaryDoc doc;
    try {
        doc.header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
        throw IoError("bad header in '" + path.string() + "': " + ex.what());
    }

    const auto start = in.tellg();
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg() - start);
    in.seekg(start);
    if (bytes % sizeof(double) != 0)
        throw IoError("payload of '" + path.string() + "' is not a whole number of doubles");
    doc.payload.resize(bytes / sizeof(double));
    in.read(reinterpret_cast<char*>(doc.payload.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("short read in '" + path.string() + "'");
    return doc;
}

}  // namespace qdcav::io
