#include "sail/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <openssl/evp.h>

namespace sail {

static_assert(std::endian::native == std::endian::little, "SAIF payloads are written in native little-endian order");

std::string sha256_hex(const void* data, std::size_t size) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr) != 1) {
        throw io_error("hash-failed", "SHA-256 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int k = 0; k < len; ++k) {
        out.push_back(hex[digest[k] >> 4]);
        out.push_back(hex[digest[k] & 15]);
    }
    return out;
}

std::string sha256_hex(const std::string& bytes) { return sha256_hex(bytes.data(), bytes.size()); }

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text(path)); }

std::string sha256_vector(const Vector& v) {
    return sha256_hex(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("write-failed", "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw io_error("write-failed", "short write to " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("read-failed", "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_saif(const std::filesystem::path& path, const Json& header, const double* data, std::size_t count) {
    const std::string h = header.dump();
    std::string bytes = "SAIF";
    auto put_u32 = [&](std::uint32_t v) {
        char b[4];
        std::memcpy(b, &v, 4);
        bytes.append(b, 4);
    };
    put_u32(saif_version);
    put_u32(static_cast<std::uint32_t>(h.size()));
    bytes += h;
    bytes.append(reinterpret_cast<const char*>(data), count * sizeof(double));
    write_text(path, bytes);
}

SaifFile read_saif(const std::filesystem::path& path) {
    const std::string bytes = read_text(path);
    if (bytes.size() < 12 || bytes.compare(0, 4, "SAIF") != 0) {
        throw io_error("bad-saif", path.string() + " is not a SAIF file");
    }
    std::uint32_t version = 0, len = 0;
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&len, bytes.data() + 8, 4);
    if (version != saif_version) throw io_error("bad-saif", "unsupported SAIF version " + std::to_string(version));
    if (bytes.size() < 12 + static_cast<std::size_t>(len)) throw io_error("bad-saif", "truncated SAIF header");
    SaifFile f;
    f.header = Json::parse(bytes.substr(12, len));
    const std::size_t rest = bytes.size() - 12 - len;
    if (rest % sizeof(double) != 0) throw io_error("bad-saif", "payload is not a whole number of doubles");
    f.payload.resize(rest / sizeof(double));
    std::memcpy(f.payload.data(), bytes.data() + 12 + len, rest);
    return f;
}

void write_matrix_saif(const std::filesystem::path& path, Json header, const Matrix& m) {
    header["rows"] = m.rows();
    header["cols"] = m.cols();
    header["order"] = "column-major";
    write_saif(path, header, m.data(), static_cast<std::size_t>(m.size()));
}

Matrix matrix_from_saif(const SaifFile& file) {
    const auto rows = file.header.at("rows").get<Eigen::Index>();
    const auto cols = file.header.at("cols").get<Eigen::Index>();
    if (static_cast<std::size_t>(rows * cols) != file.payload.size()) {
        throw io_error("bad-saif", "payload size does not match rows x cols");
    }
    return Eigen::Map<const Matrix>(file.payload.data(), rows, cols);
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::string out;
    for (std::size_t k = 0; k < header.size(); ++k) out += (k ? "," : "") + header[k];
    out += '\n';
    for (const auto& row : rows) {
        for (std::size_t k = 0; k < row.size(); ++k) out += (k ? "," : "") + format_double(row[k]);
        out += '\n';
    }
    write_text(path, out);
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::istringstream in(read_text(path));
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw io_error("bad-csv", path.string() + " is empty");
    {
        std::istringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) t.header.push_back(cell);
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ls, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str()) {
                throw io_error("bad-csv", path.string() + ":" + std::to_string(lineno) + ": not a number: " + cell);
            }
            row.push_back(v);
        }
        if (row.size() != t.header.size()) {
            throw io_error("bad-csv", path.string() + ":" + std::to_string(lineno) + ": expected " +
                                          std::to_string(t.header.size()) + " columns");
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace sail
