#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sail/common.hpp"

namespace sail {

using Json = nlohmann::ordered_json;

std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);
/// Hash of the raw little-endian bytes of a vector.
std::string sha256_vector(const Vector& v);

/// Shortest round-trip rendering is not required; 17 significant digits
/// always round-trip and keep output stable across runs.
std::string format_double(double x);

struct SaifFile {
    Json header;
    std::vector<double> payload;
};

inline constexpr std::uint32_t saif_version = 1;

/// Magic "SAIF", u32 version, u32 header length, JSON header, raw
/// little-endian f64 payload.
void write_saif(const std::filesystem::path& path, const Json& header, const double* data, std::size_t count);
SaifFile read_saif(const std::filesystem::path& path);

void write_matrix_saif(const std::filesystem::path& path, Json header, const Matrix& m);
Matrix matrix_from_saif(const SaifFile& file);

/// Writes `header` then one line per row, every value with 17 significant
/// digits.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

inline Error io_error(std::string code, const std::string& message) {
    return {ErrorKind::io, std::move(code), message};
}

}  // namespace sail
