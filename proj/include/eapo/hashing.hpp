#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace eapo {

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_doubles(std::span<const double> values);

}  // namespace eapo
