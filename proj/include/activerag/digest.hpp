#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace activerag {

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's contents; throws Error if the file can't be read.
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

}  // namespace activerag
