#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace xfer {

// Writes to a sibling temporary file, then renames over `path`. Readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

// printf("%.17g"): enough digits to round-trip any double.
std::string format_double(double value);

}  // namespace xfer
