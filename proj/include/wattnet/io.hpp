#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace wattnet::io {

// Splits one CSV record on commas. Quoting is not part of any schema here.
std::vector<std::string_view> split_fields(std::string_view line);

// Reads a text file into lines (LF; a trailing CR is stripped). Throws IoError.
std::vector<std::string> read_lines(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// Shortest representation that round-trips to the same double.
std::string format_double(double v);
// Fixed 17 significant digits.
std::string format_double17(double v);

// Throws ParseError mentioning `where` on failure.
double parse_double(std::string_view text, std::string_view where);
long long parse_int(std::string_view text, std::string_view where);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace wattnet::io
