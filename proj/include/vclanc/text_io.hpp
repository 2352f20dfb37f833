#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vclanc::io {

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);

std::vector<std::string_view> split_ws(std::string_view line);
std::string_view trim(std::string_view s);

// Strict parsers; throw InputError naming `where` on malformed text.
std::int64_t parse_int(std::string_view s, const std::string& where);
double parse_double(std::string_view s, const std::string& where);

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary sibling and renames into place.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace vclanc::io
