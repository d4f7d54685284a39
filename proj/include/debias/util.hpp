#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace debias {

// "%.{decimals}f", with negative zero printed as zero.
std::string format_fixed(double v, int decimals);
// Shortest-safe full precision (17 significant digits).
std::string format_full(double v);

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);

// Strict double parse of the whole field; throws DataError on junk.
double parse_double(std::string_view s, const std::string& context);

std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::string& path);
// Writes atomically via a sibling temp file.
void write_file(const std::string& path, std::string_view contents);

}  // namespace debias
