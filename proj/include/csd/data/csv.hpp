#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Minimal CSV helpers for the numeric file formats in this project
// (no embedded commas or newlines inside cells).
namespace csd::data::csv {

std::vector<std::string> split(std::string_view line);
std::string_view trim(std::string_view s);
bool is_blank_or_comment(std::string_view line);
// Finite decimal number or nullopt.
std::optional<double> parse_double(std::string_view cell);
// Shortest round-trip decimal text.
std::string format_double(double v);
std::string format_float(float v);

}  // namespace csd::data::csv
