#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace levisim::csv {

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double value);
void append_double(std::string& out, double value);

/// Strict parse of a whole field; throws std::invalid_argument on junk.
double parse_double(std::string_view field);
long long parse_int(std::string_view field);

std::vector<std::string_view> split(std::string_view line, char sep = ',');

}  // namespace levisim::csv
