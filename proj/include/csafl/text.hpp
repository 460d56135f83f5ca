#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace csafl::text {

// Shortest representation that parses back to the same double.
std::string format_exact(double value);

// %.9g, the precision used for every emitted CSV metric.
std::string format_g9(double value);

std::vector<std::string_view> split(std::string_view line, char sep);

std::optional<double> parse_double(std::string_view field);
std::optional<long long> parse_int(std::string_view field);

std::string_view trim(std::string_view s);

}  // namespace csafl::text
