#pragma once

#include <string>
#include <string_view>

namespace siggpde {

// Shortest decimal form that reads back to the same double.
std::string format_double(double v);
bool parse_double(std::string_view s, double& out);

}  // namespace siggpde
