#pragma once

#include <string>
#include <string_view>

namespace slidecraft {

/// Shortest decimal text that parses back to the same double.
std::string num(double v);
std::string num(int v);

/// Inverse of num (accepts any decimal form); throws InputError on garbage.
double parse_num(std::string_view text);

}  // namespace slidecraft
