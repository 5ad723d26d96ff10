#include "slidecraft/numfmt.hpp"

#include <charconv>
#include <cmath>

#include "slidecraft/errors.hpp"

namespace slidecraft {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string num(int v) { return std::to_string(v); }

double parse_num(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r' || text.back() == '\t')) text.remove_suffix(1);
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    raise(Errc::InputError, "not a number: '" + std::string(text) + "'");
  return v;
}

}  // namespace slidecraft
