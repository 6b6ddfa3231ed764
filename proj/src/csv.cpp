#include "bayesmech/csv.hpp"

#include <cstdio>

namespace bayesmech::csv {

std::string number(double value) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", value);
  return std::string(buf, static_cast<std::size_t>(n));
}

}  // namespace bayesmech::csv
