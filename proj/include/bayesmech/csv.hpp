#pragma once

#include <ostream>
#include <string>

namespace bayesmech::csv {

/// Shortest representation that round-trips a double (17 significant digits
/// at most).
std::string number(double value);

inline void field(std::ostream& out, double value) { out << ',' << number(value); }

}  // namespace bayesmech::csv
