#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace isoha {

// Decimal value with a fixed number of places, e.g. {1282, 2} = 12.82.
struct Fixed {
  std::int64_t units = 0;
  int places = 0;

  double value() const;
  std::string str() const;

  friend bool operator==(const Fixed&, const Fixed&) = default;
};

// num/den * 10^places, rounded half away from zero. den must be nonzero.
inline Fixed round_ratio(__int128 num, __int128 den, int places) {
  if (den == 0) throw std::domain_error("round_ratio: zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  for (int i = 0; i < places; ++i) num *= 10;
  const bool neg = num < 0;
  if (neg) num = -num;
  __int128 q = (2 * num + den) / (2 * den);
  return {static_cast<std::int64_t>(neg ? -q : q), places};
}

}  // namespace isoha
