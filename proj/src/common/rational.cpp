#include "bencao/common/rational.h"

#include <cmath>

namespace bencao {

Rational Rational::from_decimal(double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("Rational: non-finite value");
  std::int64_t den = 1;
  for (int digits = 0; digits <= 9; ++digits, den *= 10) {
    double scaled = value * static_cast<double>(den);
    double rounded = std::round(scaled);
    if (std::fabs(scaled - rounded) < 1e-9 * static_cast<double>(den)) {
      return Rational(static_cast<std::int64_t>(rounded), den);
    }
  }
  return Rational(static_cast<std::int64_t>(std::round(value * 1e9)), 1000000000);
}

}  // namespace bencao
