#include "msgr/normal.hpp"

#include <cmath>
#include <numbers>

namespace msgr {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double logit_phi_stable(double x) {
  if (x < 0.0) return -logit_phi_stable(-x);
  if (x > kMillsSwitch) return 0.5 * std::log(2.0 * std::numbers::pi) + std::log(x) + 0.5 * x * x;
  const double upper = 0.5 * std::erfc(x / std::numbers::sqrt2);
  const double lower = 0.5 * std::erfc(-x / std::numbers::sqrt2);
  return std::log(lower) - std::log(upper);
}

double inverse_mills_lower(double x) {
  if (x > kMillsSwitch) return 0.0;
  if (x < -kMillsSwitch) return -x;
  return normal_pdf(x) / normal_cdf(x);
}

double inverse_mills_upper(double x) {
  if (x > kMillsSwitch) return x;
  if (x < -kMillsSwitch) return 0.0;
  return normal_pdf(x) / (0.5 * std::erfc(x / std::numbers::sqrt2));
}

}  // namespace msgr
