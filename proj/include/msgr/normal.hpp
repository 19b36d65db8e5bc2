#pragma once

namespace msgr {

double normal_pdf(double x);
double normal_cdf(double x);

/// log(Phi(x) / (1 - Phi(x))). Beyond |x| = 10 the Mills-ratio asymptote
/// +-(log(2 pi)/2 + log|x| + x^2/2) replaces the direct evaluation.
double logit_phi_stable(double x);

/// phi(x) / Phi(x), with the limits 0 (x > 10) and -x (x < -10).
double inverse_mills_lower(double x);
/// phi(x) / (1 - Phi(x)), with the limits x (x > 10) and 0 (x < -10).
double inverse_mills_upper(double x);

inline constexpr double kMillsSwitch = 10.0;

}  // namespace msgr
