#pragma once

namespace pdml {

// Standard normal CDF.
double normal_cdf(double x);

// Inverse of normal_cdf on (0, 1). Rational initial guess refined by Newton
// steps on normal_cdf; absolute error below 1e-12 for |quantile| <= 8.
double normal_quantile(double p);

// z_{a}: the upper-a quantile, i.e. normal_quantile(1 - a).
double normal_upper_quantile(double a);

}  // namespace pdml
