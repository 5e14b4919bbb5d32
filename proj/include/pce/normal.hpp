#pragma once

namespace pce {

inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Standard Normal CDF. Saturates to exactly 0 or 1 for |x| > 40.
double std_normal_cdf(double x);

// Upper tail 1 - Phi(x), accurate when the tail is tiny.
double std_normal_sf(double x);

double std_normal_pdf(double x);

// Inverse of std_normal_cdf on (0,1); returns -inf/+inf at 0/1.
double std_normal_quantile(double p);

// Clip a probability into [1e-12, 1 - 1e-12] before it is used as a divisor.
double clip_probability(double p);

inline constexpr double kProbabilityFloor = 1e-12;

}  // namespace pce
