#include "pce/normal.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <limits>

namespace pce {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kSaturation = 40.0;
}  // namespace

double std_normal_cdf(double x) {
  if (x > kSaturation) return 1.0;
  if (x < -kSaturation) return 0.0;
  return 0.5 * std::erfc(-x * kInvSqrt2);
}

double std_normal_sf(double x) {
  if (x > kSaturation) return 0.0;
  if (x < -kSaturation) return 1.0;
  return 0.5 * std::erfc(x * kInvSqrt2);
}

double std_normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double std_normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  // Phi^{-1}(p) = -sqrt(2) erfc^{-1}(2p); erfc_inv keeps full precision in the lower tail.
  if (p < 0.5) return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
  return std::sqrt(2.0) * boost::math::erfc_inv(2.0 * (1.0 - p));
}

double clip_probability(double p) {
  if (p < kProbabilityFloor) return kProbabilityFloor;
  if (p > 1.0 - kProbabilityFloor) return 1.0 - kProbabilityFloor;
  return p;
}

}  // namespace pce
