#pragma once

#include "pce/dataset.hpp"
#include "pce/rng.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace testing {

// Adaptive Gauss-Kronrod; infinite limits are handled by boost's change of variables.
inline double integrate(const std::function<double(double)>& f, double a, double b) {
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-14, &err);
}

inline double inf() { return std::numeric_limits<double>::infinity(); }

inline double normal_density(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * M_PI * var);
}

inline pce::Schema discrete_schema(std::vector<double> s_cats, std::vector<double> w_cats, bool binary_y,
                                   std::optional<double> constant_s0 = std::nullopt) {
  pce::Schema sc;
  sc.s_kind = pce::VarKind::Discrete;
  sc.s_categories = std::move(s_cats);
  sc.w_kind = pce::VarKind::Discrete;
  sc.w_categories = std::move(w_cats);
  sc.y_kind = binary_y ? pce::OutcomeKind::Binary : pce::OutcomeKind::Continuous;
  sc.constant_s0 = constant_s0;
  return sc;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace testing
