#pragma once

#include "pce/cell_table.hpp"
#include "pce/copula.hpp"
#include "pce/dataset.hpp"
#include "pce/linalg.hpp"

#include <functional>
#include <string>
#include <vector>

namespace pce::parametric {

// Closed form of the integral of Phi(beta0 + alpha s) against N(s; mu, sigma2).
double probit_normal_mix(double beta0, double alpha, double mu, double sigma2);

// Basis functions f_j(w) (or h_j(w)) entering an outcome model.
struct Basis {
  enum class Kind { None, Poly, Indicator };
  Kind kind = Kind::None;
  int degree = 0;                   // Poly: w, w^2, ..., w^degree
  std::vector<double> categories;   // Indicator: 1{w = c} for every category after the first

  static Basis none() { return {}; }
  static Basis poly(int degree) { return {Kind::Poly, degree, {}}; }
  static Basis indicator(std::vector<double> categories) { return {Kind::Indicator, 0, std::move(categories)}; }
  // "none", "poly:D" or "indicator" (categories taken from the schema's W).
  static Basis parse(const std::string& text, const Schema& schema);

  int size() const;
  Vector eval(double w) const;
  std::string name() const;
};

enum class Family { Linear, Probit };

struct OutcomeModelSpec {
  Family family = Family::Linear;
  Basis f;  // treated-arm (and Prop 1/2 control-arm) basis
  Basis h;  // control-arm basis for Props 4/5
  // Polynomial degree of the series fit of g(w) = E(S | Z=1, W=w) for continuous W.
  int g_degree = 3;
};

struct IndependenceDiagnostic {
  bool independent = false;
  int rank = 0;
  int columns = 0;
  double min_singular = 0.0;
  // min / max singular value; compared against kRankTolerance.
  double relative_min_singular = 0.0;
};

// Column-rank check of basis evaluations with a constant column prepended.
IndependenceDiagnostic linear_independence_diagnostic(const Matrix& evaluations);

struct NamedCoefficients {
  std::vector<std::string> names;
  Vector values;
  double get(const std::string& name) const;
};

struct ParametricFit {
  std::string method;
  NamedCoefficients arm1;
  NamedCoefficients arm0;
  nlohmann::json diagnostics = nlohmann::json::object();
  // PCE at a stratum; empty for moment-level fits that carry no W distribution.
  std::function<double(const PrincipalStratum&)> surface;

  PceEstimate estimate(const PrincipalStratum& stratum) const;
};

// Weighted design points: one per unit for samples, one per grid cell for
// population-level moments (y is then a conditional mean or probability).
struct ArmPoints {
  std::vector<double> s;
  std::vector<double> w;
  std::vector<double> y;
  std::vector<double> weight;
  // Optional covariates per point (used only through a joint model's means).
  std::vector<std::vector<double>> x;
  void add(double s_, double w_, double y_, double weight_ = 1.0) {
    s.push_back(s_);
    w.push_back(w_);
    y.push_back(y_);
    weight.push_back(weight_);
  }
  std::size_t size() const { return s.size(); }
  const std::vector<double>& x_at(std::size_t i) const {
    static const std::vector<double> kNone;
    return x.empty() ? kNone : x[i];
  }
};

// ---- Proposition 1: additive S1 and Y0, constant S0 ----
ParametricFit fit_prop1_linear(const Dataset& d, const OutcomeModelSpec& spec);
// treated: (s1, w, E(Y|Z=1,s1,w)); control: (g(w) in s, w, E(Y|Z=0,w)).
ParametricFit fit_prop1_moments(const ArmPoints& treated, const ArmPoints& control, const Basis& f);

// ---- Proposition 2: Normal S1, probit Y0, constant S0 ----
ParametricFit fit_prop2_probit(const Dataset& d, const OutcomeModelSpec& spec);
// As prop1 with probabilities, plus the homoscedastic variance of S1 given W.
ParametricFit fit_prop2_moments(const ArmPoints& treated, const ArmPoints& control, const Basis& f,
                                double sigma2);

// ---- Proposition 3: binary S under monotonicity, linear Y_z in (S1, S0, W) ----
ParametricFit fit_prop3_binary(const Dataset& d);
// `sample` selects the statistical homogeneity test of the ratios (cell masses
// are counts); population tables use an exact tolerance instead.
ParametricFit fit_prop3_binary(const CellTable& t, bool sample);

// ---- Propositions 4/5: bivariate Normal (S1,S0) | W with known rho ----
ParametricFit fit_prop4_prop5(const Dataset& d, const JointStratumModel& joint, const OutcomeModelSpec& spec);
// treated: (s1, w, E or P(Y|Z=1,s1,w)); control: (s0, w, ...).
ParametricFit fit_prop45_moments(const ArmPoints& treated, const ArmPoints& control,
                                 const JointStratumModel& joint, const OutcomeModelSpec& spec);

// ---- Proposition S1: discrete W, linear Y_z in (S1, S0) ----
ParametricFit fit_propS1_discreteW(const Dataset& d, const JointStratumModel& joint);
ParametricFit fit_propS1_moments(const ArmPoints& treated, const ArmPoints& control,
                                 const JointStratumModel& joint);

// Nested-model F test p-value that the columns of `extra` add nothing to
// `base` in the least-squares fit of y. Used to decide on sample data whether
// g(w) leaves the span of {1, f_j(w)}.
double nested_f_pvalue(const Matrix& base, const Matrix& extra, const Vector& y);

// p-values below this reject linear dependence on sample data.
inline constexpr double kIndependenceAlpha = 1e-3;

}  // namespace pce::parametric
