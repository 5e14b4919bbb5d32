#pragma once

#include "pce/copula.hpp"
#include "pce/dataset.hpp"
#include "pce/glm.hpp"

#include <vector>

namespace pce {

enum class PropensityKind { EmpiricalByCell, Logistic };

// pi(W) = P(Z=1 | W), optionally also depending on covariates (logistic kind).
struct PropensityModel {
  PropensityKind kind = PropensityKind::EmpiricalByCell;
  std::vector<double> w_values;  // empirical kind
  std::vector<double> by_cell;   // treated fraction per W cell
  Vector coefficients;           // logistic kind, regressors (1, w, x)
  std::size_t covariates = 0;

  // Unclipped prediction.
  double predict(const ObservedUnit& u) const;
};

// Empirical-by-cell for discrete W without covariates; logistic otherwise,
// unless `kind` forces a choice.
PropensityModel fit_propensity(const Dataset& d);
PropensityModel fit_propensity(const Dataset& d, PropensityKind kind);

enum class PrincipalScoreKind { EmpiricalByCell, MultinomialLogistic };

// e_{s1}(W) = P(S1 = s1 | W) for the constant-S0 design.
struct PrincipalScoreModel {
  PrincipalScoreKind kind = PrincipalScoreKind::EmpiricalByCell;
  std::vector<double> support;   // s1 values
  std::vector<double> w_values;  // empirical kind
  Matrix by_cell;                // K x L, columns sum to 1
  glm::MultinomialFit multinomial;
  std::size_t covariates = 0;

  Vector scores(const ObservedUnit& u) const;
  double score(double s1, const ObservedUnit& u) const;
};

// Fitted from treated units only (S = S1 there).
PrincipalScoreModel fit_principal_score_constant_s0(const Dataset& d);
PrincipalScoreModel fit_principal_score_constant_s0(const Dataset& d, PrincipalScoreKind kind);

// tau_{s1} = mean{ e(W)/e * Z Y / pi(W) } - mean{ e(W)/e * (1-Z) Y / (1-pi(W)) }
// with e = average of e(W) over all units.
PceEstimate pce_weighting_constant_s0(const Dataset& d, const PrincipalScoreModel& ps,
                                      const PropensityModel& pr, double s1);

struct WeightingOptions {
  // Accept a joint whose rho is a sensitivity parameter; the estimate is then
  // tagged with the rho used instead of raising JointNotIdentified.
  bool allow_sensitivity = false;
};

// Same estimator with weights e_{s1,s0}(W)/e_{s1,s0} taken from a joint model.
PceEstimate pce_weighting_general(const Dataset& d, const JointStratumModel& joint,
                                  const PropensityModel& pr, const PrincipalStratum& stratum,
                                  const WeightingOptions& opt = {});

}  // namespace pce
