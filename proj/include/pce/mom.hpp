#pragma once

#include "pce/bootstrap.hpp"
#include "pce/copula.hpp"
#include "pce/dataset.hpp"

#include <cstdint>
#include <vector>

namespace pce {

struct MomOptions {
  bool use_covariates = true;
};

// Outcome regressions after imputing the missing potential intermediate.
// Coefficient order: intercept, S1, S0, then covariates.
struct MomFit {
  Vector beta1;
  Vector beta0;
  JointStratumModel joint;
  double rho = 0.0;
  std::size_t covariates = 0;

  // (b10-b00) + (b11-b01) s1 + (b12-b02) s0 [+ (b1X-b0X)' E(X | U)].
  double tau(const PrincipalStratum& st, const std::vector<double>& x_mean = {}) const;
};

MomFit mom_fit(const Dataset& d, double rho, const MomOptions& opt = {});

// E(X | S1=s1, S0=s0) by reweighting units with the fitted joint density.
std::vector<double> covariate_mean_given_stratum(const Dataset& d, const MomFit& fit, const PrincipalStratum& st);

std::vector<PceEstimate> mom_estimate(const Dataset& d, double rho, const std::vector<PrincipalStratum>& strata,
                                      const MomOptions& opt = {});

struct SweepSpec {
  std::vector<double> rho_values = {0.0, 0.2, 0.4, 0.6, 0.8};
  // Empty: max, min and quartile strata (see default_sweep_strata).
  std::vector<PrincipalStratum> strata;
  std::size_t replicates = 500;
  double level = 0.95;
  std::uint64_t seed = 0;
  int threads = 0;
  MomOptions mom;
};

// (q_p(S | Z=1), q_{1-p}(S | Z=0)) for p in {0, .25, .5, .75, 1}: strata running
// from "lowest S1, highest S0" to "highest S1, lowest S0".
std::vector<PrincipalStratum> default_sweep_strata(const Dataset& d);

struct SweepCell {
  PrincipalStratum stratum;
  double rho = 0.0;
  double point = 0.0;
  Interval interval;
  double standard_error = 0.0;
  bool excludes_zero = false;
};

struct SweepTable {
  std::vector<PrincipalStratum> strata;
  std::vector<double> rhos;
  std::vector<SweepCell> cells;  // stratum-major
  std::vector<double> failure_rates;  // per rho
  const SweepCell& at(std::size_t stratum, std::size_t rho) const { return cells.at(stratum * rhos.size() + rho); }
};

// Every rho column reuses the same bootstrap resamples.
SweepTable sensitivity_sweep(const Dataset& d, const SweepSpec& spec);

}  // namespace pce
