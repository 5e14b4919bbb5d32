#include "pce/mom.hpp"

#include "pce/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pce {

double MomFit::tau(const PrincipalStratum& st, const std::vector<double>& x_mean) const {
  const Vector d = beta1 - beta0;
  double t = d(0) + d(1) * st.s1 + d(2) * st.s0;
  for (std::size_t j = 0; j < covariates && j < x_mean.size(); ++j) t += d(3 + static_cast<Eigen::Index>(j)) * x_mean[j];
  return t;
}

MomFit mom_fit(const Dataset& d, double rho, const MomOptions& opt) {
  if (!(std::abs(rho) < 1.0)) throw BadParams("|rho| must be < 1");
  d.require_both_arms();
  GaussianFitOptions gopt;
  gopt.use_covariates = opt.use_covariates;
  MomFit fit{Vector(), Vector(), joint_from_gaussian_copula(d, RhoSpec::constant(rho), gopt), rho,
             opt.use_covariates ? d.covariate_count() : 0};
  const auto p = static_cast<Eigen::Index>(3 + fit.covariates);
  const auto n1 = static_cast<Eigen::Index>(d.count_arm(1));
  const auto n0 = static_cast<Eigen::Index>(d.count_arm(0));
  Matrix x1(n1, p), x0(n0, p);
  Vector y1(n1), y0(n0);
  Eigen::Index i1 = 0, i0 = 0;
  for (const auto& u : d.units()) {
    const std::vector<double> x(u.x.begin(), u.x.begin() + static_cast<std::ptrdiff_t>(fit.covariates));
    if (u.z == 1) {
      x1(i1, 0) = 1.0;
      x1(i1, 1) = u.s;
      x1(i1, 2) = fit.joint.cond_mean_s0(u.s, u.w, x);
      for (std::size_t j = 0; j < fit.covariates; ++j) x1(i1, 3 + static_cast<Eigen::Index>(j)) = x[j];
      y1(i1++) = u.y;
    } else {
      x0(i0, 0) = 1.0;
      x0(i0, 1) = fit.joint.cond_mean_s1(u.s, u.w, x);
      x0(i0, 2) = u.s;
      for (std::size_t j = 0; j < fit.covariates; ++j) x0(i0, 3 + static_cast<Eigen::Index>(j)) = x[j];
      y0(i0++) = u.y;
    }
  }
  fit.beta1 = solve_least_squares(x1, y1);
  fit.beta0 = solve_least_squares(x0, y0);
  return fit;
}

std::vector<double> covariate_mean_given_stratum(const Dataset& d, const MomFit& fit, const PrincipalStratum& st) {
  std::vector<double> m(fit.covariates, 0.0);
  if (fit.covariates == 0) return m;
  double total = 0.0;
  for (const auto& u : d.units()) {
    const std::vector<double> x(u.x.begin(), u.x.begin() + static_cast<std::ptrdiff_t>(fit.covariates));
    const double k = fit.joint.density(st.s1, st.s0, u.w, x);
    total += k;
    for (std::size_t j = 0; j < fit.covariates; ++j) m[j] += k * x[j];
  }
  if (!(total > 0.0)) throw ZeroStratumMass("stratum has no density mass under the fitted joint");
  for (double& v : m) v /= total;
  return m;
}

std::vector<PceEstimate> mom_estimate(const Dataset& d, double rho, const std::vector<PrincipalStratum>& strata,
                                      const MomOptions& opt) {
  const MomFit fit = mom_fit(d, rho, opt);
  std::vector<PceEstimate> out;
  for (const auto& st : strata) {
    PceEstimate e;
    e.stratum = st;
    const auto xm = covariate_mean_given_stratum(d, fit, st);
    e.point = fit.tau(st, xm);
    e.method = "mom";
    e.diagnostics["rho"] = rho;
    e.diagnostics["beta1"] = std::vector<double>(fit.beta1.data(), fit.beta1.data() + fit.beta1.size());
    e.diagnostics["beta0"] = std::vector<double>(fit.beta0.data(), fit.beta0.data() + fit.beta0.size());
    if (!xm.empty()) e.diagnostics["covariate_mean_given_stratum"] = xm;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<PrincipalStratum> default_sweep_strata(const Dataset& d) {
  std::vector<double> s1, s0;
  for (const auto& u : d.units()) (u.z == 1 ? s1 : s0).push_back(u.s);
  if (s1.empty() || s0.empty()) throw InputError("arms", "both treatment arms are required");
  std::sort(s1.begin(), s1.end());
  std::sort(s0.begin(), s0.end());
  std::vector<PrincipalStratum> out;
  for (double p : {0.0, 0.25, 0.5, 0.75, 1.0}) out.push_back({sorted_quantile(s1, p), sorted_quantile(s0, 1.0 - p)});
  return out;
}

SweepTable sensitivity_sweep(const Dataset& d, const SweepSpec& spec) {
  if (spec.rho_values.empty()) throw BadParams("sweep needs at least one rho value");
  for (double r : spec.rho_values)
    if (!(std::abs(r) < 1.0)) throw BadParams("every |rho| must be < 1");
  if (spec.replicates < 2) throw BadParams("sweep needs at least 2 bootstrap replicates");
  SweepTable table;
  table.strata = spec.strata.empty() ? default_sweep_strata(d) : spec.strata;
  table.rhos = spec.rho_values;
  table.cells.resize(table.strata.size() * table.rhos.size());

  BootstrapOptions bopt;
  bopt.replicates = spec.replicates;
  bopt.level = spec.level;
  bopt.seed = spec.seed;
  bopt.threads = spec.threads;
  const auto strata = table.strata;
  for (std::size_t j = 0; j < table.rhos.size(); ++j) {
    const double rho = table.rhos[j];
    const MomOptions mopt = spec.mom;
    const Statistic stat = [rho, strata, mopt](const Dataset& sample) {
      const MomFit fit = mom_fit(sample, rho, mopt);
      std::vector<double> v;
      for (const auto& st : strata) v.push_back(fit.tau(st, covariate_mean_given_stratum(sample, fit, st)));
      return v;
    };
    const std::vector<double> point = stat(d);
    const BootstrapResult boot = bootstrap_ci(d, stat, bopt);
    table.failure_rates.push_back(boot.failure_rate);
    for (std::size_t i = 0; i < strata.size(); ++i) {
      SweepCell& c = table.cells[i * table.rhos.size() + j];
      c.stratum = strata[i];
      c.rho = rho;
      c.point = point[i];
      c.interval = boot.intervals[i];
      c.standard_error = boot.standard_errors[i];
      c.excludes_zero = c.interval.lower > 0.0 || c.interval.upper < 0.0;
    }
  }
  return table;
}

}  // namespace pce
