#include "pce/scores.hpp"

#include "pce/errors.hpp"
#include "pce/normal.hpp"

#include <cmath>
#include <sstream>

namespace pce {

namespace {

Vector logistic_row(const ObservedUnit& u, std::size_t covariates) {
  Vector r(2 + static_cast<Eigen::Index>(covariates));
  r(0) = 1.0;
  r(1) = u.w;
  for (std::size_t j = 0; j < covariates; ++j) r(2 + static_cast<Eigen::Index>(j)) = u.x.at(j);
  return r;
}

Matrix logistic_design(const Dataset& d, const std::vector<std::size_t>& rows, std::size_t covariates) {
  Matrix x(static_cast<Eigen::Index>(rows.size()), 2 + static_cast<Eigen::Index>(covariates));
  for (std::size_t i = 0; i < rows.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = logistic_row(d[rows[i]], covariates).transpose();
  return x;
}

int find_value(const std::vector<double>& values, double v) {
  for (std::size_t k = 0; k < values.size(); ++k)
    if (values[k] == v) return static_cast<int>(k);
  return -1;
}

struct WeightedDifference {
  double tau = 0.0;
  double treated_weight_mean = 0.0;
  double control_weight_mean = 0.0;
  std::size_t clipped = 0;
};

// Horvitz-Thompson difference with per-unit stratum weights.
WeightedDifference weighted_difference(const Dataset& d, const std::vector<double>& ratio,
                                       const PropensityModel& pr) {
  WeightedDifference out;
  double t = 0.0;
  double c = 0.0;
  const auto n = static_cast<double>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& u = d[i];
    const double raw = pr.predict(u);
    const double pi = clip_probability(raw);
    if (pi != raw) ++out.clipped;
    if (u.z == 1) {
      t += ratio[i] * u.y / pi;
      out.treated_weight_mean += ratio[i] / pi;
    } else {
      c += ratio[i] * u.y / (1.0 - pi);
      out.control_weight_mean += ratio[i] / (1.0 - pi);
    }
  }
  out.tau = t / n - c / n;
  out.treated_weight_mean /= n;
  out.control_weight_mean /= n;
  return out;
}

}  // namespace

double PropensityModel::predict(const ObservedUnit& u) const {
  if (kind == PropensityKind::EmpiricalByCell) {
    const int l = find_value(w_values, u.w);
    if (l < 0) throw InputError("schema", "w value not covered by the propensity model");
    return by_cell[static_cast<std::size_t>(l)];
  }
  const double eta = coefficients.dot(logistic_row(u, covariates));
  return 1.0 / (1.0 + std::exp(-eta));
}

PropensityModel fit_propensity(const Dataset& d) {
  const bool empirical = d.schema().w_kind == VarKind::Discrete && d.covariate_count() == 0;
  return fit_propensity(d, empirical ? PropensityKind::EmpiricalByCell : PropensityKind::Logistic);
}

PropensityModel fit_propensity(const Dataset& d, PropensityKind kind) {
  d.require_both_arms();
  PropensityModel m;
  m.kind = kind;
  if (kind == PropensityKind::EmpiricalByCell) {
    if (d.schema().w_kind != VarKind::Discrete)
      throw InputError("schema", "empirical propensity requires discrete W");
    m.w_values = d.schema().w_categories;
    std::vector<double> treated(m.w_values.size(), 0.0);
    std::vector<double> total(m.w_values.size(), 0.0);
    for (const auto& u : d.units()) {
      const auto l = static_cast<std::size_t>(d.w_index(u.w));
      total[l] += 1.0;
      treated[l] += u.z;
    }
    for (std::size_t l = 0; l < total.size(); ++l) {
      if (treated[l] == 0.0 || treated[l] == total[l]) {
        std::ostringstream msg;
        msg << "treatment arm missing in cell w=" << m.w_values[l];
        throw EmptyCell(msg.str());
      }
      m.by_cell.push_back(treated[l] / total[l]);
    }
    return m;
  }
  m.covariates = d.covariate_count();
  std::vector<std::size_t> rows(d.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  Vector z(static_cast<Eigen::Index>(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) z(static_cast<Eigen::Index>(i)) = d[i].z;
  m.coefficients = glm::fit_logistic(logistic_design(d, rows, m.covariates), z).coefficients;
  return m;
}

Vector PrincipalScoreModel::scores(const ObservedUnit& u) const {
  if (kind == PrincipalScoreKind::EmpiricalByCell) {
    const int l = find_value(w_values, u.w);
    if (l < 0) throw InputError("schema", "w value not covered by the principal score model");
    return by_cell.col(l);
  }
  return multinomial.probabilities(logistic_row(u, covariates).transpose());
}

double PrincipalScoreModel::score(double s1, const ObservedUnit& u) const {
  const int k = find_value(support, s1);
  if (k < 0) return 0.0;
  return scores(u)(k);
}

PrincipalScoreModel fit_principal_score_constant_s0(const Dataset& d) {
  const bool empirical = d.schema().w_kind == VarKind::Discrete && d.covariate_count() == 0;
  return fit_principal_score_constant_s0(
      d, empirical ? PrincipalScoreKind::EmpiricalByCell : PrincipalScoreKind::MultinomialLogistic);
}

PrincipalScoreModel fit_principal_score_constant_s0(const Dataset& d, PrincipalScoreKind kind) {
  const Schema& sc = d.schema();
  if (sc.s_kind != VarKind::Discrete)
    throw InputError("schema", "principal scores for the constant-S0 design need discrete S");
  if (d.count_arm(1) == 0) throw EmptyCell("no treated units");
  PrincipalScoreModel m;
  m.kind = kind;
  m.support = sc.s_categories;
  const auto k = static_cast<Eigen::Index>(m.support.size());
  if (kind == PrincipalScoreKind::EmpiricalByCell) {
    if (sc.w_kind != VarKind::Discrete) throw InputError("schema", "empirical principal score requires discrete W");
    m.w_values = sc.w_categories;
    const auto l = static_cast<Eigen::Index>(m.w_values.size());
    m.by_cell = Matrix::Zero(k, l);
    for (const auto& u : d.units())
      if (u.z == 1) m.by_cell(d.s_index(u.s), d.w_index(u.w)) += 1.0;
    for (Eigen::Index c = 0; c < l; ++c) {
      const double total = m.by_cell.col(c).sum();
      if (!(total > 0.0)) {
        std::ostringstream msg;
        msg << "no treated units in cell w=" << m.w_values[static_cast<std::size_t>(c)];
        throw EmptyCell(msg.str());
      }
      m.by_cell.col(c) /= total;
    }
    return m;
  }
  m.covariates = d.covariate_count();
  std::vector<std::size_t> rows;
  std::vector<int> labels;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i].z != 1) continue;
    rows.push_back(i);
    labels.push_back(d.s_index(d[i].s));
  }
  m.multinomial = glm::fit_multinomial_logistic(logistic_design(d, rows, m.covariates), labels,
                                                static_cast<int>(k));
  return m;
}

PceEstimate pce_weighting_constant_s0(const Dataset& d, const PrincipalScoreModel& ps,
                                      const PropensityModel& pr, double s1) {
  d.require_both_arms();
  std::vector<double> e(d.size());
  double e_bar = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    e[i] = ps.score(s1, d[i]);
    e_bar += e[i];
  }
  e_bar /= static_cast<double>(d.size());
  if (!(e_bar > 0.0)) {
    std::ostringstream msg;
    msg << "stratum s1=" << s1 << " has zero estimated mass";
    throw ZeroStratumMass(msg.str());
  }
  for (double& v : e) v /= e_bar;
  const WeightedDifference wd = weighted_difference(d, e, pr);

  PceEstimate est;
  est.stratum = {s1, d.schema().constant_s0.value_or(0.0)};
  est.point = wd.tau;
  est.method = "weighting";
  est.diagnostics["stratum_mass"] = e_bar;
  est.diagnostics["clipped_propensities"] = wd.clipped;
  est.diagnostics["treated_weight_mean"] = wd.treated_weight_mean;
  est.diagnostics["control_weight_mean"] = wd.control_weight_mean;
  if (!d.schema().constant_s0) est.diagnostics["warning"] = "schema does not declare a constant S0";
  return est;
}

PceEstimate pce_weighting_general(const Dataset& d, const JointStratumModel& joint,
                                  const PropensityModel& pr, const PrincipalStratum& stratum,
                                  const WeightingOptions& opt) {
  d.require_both_arms();
  if (!joint.identified() && !opt.allow_sensitivity)
    throw JointNotIdentified("joint stratum model is a sensitivity model (rho is not identified)");
  std::vector<double> e(d.size());
  double e_bar = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    e[i] = joint.score(stratum, d[i]);
    e_bar += e[i];
  }
  e_bar /= static_cast<double>(d.size());
  if (!(e_bar > 0.0)) {
    std::ostringstream msg;
    msg << "stratum (" << stratum.s1 << "," << stratum.s0 << ") has zero mass";
    throw ZeroStratumMass(msg.str());
  }
  for (double& v : e) v /= e_bar;
  const WeightedDifference wd = weighted_difference(d, e, pr);

  PceEstimate est;
  est.stratum = stratum;
  est.point = wd.tau;
  est.method = "weighting";
  est.diagnostics["joint_provenance"] = provenance_name(joint.provenance());
  est.diagnostics["stratum_mass"] = e_bar;
  est.diagnostics["clipped_propensities"] = wd.clipped;
  est.diagnostics["treated_weight_mean"] = wd.treated_weight_mean;
  est.diagnostics["control_weight_mean"] = wd.control_weight_mean;
  if (joint.kind() == JointKind::Gaussian) {
    est.diagnostics["rho"] = joint.cells().front().rho;
    est.diagnostics["score_kind"] = "density";
  }
  if (!joint.identified()) est.diagnostics["not_identified"] = true;
  return est;
}

}  // namespace pce
