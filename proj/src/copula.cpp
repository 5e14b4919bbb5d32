#include "pce/copula.hpp"

#include "pce/errors.hpp"
#include "pce/normal.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace pce {

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Oracle: return "oracle";
    case Provenance::Monotonicity: return "monotonicity";
    case Provenance::Equipercentile: return "equipercentile";
    case Provenance::Copula: return "copula";
    case Provenance::Sensitivity: return "sensitivity";
  }
  return "unknown";
}

JointStratumModel JointStratumModel::tabular(std::vector<double> s_values, std::vector<double> w_values,
                                             std::vector<Matrix> mass, Provenance provenance) {
  const auto k = static_cast<Eigen::Index>(s_values.size());
  if (mass.size() != w_values.size()) throw BadParams("tabular joint: one mass table per w value required");
  for (std::size_t l = 0; l < mass.size(); ++l) {
    const Matrix& m = mass[l];
    if (m.rows() != k || m.cols() != k) throw BadParams("tabular joint: mass table must be K x K");
    if ((m.array() < 0.0).any()) throw BadParams("tabular joint: negative mass");
    if (std::abs(m.sum() - 1.0) > 1e-10) {
      std::ostringstream msg;
      msg << "tabular joint: masses for w=" << w_values[l] << " sum to " << m.sum();
      throw BadParams(msg.str());
    }
  }
  JointStratumModel j;
  j.kind_ = JointKind::Tabular;
  j.provenance_ = provenance;
  j.s_values_ = std::move(s_values);
  j.w_values_ = std::move(w_values);
  j.mass_ = std::move(mass);
  j.w_kind_ = VarKind::Discrete;
  return j;
}

JointStratumModel JointStratumModel::gaussian(std::vector<GaussianCell> cells, std::vector<double> w_values,
                                              VarKind w_kind, int w_degree, std::size_t covariates,
                                              Provenance provenance) {
  for (const auto& c : cells) {
    if (!(c.sigma1 > 0.0) || !(c.sigma0 > 0.0)) throw BadParams("gaussian joint: sigmas must be positive");
    if (!(std::abs(c.rho) < 1.0)) throw BadParams("gaussian joint: |rho| must be < 1");
  }
  if (w_kind == VarKind::Discrete && cells.size() != w_values.size())
    throw BadParams("gaussian joint: one cell per w category required");
  if (w_kind == VarKind::Continuous && cells.size() != 1)
    throw BadParams("gaussian joint: continuous w uses one pooled cell");
  JointStratumModel j;
  j.kind_ = JointKind::Gaussian;
  j.provenance_ = provenance;
  j.cells_ = std::move(cells);
  j.w_values_ = std::move(w_values);
  j.w_kind_ = w_kind;
  j.w_degree_ = w_kind == VarKind::Continuous ? w_degree : 0;
  j.covariates_ = covariates;
  return j;
}

std::size_t JointStratumModel::cell_of(double w) const {
  if (w_kind_ == VarKind::Continuous) return 0;
  for (std::size_t l = 0; l < w_values_.size(); ++l)
    if (w_values_[l] == w) return l;
  throw InputError("schema", "w value not covered by the joint model");
}

Vector JointStratumModel::regressors(double w, const std::vector<double>& x) const {
  const auto p = static_cast<Eigen::Index>(1 + w_degree_ + static_cast<int>(covariates_));
  Vector r(p);
  r(0) = 1.0;
  double pw = 1.0;
  for (int d = 1; d <= w_degree_; ++d) {
    pw *= w;
    r(d) = pw;
  }
  if (x.size() < covariates_) throw InputError("schema", "unit has fewer covariates than the joint model");
  for (std::size_t j = 0; j < covariates_; ++j) r(1 + w_degree_ + static_cast<Eigen::Index>(j)) = x[j];
  return r;
}

double JointStratumModel::mu1(double w, const std::vector<double>& x) const {
  return cell(w).mean1.dot(regressors(w, x));
}

double JointStratumModel::mu0(double w, const std::vector<double>& x) const {
  return cell(w).mean0.dot(regressors(w, x));
}

double JointStratumModel::cond_mean_s1(double s0, double w, const std::vector<double>& x) const {
  const GaussianCell& c = cell(w);
  return mu1(w, x) + c.rho * c.sigma1 / c.sigma0 * (s0 - mu0(w, x));
}

double JointStratumModel::cond_mean_s0(double s1, double w, const std::vector<double>& x) const {
  const GaussianCell& c = cell(w);
  return mu0(w, x) + c.rho * c.sigma0 / c.sigma1 * (s1 - mu1(w, x));
}

double JointStratumModel::cond_var_s1(double w) const {
  const GaussianCell& c = cell(w);
  return (1.0 - c.rho * c.rho) * c.sigma1 * c.sigma1;
}

double JointStratumModel::cond_var_s0(double w) const {
  const GaussianCell& c = cell(w);
  return (1.0 - c.rho * c.rho) * c.sigma0 * c.sigma0;
}

double JointStratumModel::density(double s1, double s0, double w, const std::vector<double>& x) const {
  const GaussianCell& c = cell(w);
  const double u = (s1 - mu1(w, x)) / c.sigma1;
  const double v = (s0 - mu0(w, x)) / c.sigma0;
  const double one_m = 1.0 - c.rho * c.rho;
  const double q = (u * u - 2.0 * c.rho * u * v + v * v) / one_m;
  return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * c.sigma1 * c.sigma0 * std::sqrt(one_m));
}

JointStratumModel JointStratumModel::with_rho(double rho, Provenance provenance) const {
  if (kind_ != JointKind::Gaussian) throw InputError("joint", "rho applies to gaussian joints only");
  if (!(std::abs(rho) < 1.0)) throw BadParams("|rho| must be < 1");
  JointStratumModel j = *this;
  for (auto& c : j.cells_) c.rho = rho;
  j.provenance_ = provenance;
  return j;
}

double JointStratumModel::score(const PrincipalStratum& stratum, const ObservedUnit& unit) const {
  if (kind_ == JointKind::Gaussian) return density(stratum.s1, stratum.s0, unit.w, unit.x);
  int a = -1;
  int b = -1;
  for (std::size_t k = 0; k < s_values_.size(); ++k) {
    if (s_values_[k] == stratum.s1) a = static_cast<int>(k);
    if (s_values_[k] == stratum.s0) b = static_cast<int>(k);
  }
  if (a < 0 || b < 0) throw InputError("stratum", "stratum values not in the joint's support");
  int l = -1;
  for (std::size_t k = 0; k < w_values_.size(); ++k)
    if (w_values_[k] == unit.w) l = static_cast<int>(k);
  if (l < 0) throw InputError("schema", "w value not covered by the joint model");
  return mass(a, b, l);
}

JointStratumModel joint_from_monotonicity(const CellTable& table, const MonotonicityOptions& opt) {
  if (table.s_levels() != 2) throw InputError("monotonicity", "monotonicity joint requires binary S");
  std::vector<Matrix> mass;
  nlohmann::json violations = nlohmann::json::array();
  for (int l = 0; l < table.w_levels(); ++l) {
    // Index 1 is the larger S value.
    const double p1 = table.p_s(1, 1, l);
    const double p0 = table.p_s(0, 1, l);
    const double diff = p1 - p0;
    if (diff < -opt.epsilon) {
      std::ostringstream msg;
      msg << "P(S=1|Z=1,w) - P(S=1|Z=0,w) = " << diff << " at w=" << table.w_values()[static_cast<std::size_t>(l)];
      throw MonotonicityViolated(msg.str(), table.w_values()[static_cast<std::size_t>(l)], -diff);
    }
    Matrix m = Matrix::Zero(2, 2);
    m(1, 1) = p0;
    m(0, 0) = 1.0 - p1;
    m(1, 0) = std::max(diff, 0.0);
    if (diff < 0.0) {
      violations.push_back({{"w", table.w_values()[static_cast<std::size_t>(l)]}, {"difference", diff}});
      m /= m.sum();
    }
    mass.push_back(std::move(m));
  }
  auto joint = JointStratumModel::tabular(table.s_values(), table.w_values(), std::move(mass),
                                          Provenance::Monotonicity);
  joint.notes["monotonicity_epsilon"] = opt.epsilon;
  joint.notes["clipped_violations"] = violations;
  return joint;
}

JointStratumModel joint_from_monotonicity(const Dataset& d, const MonotonicityOptions& opt) {
  return joint_from_monotonicity(CellTable::from_dataset(d), opt);
}

namespace {

struct ArmFit {
  Vector coef;
  double sigma;
  std::size_t n;
};

ArmFit fit_arm(const Matrix& x, const Vector& s, const std::string& label) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (n < 2 || n <= p) throw DegenerateCell(label + ": fewer than 2 units (or too few for the regressors)");
  Vector coef;
  try {
    coef = solve_least_squares(x, s);
  } catch (const RankDeficient&) {
    throw DegenerateCell(label + ": covariate design is singular");
  }
  const double rss = (s - x * coef).squaredNorm();
  const double sigma = std::sqrt(rss / static_cast<double>(n - p));
  if (!(sigma > 0.0)) throw DegenerateCell(label + ": intermediate has zero spread");
  return {coef, sigma, static_cast<std::size_t>(n)};
}

JointStratumModel fit_gaussian_marginals(const Dataset& d, const RhoSpec& rho, const GaussianFitOptions& opt,
                                         Provenance provenance) {
  const Schema& sc = d.schema();
  if (sc.s_kind != VarKind::Continuous) throw InputError("schema", "gaussian joint requires continuous S");
  if (sc.constant_s0) throw InputError("schema", "gaussian joint requires a non-constant S0");
  d.require_both_arms();
  const std::size_t p = opt.use_covariates ? d.covariate_count() : 0;
  const bool discrete = sc.w_kind == VarKind::Discrete;
  const int degree = discrete ? 0 : opt.w_degree;
  const std::size_t ncell = discrete ? sc.w_categories.size() : 1;
  const std::vector<double> wv = discrete ? sc.w_categories : std::vector<double>{};

  // A throwaway model gives the regressor layout.
  std::vector<GaussianCell> placeholder(ncell);
  for (auto& c : placeholder) {
    c.mean1 = c.mean0 = Vector::Zero(1 + degree + static_cast<Eigen::Index>(p));
  }
  const auto layout = JointStratumModel::gaussian(placeholder, wv, sc.w_kind, degree, p, provenance);
  const auto q = static_cast<Eigen::Index>(1 + degree + static_cast<int>(p));

  std::vector<GaussianCell> cells(ncell);
  for (std::size_t c = 0; c < ncell; ++c) {
    for (int z = 0; z <= 1; ++z) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < d.size(); ++i)
        if (d[i].z == z && layout.cell_of(d[i].w) == c) idx.push_back(i);
      Matrix x(static_cast<Eigen::Index>(idx.size()), q);
      Vector s(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto& u = d[idx[r]];
        std::vector<double> xs(u.x.begin(), u.x.begin() + static_cast<std::ptrdiff_t>(p));
        x.row(static_cast<Eigen::Index>(r)) = layout.regressors(u.w, xs).transpose();
        s(static_cast<Eigen::Index>(r)) = u.s;
      }
      std::ostringstream label;
      label << "arm z=" << z;
      if (discrete) label << ", w=" << wv[c];
      const ArmFit f = fit_arm(x, s, label.str());
      if (z == 1) {
        cells[c].mean1 = f.coef;
        cells[c].sigma1 = f.sigma;
        cells[c].n1 = f.n;
      } else {
        cells[c].mean0 = f.coef;
        cells[c].sigma0 = f.sigma;
        cells[c].n0 = f.n;
      }
    }
    cells[c].rho = rho.at(c);
  }
  return JointStratumModel::gaussian(std::move(cells), wv, sc.w_kind, degree, p, provenance);
}

}  // namespace

JointStratumModel joint_from_gaussian_copula(const Dataset& d, const RhoSpec& rho, const GaussianFitOptions& opt) {
  if (rho.values.empty()) throw BadParams("rho specification is empty");
  for (double r : rho.values)
    if (!(std::abs(r) < 1.0)) throw BadParams("|rho| must be < 1");
  if (rho.values.size() != 1 && d.schema().w_kind == VarKind::Discrete &&
      rho.values.size() != d.schema().w_categories.size())
    throw BadParams("rho list must have one value or one per W category");
  auto joint = fit_gaussian_marginals(d, rho, opt, Provenance::Copula);
  joint.notes["rho"] = rho.values;
  return joint;
}

JointStratumModel joint_equipercentile(const Dataset& d, const GaussianFitOptions& opt) {
  auto joint = fit_gaussian_marginals(d, RhoSpec::constant(kEquipercentileRho), opt, Provenance::Equipercentile);
  joint.notes["rho_encoding"] = kEquipercentileRho;
  return joint;
}

double equipercentile_map_s1_to_s0(const JointStratumModel& joint, double s1, double w,
                                   const std::vector<double>& x) {
  if (joint.kind() != JointKind::Gaussian) throw InputError("joint", "equipercentile map needs a gaussian joint");
  const GaussianCell& c = joint.cell(w);
  const double u = std_normal_cdf((s1 - joint.mu1(w, x)) / c.sigma1);
  return joint.mu0(w, x) + c.sigma0 * std_normal_quantile(u);
}

}  // namespace pce
