#pragma once

#include "pce/cell_table.hpp"
#include "pce/dataset.hpp"
#include "pce/linalg.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pce {

enum class JointKind { Tabular, Gaussian };
enum class Provenance { Oracle, Monotonicity, Equipercentile, Copula, Sensitivity };

std::string provenance_name(Provenance p);

// Per-cell bivariate Normal law of (S1, S0). Means are linear in the cell's
// regressor row (intercept, optional polynomial terms in w, covariates).
struct GaussianCell {
  Vector mean1;  // coefficients for mu_1
  Vector mean0;  // coefficients for mu_0
  double sigma1 = 1.0;
  double sigma0 = 1.0;
  double rho = 0.0;
  std::size_t n1 = 0;
  std::size_t n0 = 0;
};

// Conditional distribution of (S1, S0) given W (and covariates).
class JointStratumModel {
 public:
  // Tabular: mass[l](a, b) = P(S1 = s_a, S0 = s_b | W = w_l).
  static JointStratumModel tabular(std::vector<double> s_values, std::vector<double> w_values,
                                   std::vector<Matrix> mass, Provenance provenance);

  // Gaussian with one cell per declared W category (discrete W), or a single
  // pooled cell whose means are polynomials of degree `w_degree` in w.
  static JointStratumModel gaussian(std::vector<GaussianCell> cells, std::vector<double> w_values,
                                    VarKind w_kind, int w_degree, std::size_t covariates,
                                    Provenance provenance);

  JointKind kind() const noexcept { return kind_; }
  Provenance provenance() const noexcept { return provenance_; }
  void set_provenance(Provenance p) { provenance_ = p; }
  bool identified() const noexcept { return provenance_ != Provenance::Sensitivity; }

  // ---- tabular ----
  const std::vector<double>& s_values() const noexcept { return s_values_; }
  const std::vector<double>& w_values() const noexcept { return w_values_; }
  const Matrix& mass(int l) const { return mass_.at(static_cast<std::size_t>(l)); }
  double mass(int a, int b, int l) const { return mass(l)(a, b); }
  // Implied marginals.
  double p_s1(int a, int l) const { return mass(l).row(a).sum(); }
  double p_s0(int b, int l) const { return mass(l).col(b).sum(); }

  // ---- gaussian ----
  const std::vector<GaussianCell>& cells() const noexcept { return cells_; }
  VarKind w_kind() const noexcept { return w_kind_; }
  int w_degree() const noexcept { return w_degree_; }
  std::size_t covariates() const noexcept { return covariates_; }
  std::size_t cell_of(double w) const;
  Vector regressors(double w, const std::vector<double>& x) const;
  double mu1(double w, const std::vector<double>& x) const;
  double mu0(double w, const std::vector<double>& x) const;
  const GaussianCell& cell(double w) const { return cells_[cell_of(w)]; }
  // E(S1 | S0 = s0, W = w) and its variance; symmetric for S0 | S1.
  double cond_mean_s1(double s0, double w, const std::vector<double>& x) const;
  double cond_mean_s0(double s1, double w, const std::vector<double>& x) const;
  double cond_var_s1(double w) const;
  double cond_var_s0(double w) const;
  // Bivariate Normal density of (S1, S0) at a point.
  double density(double s1, double s0, double w, const std::vector<double>& x) const;
  // Replace rho in every cell (sensitivity analysis).
  JointStratumModel with_rho(double rho, Provenance provenance) const;

  // Principal score e_{s1,s0}(W) for the unit's W: a probability (tabular) or
  // a density (gaussian).
  double score(const PrincipalStratum& stratum, const ObservedUnit& unit) const;

  // Free-form notes recorded while constructing the joint (e.g. clipping).
  nlohmann::json notes = nlohmann::json::object();

 private:
  JointKind kind_ = JointKind::Tabular;
  Provenance provenance_ = Provenance::Oracle;
  std::vector<double> s_values_;
  std::vector<double> w_values_;
  std::vector<Matrix> mass_;
  std::vector<GaussianCell> cells_;
  VarKind w_kind_ = VarKind::Discrete;
  int w_degree_ = 0;
  std::size_t covariates_ = 0;
};

struct MonotonicityOptions {
  // Tolerated empirical violation of P(S=1|Z=1,w) >= P(S=1|Z=0,w).
  double epsilon = 0.02;
};

// Binary S under S1 >= S0: P(1,1|w) = P(S=1|Z=0,w), P(0,0|w) = P(S=0|Z=1,w),
// P(1,0|w) = P(S=1|Z=1,w) - P(S=1|Z=0,w), P(0,1|w) = 0.
JointStratumModel joint_from_monotonicity(const CellTable& table, const MonotonicityOptions& opt = {});
JointStratumModel joint_from_monotonicity(const Dataset& d, const MonotonicityOptions& opt = {});

// rho(w): one value for every cell, or one value per declared W category.
struct RhoSpec {
  std::vector<double> values;
  static RhoSpec constant(double rho) { return RhoSpec{{rho}}; }
  double at(std::size_t cell) const { return values.size() == 1 ? values[0] : values.at(cell); }
};

struct GaussianFitOptions {
  // Polynomial degree of mu_z(w) when W is continuous.
  int w_degree = 1;
  bool use_covariates = true;
};

// Normal marginals of S_z given W fitted per W cell from arm z (mean and SD,
// or a linear regression on covariates), coupled with the supplied rho(w).
JointStratumModel joint_from_gaussian_copula(const Dataset& d, const RhoSpec& rho,
                                             const GaussianFitOptions& opt = {});

// Encoding of the comonotone coupling F1(S1|W) = F0(S0|W) as a Gaussian joint.
inline constexpr double kEquipercentileRho = 1.0 - 1e-9;

JointStratumModel joint_equipercentile(const Dataset& d, const GaussianFitOptions& opt = {});

// s0 = F0^{-1}(F1(s1 | w) | w) under the fitted Normal marginals.
double equipercentile_map_s1_to_s0(const JointStratumModel& joint, double s1, double w,
                                   const std::vector<double>& x);

}  // namespace pce
