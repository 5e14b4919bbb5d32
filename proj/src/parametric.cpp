#include "pce/parametric.hpp"

#include "pce/errors.hpp"
#include "pce/glm.hpp"
#include "pce/normal.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pce::parametric {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<std::string> names_with(std::vector<std::string> head, const std::string& prefix, int count) {
  for (int j = 1; j <= count; ++j) head.push_back(prefix + std::to_string(j));
  return head;
}

void require_points(const ArmPoints& p, const std::string& label) {
  if (p.size() == 0) throw EmptyCell(label + ": no design points");
  if (p.w.size() != p.size() || p.y.size() != p.size() || p.weight.size() != p.size())
    throw BadParams(label + ": design point vectors differ in length");
}

Vector linear_fit(const Matrix& x, const Vector& y, const Vector& weights, const std::string& label) {
  try {
    return solve_weighted_least_squares(x, y, weights);
  } catch (const RankDeficient& e) {
    throw RankDeficient(label + ": " + e.what(), e.condition_estimate());
  }
}

// Columns (excluding the constant) must be linearly independent of each other and of 1.
void require_independent(const Matrix& columns, const std::string& what, nlohmann::json& diag,
                         const std::string& key) {
  const IndependenceDiagnostic li = linear_independence_diagnostic(columns);
  diag[key] = {{"independent", li.independent},
               {"rank", li.rank},
               {"columns", li.columns},
               {"relative_min_singular", li.relative_min_singular}};
  if (!li.independent) throw LinearDependence(what, li.relative_min_singular);
}

double rss_of(const Matrix& x, const Vector& y, int& rank) {
  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  qr.setThreshold(1e-10);
  rank = static_cast<int>(qr.rank());
  const Vector beta = qr.solve(y);
  return (y - x * beta).squaredNorm();
}

// Series fit of g(w) = E(S | Z=1, W=w) and the spread of S around it.
struct GModel {
  bool discrete = false;
  std::vector<double> w_values;
  std::vector<double> mean;
  std::vector<double> sd;
  Vector coef;
  int degree = 0;
  double pooled_sd = 0.0;

  std::size_t cell(double w) const {
    for (std::size_t l = 0; l < w_values.size(); ++l)
      if (w_values[l] == w) return l;
    throw InputError("schema", "w value not seen among treated units");
  }
  Vector poly_row(double w) const {
    Vector r(degree + 1);
    double p = 1.0;
    for (int d = 0; d <= degree; ++d) {
      r(d) = p;
      p *= w;
    }
    return r;
  }
  double at(double w) const { return discrete ? mean[cell(w)] : coef.dot(poly_row(w)); }
  double sd_at(double w) const { return discrete ? sd[cell(w)] : pooled_sd; }
};

GModel fit_g(const Dataset& d, int degree, const Basis& f, nlohmann::json& diag) {
  const Schema& sc = d.schema();
  if (sc.s_kind != VarKind::Continuous) throw InputError("schema", "this estimator needs continuous S");
  std::vector<std::size_t> treated;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i].z == 1) treated.push_back(i);
  const auto n1 = static_cast<Eigen::Index>(treated.size());
  Vector s(n1);
  for (Eigen::Index r = 0; r < n1; ++r) s(r) = d[treated[static_cast<std::size_t>(r)]].s;

  GModel g;
  Matrix extra;
  if (sc.w_kind == VarKind::Discrete) {
    g.discrete = true;
    g.w_values = sc.w_categories;
    const auto nl = g.w_values.size();
    std::vector<double> sum(nl, 0.0), sq(nl, 0.0), cnt(nl, 0.0);
    for (std::size_t i : treated) {
      const auto l = static_cast<std::size_t>(d.w_index(d[i].w));
      sum[l] += d[i].s;
      cnt[l] += 1.0;
    }
    for (std::size_t l = 0; l < nl; ++l) {
      if (cnt[l] < 1.0) {
        std::ostringstream msg;
        msg << "no treated units in cell w=" << g.w_values[l];
        throw EmptyCell(msg.str());
      }
      g.mean.push_back(sum[l] / cnt[l]);
    }
    double rss = 0.0;
    for (std::size_t i : treated) {
      const auto l = static_cast<std::size_t>(d.w_index(d[i].w));
      const double e = d[i].s - g.mean[l];
      sq[l] += e * e;
      rss += e * e;
    }
    const double dof = static_cast<double>(n1) - static_cast<double>(nl);
    g.pooled_sd = dof > 0.0 ? std::sqrt(rss / dof) : 0.0;
    for (std::size_t l = 0; l < nl; ++l) g.sd.push_back(cnt[l] > 1.0 ? std::sqrt(sq[l] / (cnt[l] - 1.0)) : g.pooled_sd);
    extra = Matrix::Zero(n1, static_cast<Eigen::Index>(nl));
    for (Eigen::Index r = 0; r < n1; ++r) extra(r, d.w_index(d[treated[static_cast<std::size_t>(r)]].w)) = 1.0;
  } else {
    if (degree < 1) throw BadParams("series degree for g(w) must be at least 1");
    g.degree = degree;
    Matrix x(n1, degree + 1);
    for (Eigen::Index r = 0; r < n1; ++r) x.row(r) = g.poly_row(d[treated[static_cast<std::size_t>(r)]].w).transpose();
    g.coef = solve_least_squares(x, s);
    const double dof = static_cast<double>(n1 - degree - 1);
    g.pooled_sd = dof > 0.0 ? std::sqrt((s - x * g.coef).squaredNorm() / dof) : 0.0;
    extra = x.rightCols(degree);
  }
  if (!(g.pooled_sd > 0.0)) throw DegenerateCell("S has no spread around g(w) in the treated arm");

  // Does g(w) leave span{1, f_j(w)}? On samples the estimated g is never
  // exactly in the span, so the numeric rank check alone cannot fail.
  Matrix base(n1, 1 + f.size());
  for (Eigen::Index r = 0; r < n1; ++r) {
    base(r, 0) = 1.0;
    if (f.size() > 0) base.row(r).tail(f.size()) = f.eval(d[treated[static_cast<std::size_t>(r)]].w).transpose();
  }
  const double p = nested_f_pvalue(base, extra, s);
  diag["g_model"] = g.discrete ? "cell means" : "polynomial degree " + std::to_string(degree);
  diag["g_independence_pvalue"] = p;
  diag["g_independence_alpha"] = kIndependenceAlpha;
  if (!(p < kIndependenceAlpha)) {
    std::ostringstream msg;
    msg << "g(w) = E(S|Z=1,W=w) is not distinguishable from a combination of {1, " << f.name()
        << "} (F-test p=" << p << ")";
    throw LinearDependence(msg.str(), p);
  }
  return g;
}

ArmPoints treated_points(const Dataset& d) {
  ArmPoints p;
  for (const auto& u : d.units())
    if (u.z == 1) p.add(u.s, u.w, u.y);
  return p;
}

// Normal weights of W_i given S1 = s1 under the fitted S1 | W law.
std::vector<double> s1_weights(const GModel& g, const std::vector<double>& ws, double s1) {
  std::vector<double> k(ws.size());
  for (std::size_t i = 0; i < ws.size(); ++i) {
    const double sd = g.sd_at(ws[i]);
    k[i] = std_normal_pdf((s1 - g.at(ws[i])) / sd) / sd;
  }
  return k;
}

double weighted_average(const std::vector<double>& k, const std::vector<double>& v) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    num += k[i] * v[i];
    den += k[i];
  }
  return den > 0.0 ? num / den : kNaN;
}

Vector row_sf(double a, const Basis& f, double w) {
  Vector r(2 + f.size());
  r(0) = 1.0;
  r(1) = a;
  if (f.size() > 0) r.tail(f.size()) = f.eval(w);
  return r;
}

Vector row_sss(double a, double b, const Basis& f, double w) {
  Vector r(3 + f.size());
  r(0) = 1.0;
  r(1) = a;
  r(2) = b;
  if (f.size() > 0) r.tail(f.size()) = f.eval(w);
  return r;
}

double tabular_cond_mean(const JointStratumModel& j, bool of_s1, double given, double w) {
  int b = -1;
  for (std::size_t k = 0; k < j.s_values().size(); ++k)
    if (j.s_values()[k] == given) b = static_cast<int>(k);
  int l = -1;
  for (std::size_t k = 0; k < j.w_values().size(); ++k)
    if (j.w_values()[k] == w) l = static_cast<int>(k);
  if (b < 0 || l < 0) throw InputError("joint", "value outside the joint's support");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t a = 0; a < j.s_values().size(); ++a) {
    const double m = of_s1 ? j.mass(static_cast<int>(a), b, l) : j.mass(b, static_cast<int>(a), l);
    num += m * j.s_values()[a];
    den += m;
  }
  if (!(den > 0.0)) throw ZeroStratumMass("conditioning value has zero mass");
  return num / den;
}

// E(S1 | S0 = s0, w) when of_s1, else E(S0 | S1 = s1, w).
double cond_mean(const JointStratumModel& j, bool of_s1, double given, double w, const std::vector<double>& x) {
  if (j.kind() == JointKind::Tabular) return tabular_cond_mean(j, of_s1, given, w);
  return of_s1 ? j.cond_mean_s1(given, w, x) : j.cond_mean_s0(given, w, x);
}

}  // namespace

double probit_normal_mix(double beta0, double alpha, double mu, double sigma2) {
  return std_normal_cdf((beta0 + alpha * mu) / std::sqrt(1.0 + alpha * alpha * sigma2));
}

Basis Basis::parse(const std::string& text, const Schema& schema) {
  if (text.empty() || text == "none") return none();
  if (text == "indicator") {
    if (schema.w_kind != VarKind::Discrete) throw BadParams("indicator basis requires discrete W");
    return indicator(schema.w_categories);
  }
  if (text.rfind("poly:", 0) == 0) {
    int deg = 0;
    try {
      deg = std::stoi(text.substr(5));
    } catch (const std::exception&) {
      throw BadParams("bad basis '" + text + "'");
    }
    if (deg < 1) throw BadParams("polynomial basis degree must be >= 1");
    return poly(deg);
  }
  throw BadParams("unknown basis '" + text + "' (expected none, poly:D or indicator)");
}

int Basis::size() const {
  switch (kind) {
    case Kind::None: return 0;
    case Kind::Poly: return degree;
    case Kind::Indicator: return categories.empty() ? 0 : static_cast<int>(categories.size()) - 1;
  }
  return 0;
}

Vector Basis::eval(double w) const {
  Vector r(size());
  if (kind == Kind::Poly) {
    double p = 1.0;
    for (int d = 0; d < degree; ++d) {
      p *= w;
      r(d) = p;
    }
  } else if (kind == Kind::Indicator) {
    for (int j = 0; j < size(); ++j) r(j) = w == categories[static_cast<std::size_t>(j) + 1] ? 1.0 : 0.0;
  }
  return r;
}

std::string Basis::name() const {
  switch (kind) {
    case Kind::None: return "none";
    case Kind::Poly: return "poly:" + std::to_string(degree);
    case Kind::Indicator: return "indicator";
  }
  return "none";
}

IndependenceDiagnostic linear_independence_diagnostic(const Matrix& evaluations) {
  Matrix a(evaluations.rows(), evaluations.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(evaluations.cols()) = evaluations;
  const RankInfo r = numerical_rank(a);
  IndependenceDiagnostic out;
  out.rank = r.rank;
  out.columns = r.columns;
  out.min_singular = r.min_singular;
  out.relative_min_singular = r.max_singular > 0.0 ? r.min_singular / r.max_singular : 0.0;
  out.independent = r.full_column_rank();
  return out;
}

double nested_f_pvalue(const Matrix& base, const Matrix& extra, const Vector& y) {
  Matrix full(base.rows(), base.cols() + extra.cols());
  full << base, extra;
  int r0 = 0;
  int r1 = 0;
  const double rss0 = rss_of(base, y, r0);
  const double rss1 = rss_of(full, y, r1);
  const int df1 = r1 - r0;
  const auto df2 = static_cast<int>(y.size()) - r1;
  if (df1 <= 0) return 1.0;
  if (df2 <= 0) return 1.0;
  if (!(rss1 > 0.0)) return rss0 > 0.0 ? 0.0 : 1.0;
  const double fstat = std::max(0.0, ((rss0 - rss1) / df1) / (rss1 / df2));
  const boost::math::fisher_f_distribution<double> dist(df1, df2);
  return boost::math::cdf(boost::math::complement(dist, fstat));
}

double NamedCoefficients::get(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values(static_cast<Eigen::Index>(i));
  throw std::out_of_range("no coefficient named " + name);
}

PceEstimate ParametricFit::estimate(const PrincipalStratum& stratum) const {
  if (!surface) throw InputError("surface", method + ": fit carries no PCE surface");
  const double v = surface(stratum);
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << "stratum (" << stratum.s1 << "," << stratum.s0 << ") has zero mass under the fitted model";
    throw ZeroStratumMass(msg.str());
  }
  PceEstimate e;
  e.stratum = stratum;
  e.point = v;
  e.method = method;
  return e;
}

// ---------------------------------------------------------------- Prop 1

ParametricFit fit_prop1_moments(const ArmPoints& treated, const ArmPoints& control, const Basis& f) {
  require_points(treated, "treated arm");
  require_points(control, "control arm");
  ParametricFit fit;
  fit.method = "prop1";
  const auto p = 2 + f.size();

  Matrix x1(static_cast<Eigen::Index>(treated.size()), p);
  for (std::size_t i = 0; i < treated.size(); ++i)
    x1.row(static_cast<Eigen::Index>(i)) = row_sf(treated.s[i], f, treated.w[i]).transpose();
  fit.arm1.names = names_with({"b0", "s1"}, "f", f.size());
  fit.arm1.values = linear_fit(x1, to_vector(treated.y), to_vector(treated.weight), "treated arm");

  Matrix x0(static_cast<Eigen::Index>(control.size()), p);
  for (std::size_t i = 0; i < control.size(); ++i)
    x0.row(static_cast<Eigen::Index>(i)) = row_sf(control.s[i], f, control.w[i]).transpose();
  require_independent(x0.rightCols(p - 1), "{1, g(w), f_j(w)} are linearly dependent", fit.diagnostics,
                      "linear_independence");
  fit.arm0.names = fit.arm1.names;
  fit.arm0.values = linear_fit(x0, to_vector(control.y), to_vector(control.weight), "control arm");
  return fit;
}

ParametricFit fit_prop1_linear(const Dataset& d, const OutcomeModelSpec& spec) {
  if (!d.schema().constant_s0) throw InputError("schema", "prop1 requires a constant control intermediate");
  d.require_both_arms();
  nlohmann::json diag;
  const GModel g = fit_g(d, spec.g_degree, spec.f, diag);
  ArmPoints control;
  for (const auto& u : d.units())
    if (u.z == 0) control.add(g.at(u.w), u.w, u.y);
  ParametricFit fit = fit_prop1_moments(treated_points(d), control, spec.f);
  for (auto& [k, v] : diag.items()) fit.diagnostics[k] = v;

  std::vector<double> ws;
  for (const auto& u : d.units()) ws.push_back(u.w);
  const Vector b1 = fit.arm1.values;
  const Vector b0 = fit.arm0.values;
  const Basis f = spec.f;
  fit.surface = [g, ws, b1, b0, f](const PrincipalStratum& st) {
    const auto k = s1_weights(g, ws, st.s1);
    std::vector<double> v(ws.size());
    for (std::size_t i = 0; i < ws.size(); ++i) {
      const Vector r = row_sf(st.s1, f, ws[i]);
      v[i] = b1.dot(r) - b0.dot(r);
    }
    return weighted_average(k, v);
  };
  return fit;
}

// ---------------------------------------------------------------- Prop 2

ParametricFit fit_prop2_moments(const ArmPoints& treated, const ArmPoints& control, const Basis& f,
                                double sigma2) {
  require_points(treated, "treated arm");
  require_points(control, "control arm");
  if (!(sigma2 >= 0.0)) throw BadParams("sigma2 must be non-negative");
  ParametricFit fit;
  fit.method = "prop2";
  const auto p = 2 + f.size();

  Matrix x1(static_cast<Eigen::Index>(treated.size()), p);
  for (std::size_t i = 0; i < treated.size(); ++i)
    x1.row(static_cast<Eigen::Index>(i)) = row_sf(treated.s[i], f, treated.w[i]).transpose();
  const auto t1 = glm::fit_probit(x1, to_vector(treated.y), to_vector(treated.weight));
  fit.arm1.names = names_with({"b0", "s1"}, "f", f.size());
  fit.arm1.values = t1.coefficients;

  Matrix x0(static_cast<Eigen::Index>(control.size()), p);
  for (std::size_t i = 0; i < control.size(); ++i)
    x0.row(static_cast<Eigen::Index>(i)) = row_sf(control.s[i], f, control.w[i]).transpose();
  require_independent(x0.rightCols(p - 1), "{1, g(w), f_j(w)} are linearly dependent", fit.diagnostics,
                      "linear_independence");
  const auto t0 = glm::fit_probit(x0, to_vector(control.y), to_vector(control.weight));
  // Observed control index is (beta'x)/k with k = sqrt(1 + alpha^2 sigma2).
  const Vector c = t0.coefficients;
  const double shrink = 1.0 - c(1) * c(1) * sigma2;
  if (!(shrink > 0.0)) {
    std::ostringstream msg;
    msg << "scaled S1 coefficient " << c(1) << " is incompatible with var(S1|W)=" << sigma2;
    throw IdentificationError("probit-scale", msg.str());
  }
  const double k = 1.0 / std::sqrt(shrink);
  fit.arm0.names = fit.arm1.names;
  fit.arm0.values = c * k;
  fit.diagnostics["scale_factor"] = k;
  fit.diagnostics["sigma2"] = sigma2;
  fit.diagnostics["iterations"] = {t1.info.iterations, t0.info.iterations};
  return fit;
}

ParametricFit fit_prop2_probit(const Dataset& d, const OutcomeModelSpec& spec) {
  if (!d.schema().constant_s0) throw InputError("schema", "prop2 requires a constant control intermediate");
  if (d.schema().y_kind != OutcomeKind::Binary) throw InputError("schema", "prop2 requires a binary outcome");
  d.require_both_arms();
  nlohmann::json diag;
  const GModel g = fit_g(d, spec.g_degree, spec.f, diag);
  ArmPoints control;
  for (const auto& u : d.units())
    if (u.z == 0) control.add(g.at(u.w), u.w, u.y);
  const double sigma2 = g.pooled_sd * g.pooled_sd;
  ParametricFit fit = fit_prop2_moments(treated_points(d), control, spec.f, sigma2);
  for (auto& [k, v] : diag.items()) fit.diagnostics[k] = v;

  // Homoscedastic S1 | W, so the pooled spread drives the W | S1 weights.
  GModel gh = g;
  if (gh.discrete) std::fill(gh.sd.begin(), gh.sd.end(), g.pooled_sd);
  std::vector<double> ws;
  for (const auto& u : d.units()) ws.push_back(u.w);
  const Vector b1 = fit.arm1.values;
  const Vector b0 = fit.arm0.values;
  const Basis f = spec.f;
  fit.surface = [gh, ws, b1, b0, f](const PrincipalStratum& st) {
    const auto k = s1_weights(gh, ws, st.s1);
    std::vector<double> v(ws.size());
    for (std::size_t i = 0; i < ws.size(); ++i) {
      const Vector r = row_sf(st.s1, f, ws[i]);
      v[i] = std_normal_cdf(b1.dot(r)) - std_normal_cdf(b0.dot(r));
    }
    return weighted_average(k, v);
  };
  return fit;
}

// ---------------------------------------------------------------- Prop 3

namespace {

// Chi-square test that log-ratios are equal across w (inverse-variance weights).
double homogeneity_pvalue(const std::vector<double>& logr, const std::vector<double>& var) {
  double sw = 0.0;
  double swx = 0.0;
  for (std::size_t l = 0; l < logr.size(); ++l) {
    if (!(var[l] > 0.0) || !std::isfinite(var[l])) return 1.0;
    sw += 1.0 / var[l];
    swx += logr[l] / var[l];
  }
  const double mean = swx / sw;
  double stat = 0.0;
  for (std::size_t l = 0; l < logr.size(); ++l) stat += (logr[l] - mean) * (logr[l] - mean) / var[l];
  const boost::math::chi_squared_distribution<double> dist(static_cast<double>(logr.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace

ParametricFit fit_prop3_binary(const CellTable& t, bool sample) {
  if (t.s_levels() != 2) throw InputError("schema", "prop3 requires binary S");
  const int nl = t.w_levels();
  const JointStratumModel joint = joint_from_monotonicity(t);
  const double hi = t.s_values()[1];
  const double lo = t.s_values()[0];

  ParametricFit fit;
  fit.method = "prop3";
  fit.diagnostics["joint"] = joint.notes;
  std::vector<double> r(static_cast<std::size_t>(nl));
  std::vector<double> q(static_cast<std::size_t>(nl));
  std::vector<double> log_r1(static_cast<std::size_t>(nl)), var_r1(static_cast<std::size_t>(nl));
  std::vector<double> log_r0(static_cast<std::size_t>(nl)), var_r0(static_cast<std::size_t>(nl));
  for (int l = 0; l < nl; ++l) {
    const auto i = static_cast<std::size_t>(l);
    const double p11 = joint.mass(1, 1, l);
    const double p10 = joint.mass(1, 0, l);
    const double p00 = joint.mass(0, 0, l);
    r[i] = p11 + p10 > 0.0 ? p11 / (p11 + p10) : 0.0;
    q[i] = p10 + p00 > 0.0 ? p10 / (p10 + p00) : 0.0;
    const double p1 = t.p_s(1, 1, l);
    const double p0 = t.p_s(0, 1, l);
    const double n1 = t.arm_cell_mass(1, l);
    const double n0 = t.arm_cell_mass(0, l);
    log_r1[i] = std::log(p0 / p1);
    var_r1[i] = (1.0 - p0) / (n0 * p0) + (1.0 - p1) / (n1 * p1);
    log_r0[i] = std::log((1.0 - p1) / (1.0 - p0));
    var_r0[i] = p1 / (n1 * (1.0 - p1)) + p0 / (n0 * (1.0 - p0));
  }
  fit.diagnostics["ratio_s1"] = r;
  fit.diagnostics["ratio_s0_complement"] = q;
  auto spread = [](const std::vector<double>& v) {
    return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
  };
  if (nl < 2) throw ConstantRatio("a single W value cannot vary the ratios");
  if (sample) {
    const double p1 = homogeneity_pvalue(log_r1, var_r1);
    const double p0 = homogeneity_pvalue(log_r0, var_r0);
    fit.diagnostics["ratio_homogeneity_pvalues"] = {p1, p0};
    if (!(p1 < kIndependenceAlpha) || !(p0 < kIndependenceAlpha)) {
      std::ostringstream msg;
      msg << "P(S=1|Z=1,w)/P(S=1|Z=0,w) or P(S=0|Z=1,w)/P(S=0|Z=0,w) is not distinguishable from constant"
          << " (p=" << p1 << ", " << p0 << ")";
      throw ConstantRatio(msg.str());
    }
  } else {
    const double s1 = spread(r);
    const double s0 = spread(q);
    fit.diagnostics["ratio_spread"] = {s1, s0};
    if (!(s1 > 1e-10) || !(s0 > 1e-10)) throw ConstantRatio("ratios are constant in w");
  }

  // Rows follow the mixture identities of each observed (Z, S) cell.
  std::vector<Vector> rows1, rows0;
  std::vector<double> y1, y0, wt1, wt0;
  for (int l = 0; l < nl; ++l) {
    const auto i = static_cast<std::size_t>(l);
    const double w = t.w_values()[i];
    auto push = [&](int z, int k, Vector row) {
      const double m = t.mass(z, k, l);
      if (!(m > 0.0)) return;
      (z == 1 ? rows1 : rows0).push_back(std::move(row));
      (z == 1 ? y1 : y0).push_back(t.mean_y(z, k, l));
      (z == 1 ? wt1 : wt0).push_back(m);
    };
    push(1, 1, (Vector(4) << 1.0, hi, r[i] * hi + (1.0 - r[i]) * lo, w).finished());
    push(1, 0, (Vector(4) << 1.0, lo, lo, w).finished());
    push(0, 1, (Vector(4) << 1.0, hi, hi, w).finished());
    push(0, 0, (Vector(4) << 1.0, q[i] * hi + (1.0 - q[i]) * lo, lo, w).finished());
  }
  auto solve = [](const std::vector<Vector>& rows, const std::vector<double>& y, const std::vector<double>& wt,
                  const std::string& label) {
    Matrix x(static_cast<Eigen::Index>(rows.size()), 4);
    for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    return linear_fit(x, to_vector(y), to_vector(wt), label);
  };
  fit.arm1.names = {"b0", "s1", "s0", "w"};
  fit.arm0.names = fit.arm1.names;
  fit.arm1.values = solve(rows1, y1, wt1, "treated arm");
  fit.arm0.values = solve(rows0, y0, wt0, "control arm");

  std::vector<double> pw(static_cast<std::size_t>(nl));
  for (int l = 0; l < nl; ++l) pw[static_cast<std::size_t>(l)] = t.p_w(l);
  const Vector d = fit.arm1.values - fit.arm0.values;
  const std::vector<double> wv = t.w_values();
  const std::vector<double> sv = t.s_values();
  fit.surface = [joint, pw, wv, sv, d](const PrincipalStratum& st) {
    int a = -1, b = -1;
    for (std::size_t k = 0; k < sv.size(); ++k) {
      if (sv[k] == st.s1) a = static_cast<int>(k);
      if (sv[k] == st.s0) b = static_cast<int>(k);
    }
    if (a < 0 || b < 0) return kNaN;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t l = 0; l < wv.size(); ++l) {
      const double m = pw[l] * joint.mass(a, b, static_cast<int>(l));
      num += m * wv[l];
      den += m;
    }
    if (!(den > 0.0)) return kNaN;
    return d(0) + d(1) * st.s1 + d(2) * st.s0 + d(3) * num / den;
  };
  return fit;
}

ParametricFit fit_prop3_binary(const Dataset& d) {
  d.require_both_arms();
  return fit_prop3_binary(CellTable::from_dataset(d), true);
}

// ---------------------------------------------------------------- Props 4/5

ParametricFit fit_prop45_moments(const ArmPoints& treated, const ArmPoints& control,
                                 const JointStratumModel& joint, const OutcomeModelSpec& spec) {
  require_points(treated, "treated arm");
  require_points(control, "control arm");
  if (joint.kind() != JointKind::Gaussian) throw InputError("joint", "props 4/5 need a gaussian joint");
  ParametricFit fit;
  fit.method = spec.family == Family::Linear ? "prop4" : "prop5";
  fit.diagnostics["joint_provenance"] = provenance_name(joint.provenance());

  const auto p1 = 3 + spec.f.size();
  Matrix x1(static_cast<Eigen::Index>(treated.size()), p1);
  Vector v1(static_cast<Eigen::Index>(treated.size()));
  for (std::size_t i = 0; i < treated.size(); ++i) {
    const double mu = joint.cond_mean_s0(treated.s[i], treated.w[i], treated.x_at(i));
    x1.row(static_cast<Eigen::Index>(i)) = row_sss(treated.s[i], mu, spec.f, treated.w[i]).transpose();
    v1(static_cast<Eigen::Index>(i)) = joint.cond_var_s0(treated.w[i]);
  }
  const auto p0 = 3 + spec.h.size();
  Matrix x0(static_cast<Eigen::Index>(control.size()), p0);
  Vector v0(static_cast<Eigen::Index>(control.size()));
  for (std::size_t i = 0; i < control.size(); ++i) {
    const double mu = joint.cond_mean_s1(control.s[i], control.w[i], control.x_at(i));
    x0.row(static_cast<Eigen::Index>(i)) = row_sss(mu, control.s[i], spec.h, control.w[i]).transpose();
    v0(static_cast<Eigen::Index>(i)) = joint.cond_var_s1(control.w[i]);
  }
  require_independent(x1.rightCols(p1 - 1), "condition (a): {1, s1, E(S0|S1=s1,W=w), f_j(w)} are linearly dependent",
                      fit.diagnostics, "independence_a");
  require_independent(x0.rightCols(p0 - 1), "condition (b): {1, s0, E(S1|S0=s0,W=w), h_j(w)} are linearly dependent",
                      fit.diagnostics, "independence_b");

  fit.arm1.names = names_with({"b0", "s1", "s0"}, "f", spec.f.size());
  fit.arm0.names = names_with({"b0", "s1", "s0"}, "h", spec.h.size());
  if (spec.family == Family::Linear) {
    fit.arm1.values = linear_fit(x1, to_vector(treated.y), to_vector(treated.weight), "treated arm");
    fit.arm0.values = linear_fit(x0, to_vector(control.y), to_vector(control.weight), "control arm");
  } else {
    // Integrating the unobserved intermediate out of the probit link rescales
    // the index by sqrt(1 + coef^2 * conditional variance) within each cell.
    const auto f1 = glm::fit_scaled_probit(x1, to_vector(treated.y), to_vector(treated.weight), 2, v1);
    const auto f0 = glm::fit_scaled_probit(x0, to_vector(control.y), to_vector(control.weight), 1, v0);
    fit.arm1.values = f1.coefficients;
    fit.arm0.values = f0.coefficients;
    fit.diagnostics["iterations"] = {f1.info.iterations, f0.info.iterations};
  }
  return fit;
}

ParametricFit fit_prop4_prop5(const Dataset& d, const JointStratumModel& joint, const OutcomeModelSpec& spec) {
  d.require_both_arms();
  if (spec.family == Family::Probit && d.schema().y_kind != OutcomeKind::Binary)
    throw InputError("schema", "probit outcome model requires a binary outcome");
  ArmPoints t, c;
  for (const auto& u : d.units()) {
    ArmPoints& p = u.z == 1 ? t : c;
    p.add(u.s, u.w, u.y);
    p.x.push_back(u.x);
  }
  ParametricFit fit = fit_prop45_moments(t, c, joint, spec);

  std::vector<double> ws;
  std::vector<std::vector<double>> xs;
  for (const auto& u : d.units()) {
    ws.push_back(u.w);
    xs.push_back(u.x);
  }
  const Vector b1 = fit.arm1.values;
  const Vector b0 = fit.arm0.values;
  const OutcomeModelSpec sp = spec;
  fit.surface = [joint, ws, xs, b1, b0, sp](const PrincipalStratum& st) {
    std::vector<double> k(ws.size()), v(ws.size());
    for (std::size_t i = 0; i < ws.size(); ++i) {
      k[i] = joint.density(st.s1, st.s0, ws[i], xs[i]);
      const double e1 = b1.dot(row_sss(st.s1, st.s0, sp.f, ws[i]));
      const double e0 = b0.dot(row_sss(st.s1, st.s0, sp.h, ws[i]));
      v[i] = sp.family == Family::Linear ? e1 - e0 : std_normal_cdf(e1) - std_normal_cdf(e0);
    }
    return weighted_average(k, v);
  };
  return fit;
}

// ---------------------------------------------------------------- Prop S1

ParametricFit fit_propS1_moments(const ArmPoints& treated, const ArmPoints& control,
                                 const JointStratumModel& joint) {
  require_points(treated, "treated arm");
  require_points(control, "control arm");
  ParametricFit fit;
  fit.method = "propS1";
  fit.diagnostics["joint_provenance"] = provenance_name(joint.provenance());

  // The identifying condition: E(S1|S0=s0,w) (resp. E(S0|S1=s1,w)) varies in w
  // for some conditioning value.
  auto varies = [&](bool of_s1, const ArmPoints& pts) {
    double best = 0.0;
    double scale = 1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double here = cond_mean(joint, of_s1, pts.s[i], pts.w[i], pts.x_at(i));
      scale = std::max(scale, std::abs(here));
      for (std::size_t j = 0; j < pts.size(); ++j) {
        if (pts.w[j] == pts.w[i]) continue;
        const double there = cond_mean(joint, of_s1, pts.s[i], pts.w[j], pts.x_at(i));
        best = std::max(best, std::abs(there - here));
      }
      if (i > 64) break;  // a handful of conditioning values suffices
    }
    return best / scale;
  };
  const double v0 = varies(true, control);
  const double v1 = varies(false, treated);
  fit.diagnostics["conditional_mean_variation"] = {v1, v0};
  if (!(v0 > 1e-10)) throw ConstantConditionalMean("E(S1|S0=s0,W=w) is constant in w for every s0");
  if (!(v1 > 1e-10)) throw ConstantConditionalMean("E(S0|S1=s1,W=w) is constant in w for every s1");

  Matrix x1(static_cast<Eigen::Index>(treated.size()), 3);
  for (std::size_t i = 0; i < treated.size(); ++i)
    x1.row(static_cast<Eigen::Index>(i)) << 1.0, treated.s[i],
        cond_mean(joint, false, treated.s[i], treated.w[i], treated.x_at(i));
  Matrix x0(static_cast<Eigen::Index>(control.size()), 3);
  for (std::size_t i = 0; i < control.size(); ++i)
    x0.row(static_cast<Eigen::Index>(i)) << 1.0, cond_mean(joint, true, control.s[i], control.w[i], control.x_at(i)),
        control.s[i];
  fit.arm1.names = {"b0", "s1", "s0"};
  fit.arm0.names = fit.arm1.names;
  try {
    fit.arm1.values = linear_fit(x1, to_vector(treated.y), to_vector(treated.weight), "treated arm");
    fit.arm0.values = linear_fit(x0, to_vector(control.y), to_vector(control.weight), "control arm");
  } catch (const RankDeficient& e) {
    throw ConstantConditionalMean(std::string("imputed intermediate is collinear with the observed one: ") + e.what());
  }
  const Vector dlt = fit.arm1.values - fit.arm0.values;
  fit.surface = [dlt](const PrincipalStratum& st) { return dlt(0) + dlt(1) * st.s1 + dlt(2) * st.s0; };
  return fit;
}

ParametricFit fit_propS1_discreteW(const Dataset& d, const JointStratumModel& joint) {
  d.require_both_arms();
  if (d.schema().w_kind != VarKind::Discrete) throw InputError("schema", "propS1 requires discrete W");
  ArmPoints t, c;
  if (joint.kind() == JointKind::Tabular) {
    // Cell-level moments are sufficient for a discrete intermediate.
    const CellTable tab = CellTable::from_dataset(d);
    for (int z = 0; z <= 1; ++z)
      for (int k = 0; k < tab.s_levels(); ++k)
        for (int l = 0; l < tab.w_levels(); ++l) {
          const double m = tab.mass(z, k, l);
          if (!(m > 0.0)) continue;
          (z == 1 ? t : c).add(tab.s_values()[static_cast<std::size_t>(k)], tab.w_values()[static_cast<std::size_t>(l)],
                               tab.mean_y(z, k, l), m);
        }
  } else {
    for (const auto& u : d.units()) {
      ArmPoints& p = u.z == 1 ? t : c;
      p.add(u.s, u.w, u.y);
      p.x.push_back(u.x);
    }
  }
  return fit_propS1_moments(t, c, joint);
}

}  // namespace pce::parametric
