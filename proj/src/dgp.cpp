#include "pce/dgp.hpp"

#include "pce/errors.hpp"
#include "pce/normal.hpp"
#include "pce/rng.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace pce::dgp {

namespace {

// Stratum order used by the discrete designs: (1,1), (1,0), (0,0), (0,1).
constexpr std::array<const char*, 4> kStrata = {"11", "10", "00", "01"};
constexpr std::array<std::pair<int, int>, 4> kStrataValues = {{{1, 1}, {1, 0}, {0, 0}, {0, 1}}};

// Job-search-like defaults, fixed once and documented in the README.
constexpr int kJobsLevels = 7;
constexpr std::array<double, kJobsLevels> kJobsPw = {0.10, 0.15, 0.20, 0.15, 0.10, 0.20, 0.10};
constexpr std::array<double, kJobsLevels> kJobsMu1 = {3.6, 4.3, 3.9, 4.5, 3.4, 4.1, 4.7};
constexpr std::array<double, kJobsLevels> kJobsMu0 = {3.4, 3.6, 4.2, 3.9, 3.0, 4.4, 4.0};
constexpr std::array<double, kJobsLevels> kJobsSigma1 = {0.60, 0.75, 0.55, 0.80, 0.70, 0.65, 0.50};
constexpr std::array<double, kJobsLevels> kJobsSigma0 = {0.85, 0.60, 0.75, 0.55, 0.90, 0.70, 0.80};
constexpr std::array<double, 3> kJobsGamma1 = {0.3, -0.2, 0.1};
constexpr std::array<double, 3> kJobsGamma0 = {0.2, 0.1, -0.3};
constexpr std::array<double, 3> kJobsBetaX1 = {0.2, -0.1, 0.05};
constexpr std::array<double, 3> kJobsBetaX0 = {0.1, 0.1, -0.1};

std::map<std::string, double> merged(DgpId id, const std::map<std::string, double>& overrides) {
  auto p = default_params(id);
  for (const auto& [k, v] : overrides) {
    if (!p.contains(k)) throw BadParams("unknown parameter '" + k + "' for " + dgp_name(id));
    if (!std::isfinite(v)) throw BadParams("parameter '" + k + "' is not finite");
    p[k] = v;
  }
  return p;
}

void require_probability(const std::map<std::string, double>& p, const std::string& key) {
  const double v = p.at(key);
  if (!(v >= 0.0 && v <= 1.0)) throw BadParams("parameter '" + key + "' must lie in [0,1]");
}

int discrete_strata(DgpId id) { return id == DgpId::Dgp4 ? 4 : 3; }

std::string pi_key(int u, int w) { return std::string("pi_") + kStrata[static_cast<std::size_t>(u)] + "_w" + std::to_string(w); }
std::string delta_key(int u, int z) {
  return std::string("delta_") + kStrata[static_cast<std::size_t>(u)] + "_z" + std::to_string(z);
}

void validate_discrete(DgpId id, const std::map<std::string, double>& p) {
  const int nu = discrete_strata(id);
  for (int w = 1; w <= 2; ++w) {
    double sum = 0.0;
    for (int u = 0; u < nu; ++u) {
      require_probability(p, pi_key(u, w));
      sum += p.at(pi_key(u, w));
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      std::ostringstream msg;
      msg << "P(U|W=" << w << ") sums to " << sum << ", not 1";
      throw BadParams(msg.str());
    }
    require_probability(p, "alpha_w" + std::to_string(w));
  }
  for (int u = 0; u < nu; ++u)
    for (int z = 0; z <= 1; ++z) require_probability(p, delta_key(u, z));
  require_probability(p, "pw1");
}

void validate_continuous(const std::map<std::string, double>& p) {
  if (!(p.at("sigma") > 0.0)) throw BadParams("sigma must be positive");
  require_probability(p, "pz");
}

DgpResult generate_constant_s0(const DgpSpec& spec, const std::map<std::string, double>& p) {
  validate_continuous(p);
  RngStream rng(spec.seed, 0);
  Schema schema;
  schema.s_kind = VarKind::Continuous;
  schema.w_kind = VarKind::Continuous;
  schema.y_kind = OutcomeKind::Binary;
  schema.constant_s0 = 0.0;
  const bool quadratic = spec.id == DgpId::Dgp2;
  std::vector<ObservedUnit> units;
  std::vector<PrincipalStratum> latent;
  units.reserve(spec.n);
  latent.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    ObservedUnit u;
    u.z = rng.bernoulli(p.at("pz")) ? 1 : 0;
    u.w = rng.normal();
    double mean = p.at("g0") + p.at("g1") * u.w;
    if (quadratic) mean += p.at("g2") * u.w * u.w;
    const double s1 = mean + p.at("sigma") * rng.normal();
    const double eta1 = p.at("b10") + p.at("b11") * s1 + p.at("b12") * u.w;
    const double eta0 = p.at("b00") + p.at("b01") * s1 + p.at("b02") * u.w;
    const double y1 = rng.uniform() < std_normal_cdf(eta1) ? 1.0 : 0.0;
    const double y0 = rng.uniform() < std_normal_cdf(eta0) ? 1.0 : 0.0;
    u.s = u.z == 1 ? s1 : 0.0;
    u.y = u.z == 1 ? y1 : y0;
    units.push_back(u);
    latent.push_back({s1, 0.0});
  }
  nlohmann::json truth;
  truth["dgp"] = dgp_name(spec.id);
  truth["beta0"] = {p.at("b00"), p.at("b01"), p.at("b02")};
  truth["beta1"] = {p.at("b10"), p.at("b11"), p.at("b12")};
  if (quadratic) {
    truth["gamma"] = {p.at("g0"), p.at("g1"), p.at("g2")};
  } else {
    truth["gamma"] = {p.at("g0"), p.at("g1")};
  }
  truth["sigma"] = p.at("sigma");
  truth["constant_s0"] = 0.0;
  truth["pce"] = "surface: E{Phi(beta1'(1,s1,W)) - Phi(beta0'(1,s1,W)) | S1=s1}";
  return {Dataset(std::move(schema), std::move(units)), std::move(latent), std::move(truth)};
}

DgpResult generate_discrete(const DgpSpec& spec, const std::map<std::string, double>& p) {
  validate_discrete(spec.id, p);
  const int nu = discrete_strata(spec.id);
  RngStream rng(spec.seed, 0);
  Schema schema;
  schema.s_kind = VarKind::Discrete;
  schema.s_categories = {0.0, 1.0};
  schema.w_kind = VarKind::Discrete;
  schema.w_categories = {1.0, 2.0};
  schema.y_kind = OutcomeKind::Binary;
  std::vector<ObservedUnit> units;
  std::vector<PrincipalStratum> latent;
  units.reserve(spec.n);
  latent.reserve(spec.n);
  std::vector<double> probs(static_cast<std::size_t>(nu));
  for (std::size_t i = 0; i < spec.n; ++i) {
    ObservedUnit u;
    const int w = rng.bernoulli(p.at("pw1")) ? 1 : 2;
    u.w = w;
    u.z = rng.bernoulli(p.at("alpha_w" + std::to_string(w))) ? 1 : 0;
    for (int k = 0; k < nu; ++k) probs[static_cast<std::size_t>(k)] = p.at(pi_key(k, w));
    const auto stratum = static_cast<int>(rng.categorical(probs));
    const auto [s1, s0] = kStrataValues[static_cast<std::size_t>(stratum)];
    u.s = u.z == 1 ? s1 : s0;
    u.y = rng.bernoulli(p.at(delta_key(stratum, u.z))) ? 1.0 : 0.0;
    units.push_back(u);
    latent.push_back({static_cast<double>(s1), static_cast<double>(s0)});
  }
  nlohmann::json truth;
  truth["dgp"] = dgp_name(spec.id);
  nlohmann::json tau = nlohmann::json::object();
  for (int k = 0; k < nu; ++k)
    tau[kStrata[static_cast<std::size_t>(k)]] = p.at(delta_key(k, 1)) - p.at(delta_key(k, 0));
  truth["pce"] = tau;
  nlohmann::json table = nlohmann::json::object();
  for (const auto& [k, v] : p) table[k] = v;
  truth["params"] = table;
  return {Dataset(std::move(schema), std::move(units)), std::move(latent), std::move(truth)};
}

}  // namespace

DgpId parse_dgp_id(const std::string& s) {
  if (s == "1" || s == "DGP1" || s == "dgp1") return DgpId::Dgp1;
  if (s == "2" || s == "DGP2" || s == "dgp2") return DgpId::Dgp2;
  if (s == "3" || s == "DGP3" || s == "dgp3") return DgpId::Dgp3;
  if (s == "4" || s == "DGP4" || s == "dgp4") return DgpId::Dgp4;
  if (s == "jobs" || s == "JOBS_LIKE" || s == "jobs-like" || s == "jobs_like") return DgpId::JobsLike;
  throw BadParams("unknown DGP '" + s + "'");
}

std::string dgp_name(DgpId id) {
  switch (id) {
    case DgpId::Dgp1: return "DGP1";
    case DgpId::Dgp2: return "DGP2";
    case DgpId::Dgp3: return "DGP3";
    case DgpId::Dgp4: return "DGP4";
    case DgpId::JobsLike: return "JOBS_LIKE";
  }
  return "unknown";
}

std::map<std::string, double> default_params(DgpId id) {
  switch (id) {
    case DgpId::Dgp1:
    case DgpId::Dgp2: {
      std::map<std::string, double> p = {{"b00", 1.0}, {"b01", -0.5}, {"b02", 0.5}, {"b10", 0.5},
                                         {"b11", 1.0}, {"b12", 1.5},  {"g0", 1.0},  {"g1", 0.5},
                                         {"sigma", 1.0}, {"pz", 0.5}};
      if (id == DgpId::Dgp2) p["g2"] = 1.0;
      return p;
    }
    case DgpId::Dgp3:
      return {{"pw1", 0.5},          {"alpha_w1", 0.5},     {"alpha_w2", 0.5},     {"pi_11_w1", 0.5},
              {"pi_10_w1", 0.3},     {"pi_00_w1", 0.2},     {"pi_11_w2", 0.2},     {"pi_10_w2", 0.3},
              {"pi_00_w2", 0.5},     {"delta_11_z1", 0.8},  {"delta_10_z1", 0.7},  {"delta_00_z1", 0.6},
              {"delta_11_z0", 0.5},  {"delta_10_z0", 0.3},  {"delta_00_z0", 0.1}};
    case DgpId::Dgp4:
      return {{"pw1", 0.5},         {"alpha_w1", 0.5},    {"alpha_w2", 0.5},    {"pi_11_w1", 0.5},
              {"pi_10_w1", 0.3},    {"pi_00_w1", 0.1},    {"pi_01_w1", 0.1},    {"pi_11_w2", 0.1},
              {"pi_10_w2", 0.3},    {"pi_00_w2", 0.5},    {"pi_01_w2", 0.1},    {"delta_11_z1", 0.8},
              {"delta_10_z1", 0.7}, {"delta_00_z1", 0.6}, {"delta_01_z1", 0.2}, {"delta_11_z0", 0.5},
              {"delta_10_z0", 0.3}, {"delta_00_z0", 0.1}, {"delta_01_z0", 0.5}};
    case DgpId::JobsLike:
      return {{"rho", 0.4},  {"pz", 2.0 / 3.0}, {"b10", 1.60}, {"b11", -0.25}, {"b12", 0.20},
              {"b00", 1.70}, {"b01", 0.10},     {"b02", -0.15}, {"sigma_y", 0.5}, {"covariates", 0.0}};
  }
  return {};
}

DgpResult generate(const DgpSpec& spec) {
  if (spec.n < 1) throw BadParams("sample size must be at least 1");
  if (spec.id == DgpId::JobsLike) {
    const auto p = merged(spec.id, spec.params);
    return generate_jobs_like(spec.n, p.at("rho"), spec.seed, spec.params);
  }
  const auto p = merged(spec.id, spec.params);
  if (spec.id == DgpId::Dgp1 || spec.id == DgpId::Dgp2) return generate_constant_s0(spec, p);
  return generate_discrete(spec, p);
}

DgpResult generate_jobs_like(std::size_t n, double rho_true, std::uint64_t seed,
                             std::map<std::string, double> overrides) {
  if (n < 1) throw BadParams("sample size must be at least 1");
  overrides["rho"] = rho_true;
  const auto p = merged(DgpId::JobsLike, overrides);
  const double rho = p.at("rho");
  if (!(std::abs(rho) < 1.0)) throw BadParams("|rho_true| must be < 1");
  if (!(p.at("sigma_y") > 0.0)) throw BadParams("sigma_y must be positive");
  require_probability(p, "pz");
  const double pc = p.at("covariates");
  if (pc < 0.0 || pc > 3.0 || pc != std::floor(pc)) throw BadParams("covariates must be 0, 1, 2 or 3");
  const auto ncov = static_cast<std::size_t>(pc);

  RngStream rng(seed, 0);
  Schema schema;
  schema.s_kind = VarKind::Continuous;
  schema.w_kind = VarKind::Discrete;
  for (int w = 1; w <= kJobsLevels; ++w) schema.w_categories.push_back(w);
  schema.y_kind = OutcomeKind::Continuous;
  for (std::size_t j = 0; j < ncov; ++j) schema.covariate_names.push_back("x" + std::to_string(j + 1));

  std::vector<ObservedUnit> units;
  std::vector<PrincipalStratum> latent;
  units.reserve(n);
  latent.reserve(n);
  const std::vector<double> pw(kJobsPw.begin(), kJobsPw.end());
  for (std::size_t i = 0; i < n; ++i) {
    ObservedUnit u;
    const std::size_t c = rng.categorical(pw);
    u.w = static_cast<double>(c + 1);
    u.z = rng.bernoulli(p.at("pz")) ? 1 : 0;
    double m1 = kJobsMu1[c];
    double m0 = kJobsMu0[c];
    double yx1 = 0.0;
    double yx0 = 0.0;
    for (std::size_t j = 0; j < ncov; ++j) {
      const double xj = rng.normal();
      u.x.push_back(xj);
      m1 += kJobsGamma1[j] * xj;
      m0 += kJobsGamma0[j] * xj;
      yx1 += kJobsBetaX1[j] * xj;
      yx0 += kJobsBetaX0[j] * xj;
    }
    const double e1 = rng.normal();
    const double e0 = rho * e1 + std::sqrt(1.0 - rho * rho) * rng.normal();
    const double s1 = m1 + kJobsSigma1[c] * e1;
    const double s0 = m0 + kJobsSigma0[c] * e0;
    const double y1 = p.at("b10") + p.at("b11") * s1 + p.at("b12") * s0 + yx1 + p.at("sigma_y") * rng.normal();
    const double y0 = p.at("b00") + p.at("b01") * s1 + p.at("b02") * s0 + yx0 + p.at("sigma_y") * rng.normal();
    u.s = u.z == 1 ? s1 : s0;
    u.y = u.z == 1 ? y1 : y0;
    units.push_back(std::move(u));
    latent.push_back({s1, s0});
  }

  nlohmann::json truth;
  truth["dgp"] = "JOBS_LIKE";
  truth["rho"] = rho;
  truth["beta1"] = {p.at("b10"), p.at("b11"), p.at("b12")};
  truth["beta0"] = {p.at("b00"), p.at("b01"), p.at("b02")};
  truth["sigma_y"] = p.at("sigma_y");
  truth["p_w"] = kJobsPw;
  truth["mu1"] = kJobsMu1;
  truth["mu0"] = kJobsMu0;
  truth["sigma1"] = kJobsSigma1;
  truth["sigma0"] = kJobsSigma0;
  truth["pz"] = p.at("pz");
  if (ncov > 0) {
    truth["gamma1"] = std::vector<double>(kJobsGamma1.begin(), kJobsGamma1.begin() + static_cast<std::ptrdiff_t>(ncov));
    truth["gamma0"] = std::vector<double>(kJobsGamma0.begin(), kJobsGamma0.begin() + static_cast<std::ptrdiff_t>(ncov));
    truth["beta1_x"] = std::vector<double>(kJobsBetaX1.begin(), kJobsBetaX1.begin() + static_cast<std::ptrdiff_t>(ncov));
    truth["beta0_x"] = std::vector<double>(kJobsBetaX0.begin(), kJobsBetaX0.begin() + static_cast<std::ptrdiff_t>(ncov));
  }
  truth["pce"] = "tau(s1,s0) = (b10-b00) + (b11-b01) s1 + (b12-b02) s0";
  return {Dataset(std::move(schema), std::move(units)), std::move(latent), std::move(truth)};
}

CellTable population_table(const DgpSpec& spec) {
  if (spec.id != DgpId::Dgp3 && spec.id != DgpId::Dgp4)
    throw BadParams("population tables exist for DGP3 and DGP4 only");
  const auto p = merged(spec.id, spec.params);
  validate_discrete(spec.id, p);
  const int nu = discrete_strata(spec.id);
  CellTable t({0.0, 1.0}, {1.0, 2.0});
  for (int w = 1; w <= 2; ++w) {
    const double pw = w == 1 ? p.at("pw1") : 1.0 - p.at("pw1");
    const double alpha = p.at("alpha_w" + std::to_string(w));
    for (int z = 0; z <= 1; ++z) {
      const double pz = z == 1 ? alpha : 1.0 - alpha;
      for (int u = 0; u < nu; ++u) {
        const auto [s1, s0] = kStrataValues[static_cast<std::size_t>(u)];
        const int s = z == 1 ? s1 : s0;
        const double mass = pw * pz * p.at(pi_key(u, w));
        t.add(z, s, w - 1, mass, mass * p.at(delta_key(u, z)));
      }
    }
  }
  return t;
}

JointStratumModel oracle_joint(const DgpSpec& spec) {
  if (spec.id != DgpId::Dgp3 && spec.id != DgpId::Dgp4)
    throw BadParams("oracle joints exist for DGP3 and DGP4 only");
  const auto p = merged(spec.id, spec.params);
  validate_discrete(spec.id, p);
  const int nu = discrete_strata(spec.id);
  std::vector<Matrix> mass;
  for (int w = 1; w <= 2; ++w) {
    Matrix m = Matrix::Zero(2, 2);
    for (int u = 0; u < nu; ++u) {
      const auto [s1, s0] = kStrataValues[static_cast<std::size_t>(u)];
      m(s1, s0) = p.at(pi_key(u, w));
    }
    mass.push_back(m);
  }
  return JointStratumModel::tabular({0.0, 1.0}, {1.0, 2.0}, std::move(mass), Provenance::Oracle);
}

}  // namespace pce::dgp
