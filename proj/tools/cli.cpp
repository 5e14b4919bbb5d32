#include "cli.hpp"

#include "pce/bayes.hpp"
#include "pce/bootstrap.hpp"
#include "pce/cell_table.hpp"
#include "pce/copula.hpp"
#include "pce/dataset.hpp"
#include "pce/dgp.hpp"
#include "pce/discrete_id.hpp"
#include "pce/errors.hpp"
#include "pce/io.hpp"
#include "pce/mom.hpp"
#include "pce/parametric.hpp"
#include "pce/scores.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <boost/version.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace pce::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("file", "cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

namespace {

// Every file a command writes goes through here so the manifest can list it.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {}

  fs::path path(const std::string& rel) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    if (std::find(files_.begin(), files_.end(), rel) == files_.end()) files_.push_back(rel);
    return p;
  }
  void write_json(const std::string& rel, const json& j) { io::write_json(j, path(rel)); }
  void write_text(const std::string& rel, const std::string& text) {
    std::ofstream out(path(rel), std::ios::binary);
    if (!out) throw InputError("file", "cannot write " + (root_ / rel).string());
    out << text;
  }
  const fs::path& root() const { return root_; }
  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path root_;
  std::vector<std::string> files_;
};

struct Global {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out = "out";
};

struct SimulateArgs {
  std::string dgp;
  std::size_t n = 1000;
  std::vector<std::string> params;
  bool population = false;
};

struct DataArgs {
  std::string data;
  std::string schema;
};

struct EstimateArgs {
  DataArgs in;
  std::string population;
  std::string method;
  std::string joint;
  std::string basis = "poly:1";
  std::string basis_h;
  std::string family = "linear";
  int g_degree = 3;
  std::string strata;
  double rho = 0.0;
  std::size_t bootstrap = 0;
  double level = 0.95;
  bool allow_sensitivity = false;
  bool no_covariates = false;
  std::string propensity = "empirical";
  std::string model;
  std::string prior;
  std::size_t iterations = 20000;
  std::size_t burn_in = 4000;
  std::size_t chains = 4;
  std::size_t thin = 1;
  std::string kernel = "collapsed";
  std::vector<double> surface_grid = {-1.0, 0.0, 1.0, 2.0, 3.0};
};

struct DiagnoseArgs {
  DataArgs in;
  std::string check;
  std::string basis = "poly:1";
  double rho = 0.0;
};

struct SweepArgs {
  DataArgs in;
  std::vector<double> rho = {0.0, 0.2, 0.4, 0.6, 0.8};
  std::size_t bootstrap = 500;
  double level = 0.95;
  std::string strata;
  bool no_covariates = false;
};

struct ReportArgs {
  std::vector<std::string> inputs;
  std::size_t bins = 40;
  DataArgs in;
  double rho = 0.0;
  std::size_t grid = 21;
};

struct RunContext {
  Global global;
  OutputDir* out = nullptr;
  std::vector<std::string> inputs;
  json summary = json::object();
};

std::string fmt(double v) { return io::format_double(v); }

Dataset load_data(const DataArgs& a, RunContext& ctx) {
  if (a.data.empty()) throw InputError("args", "--data is required");
  fs::path schema = a.schema.empty() ? fs::path(a.data).parent_path() / "schema.json" : fs::path(a.schema);
  ctx.inputs.push_back(a.data);
  ctx.inputs.push_back(schema.string());
  return io::read_dataset(a.data, schema);
}

std::vector<PrincipalStratum> parse_strata(const std::string& text) {
  std::vector<PrincipalStratum> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw BadParams("stratum '" + item + "' is not of the form s1:s0");
    try {
      out.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::exception&) {
      throw BadParams("stratum '" + item + "' is not numeric");
    }
  }
  if (out.empty()) throw BadParams("empty stratum list");
  return out;
}

JointStratumModel build_joint(const Dataset& d, const std::string& text) {
  if (text == "mono") return joint_from_monotonicity(d);
  if (text == "equi") return joint_equipercentile(d);
  if (text.rfind("copula:", 0) == 0) {
    double rho = 0.0;
    try {
      rho = std::stod(text.substr(7));
    } catch (const std::exception&) {
      throw BadParams("bad copula correlation in '" + text + "'");
    }
    return joint_from_gaussian_copula(d, RhoSpec::constant(rho));
  }
  throw BadParams("unknown joint '" + text + "' (expected mono, equi or copula:RHO)");
}

std::string default_joint(const Dataset& d) {
  return d.schema().s_kind == VarKind::Discrete ? "mono" : "copula:0";
}

std::vector<double> sorted_arm(const Dataset& d, int z) {
  std::vector<double> v;
  for (const auto& u : d.units())
    if (u.z == z) v.push_back(u.s);
  if (v.empty()) throw InputError("arms", "both treatment arms are required");
  std::sort(v.begin(), v.end());
  return v;
}

// Strata reported when the user gives none.
std::vector<PrincipalStratum> default_strata(const Dataset& d, const JointStratumModel* joint) {
  const Schema& sc = d.schema();
  if (sc.constant_s0) {
    if (sc.s_kind == VarKind::Discrete) {
      std::vector<PrincipalStratum> out;
      for (double s : sc.s_categories) out.push_back({s, *sc.constant_s0});
      return out;
    }
    const auto s1 = sorted_arm(d, 1);
    std::vector<PrincipalStratum> out;
    for (double p : {0.1, 0.25, 0.5, 0.75, 0.9}) out.push_back({sorted_quantile(s1, p), *sc.constant_s0});
    return out;
  }
  if (sc.s_kind == VarKind::Discrete && joint && joint->kind() == JointKind::Tabular) {
    std::vector<PrincipalStratum> out;
    const auto& sv = joint->s_values();
    for (std::size_t a = 0; a < sv.size(); ++a)
      for (std::size_t b = 0; b < sv.size(); ++b) {
        double m = 0.0;
        for (std::size_t l = 0; l < joint->w_values().size(); ++l)
          m += joint->mass(static_cast<int>(a), static_cast<int>(b), static_cast<int>(l));
        if (m > 1e-14) out.push_back({sv[a], sv[b]});
      }
    return out;
  }
  return default_sweep_strata(d);
}

json estimates_json(const std::vector<PceEstimate>& est) {
  json arr = json::array();
  for (const auto& e : est) arr.push_back(to_json(e));
  return arr;
}

void print_estimates(const std::vector<PceEstimate>& est) {
  for (const auto& e : est) {
    std::cout << e.method << " tau(" << fmt(e.stratum.s1) << "," << fmt(e.stratum.s0) << ") = " << fmt(e.point);
    if (e.interval) std::cout << " [" << fmt(e.interval->lower) << ", " << fmt(e.interval->upper) << "]";
    std::cout << '\n';
  }
}

// ------------------------------------------------------------------ simulate

int cmd_simulate(const SimulateArgs& a, RunContext& ctx) {
  dgp::DgpSpec spec;
  spec.id = dgp::parse_dgp_id(a.dgp);
  spec.n = a.n;
  spec.seed = ctx.global.seed;
  for (const auto& kv : a.params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw BadParams("--param expects key=value, got '" + kv + "'");
    try {
      spec.params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    } catch (const std::exception&) {
      throw BadParams("--param value for '" + kv.substr(0, eq) + "' is not numeric");
    }
  }
  const dgp::DgpResult r = dgp::generate(spec);
  OutputDir& out = *ctx.out;
  io::write_dataset(r.data, out.path("dataset.csv"), out.path("schema.json"));
  out.write_json("truth.json", r.truth);
  std::ostringstream oracle;
  oracle << "unit,s1,s0\n";
  for (std::size_t i = 0; i < r.latent.size(); ++i)
    oracle << i << ',' << fmt(r.latent[i].s1) << ',' << fmt(r.latent[i].s0) << '\n';
  out.write_text("oracle.csv", oracle.str());
  if (a.population) {
    const CellTable t = dgp::population_table(spec);
    json cells = json::array();
    for (int z = 0; z <= 1; ++z)
      for (int k = 0; k < t.s_levels(); ++k)
        for (int l = 0; l < t.w_levels(); ++l)
          cells.push_back({{"z", z},
                           {"s", t.s_values()[static_cast<std::size_t>(k)]},
                           {"w", t.w_values()[static_cast<std::size_t>(l)]},
                           {"mass", t.mass(z, k, l)},
                           {"y_sum", t.y_sum(z, k, l)}});
    out.write_json("population.json", {{"s_values", t.s_values()}, {"w_values", t.w_values()}, {"cells", cells}});
  }
  std::cout << "simulated " << r.data.size() << " units from " << dgp::dgp_name(spec.id) << '\n';
  ctx.summary = {{"dgp", dgp::dgp_name(spec.id)}, {"n", r.data.size()}};
  return 0;
}

CellTable read_population(const std::string& path) {
  const json j = io::read_json(path);
  try {
    CellTable t(j.at("s_values").get<std::vector<double>>(), j.at("w_values").get<std::vector<double>>());
    for (const auto& c : j.at("cells")) {
      const auto& sv = t.s_values();
      const auto& wv = t.w_values();
      const auto k = std::find(sv.begin(), sv.end(), c.at("s").get<double>()) - sv.begin();
      const auto l = std::find(wv.begin(), wv.end(), c.at("w").get<double>()) - wv.begin();
      if (k == static_cast<long>(sv.size()) || l == static_cast<long>(wv.size()))
        throw InputError("population", "cell value outside the declared support");
      t.add(c.at("z").get<int>(), static_cast<int>(k), static_cast<int>(l), c.at("mass").get<double>(),
            c.at("y_sum").get<double>());
    }
    return t;
  } catch (const json::exception& e) {
    throw InputError("population", path + ": " + e.what());
  }
}

// ------------------------------------------------------------------ estimate

struct MethodResult {
  std::vector<PceEstimate> estimates;
  json diagnostics = json::object();
};

json coefficients_json(const parametric::NamedCoefficients& c) {
  json j = json::object();
  for (std::size_t i = 0; i < c.names.size(); ++i) j[c.names[i]] = c.values(static_cast<Eigen::Index>(i));
  return j;
}

MethodResult from_fit(const parametric::ParametricFit& fit, const std::vector<PrincipalStratum>& strata) {
  MethodResult r;
  for (const auto& st : strata) r.estimates.push_back(fit.estimate(st));
  r.diagnostics = fit.diagnostics;
  r.diagnostics["coefficients_arm1"] = coefficients_json(fit.arm1);
  r.diagnostics["coefficients_arm0"] = coefficients_json(fit.arm0);
  return r;
}

parametric::OutcomeModelSpec model_spec(const EstimateArgs& a, const Schema& sc) {
  parametric::OutcomeModelSpec spec;
  if (a.family == "linear") spec.family = parametric::Family::Linear;
  else if (a.family == "probit") spec.family = parametric::Family::Probit;
  else throw BadParams("unknown family '" + a.family + "'");
  spec.f = parametric::Basis::parse(a.basis, sc);
  spec.h = parametric::Basis::parse(a.basis_h.empty() ? a.basis : a.basis_h, sc);
  spec.g_degree = a.g_degree;
  return spec;
}

// Runs a frequentist method on one dataset. `strata` is filled on the first
// call (from the user or the method's default) and then held fixed, so
// bootstrap replicates report the same strata in the same order.
MethodResult run_method(const Dataset& d, const EstimateArgs& a, std::vector<PrincipalStratum>& strata) {
  const Schema& sc = d.schema();
  const std::string& m = a.method;
  const std::string joint_text = a.joint.empty() ? default_joint(d) : a.joint;
  MethodResult r;

  if (m == "weighting") {
    const PropensityModel pr =
        fit_propensity(d, a.propensity == "logistic" ? PropensityKind::Logistic : PropensityKind::EmpiricalByCell);
    if (sc.constant_s0 && sc.s_kind == VarKind::Discrete) {
      const PrincipalScoreModel ps = fit_principal_score_constant_s0(d);
      if (strata.empty()) strata = default_strata(d, nullptr);
      for (const auto& st : strata) r.estimates.push_back(pce_weighting_constant_s0(d, ps, pr, st.s1));
      return r;
    }
    const JointStratumModel joint = build_joint(d, joint_text);
    if (strata.empty()) strata = default_strata(d, &joint);
    WeightingOptions opt;
    opt.allow_sensitivity = a.allow_sensitivity;
    for (const auto& st : strata) r.estimates.push_back(pce_weighting_general(d, joint, pr, st, opt));
    r.diagnostics["joint"] = joint.notes;
    return r;
  }
  if (m == "discrete-ai") {
    std::vector<PceEstimate> all;
    if (sc.constant_s0) {
      all = pce_constant_s0(d);
    } else {
      const JointStratumModel joint = build_joint(d, joint_text);
      all = discrete_ai_estimate(d, joint);
      r.diagnostics["joint"] = joint.notes;
    }
    if (strata.empty()) {
      for (const auto& e : all) strata.push_back(e.stratum);
      r.estimates = all;
      return r;
    }
    for (const auto& st : strata) {
      const auto it = std::find_if(all.begin(), all.end(), [&](const PceEstimate& e) { return e.stratum == st; });
      if (it == all.end()) throw ZeroStratumMass("stratum (" + fmt(st.s1) + "," + fmt(st.s0) + ") has no mass");
      r.estimates.push_back(*it);
    }
    return r;
  }
  if (m == "prop1" || m == "prop2") {
    const auto spec = model_spec(a, sc);
    const auto fit = m == "prop1" ? parametric::fit_prop1_linear(d, spec) : parametric::fit_prop2_probit(d, spec);
    if (strata.empty()) strata = default_strata(d, nullptr);
    return from_fit(fit, strata);
  }
  if (m == "prop3") {
    const auto fit = parametric::fit_prop3_binary(d);
    if (strata.empty()) strata = {{1.0, 1.0}, {1.0, 0.0}, {0.0, 0.0}};
    return from_fit(fit, strata);
  }
  if (m == "prop45") {
    const JointStratumModel joint = build_joint(d, joint_text);
    const auto fit = parametric::fit_prop4_prop5(d, joint, model_spec(a, sc));
    if (strata.empty()) strata = default_strata(d, &joint);
    return from_fit(fit, strata);
  }
  if (m == "propS1") {
    const JointStratumModel joint = build_joint(d, joint_text);
    const auto fit = parametric::fit_propS1_discreteW(d, joint);
    if (strata.empty()) strata = default_strata(d, &joint);
    return from_fit(fit, strata);
  }
  if (m == "mom") {
    MomOptions opt;
    opt.use_covariates = !a.no_covariates;
    if (strata.empty()) strata = default_sweep_strata(d);
    r.estimates = mom_estimate(d, a.rho, strata, opt);
    return r;
  }
  throw BadParams("unknown method '" + m + "'");
}

std::string trace_name(const std::string& param) {
  std::string s;
  for (char c : param) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-') ? c : '_';
  while (!s.empty() && s.back() == '_') s.pop_back();
  return s;
}

int cmd_estimate_bayes(const Dataset& d, const EstimateArgs& a, RunContext& ctx) {
  bayes::McmcConfig cfg;
  const bayes::Model model = bayes::parse_model(a.model.empty() ? "3" : a.model);
  const bool m12 = model == bayes::Model::M1 || model == bayes::Model::M2;
  cfg.iterations = a.iterations;
  cfg.burn_in = a.burn_in;
  cfg.chains = a.chains;
  cfg.thin = a.thin;
  cfg.seed = ctx.global.seed;
  cfg.threads = ctx.global.threads;
  cfg.prior = bayes::prior_by_name(a.prior.empty() ? (m12 ? "A" : "beta11") : a.prior);
  cfg.surface_grid = a.surface_grid;
  if (a.kernel == "collapsed") cfg.kernel = bayes::StratumKernel::Collapsed;
  else if (a.kernel == "per-unit") cfg.kernel = bayes::StratumKernel::PerUnit;
  else throw BadParams("unknown kernel '" + a.kernel + "'");

  const bayes::PosteriorDraws draws = bayes::run_gibbs(d, model, cfg);
  OutputDir& out = *ctx.out;
  json params = json::object();
  json trace_files = json::object();
  for (const auto& name : draws.names) {
    const auto s = bayes::summarize(draws, name, a.level);
    json p = {{"median", s.median}, {"lower", s.lower}, {"upper", s.upper}, {"mean", s.mean}, {"sd", s.sd}};
    if (draws.chains >= 2) {
      p["rhat"] = std::isfinite(s.rhat) ? json(s.rhat) : json("inf");
      p["rhat_degenerate"] = s.rhat_degenerate;
    }
    params[name] = p;
    const auto& chains = draws.chains_of(name);
    for (std::size_t c = 0; c < chains.size(); ++c) {
      const std::string rel = "traces/" + trace_name(name) + "_chain" + std::to_string(c) + ".csv";
      std::ostringstream csv;
      csv << "iteration,value\n";
      for (std::size_t k = 0; k < chains[c].size(); ++k)
        csv << draws.burn_in + (k + 1) * draws.thin - 1 << ',' << fmt(chains[c][k]) << '\n';
      out.write_text(rel, csv.str());
      trace_files[name].push_back(rel);
    }
  }
  json summary = {{"model", bayes::model_name(model)},
                  {"prior", cfg.prior.name},
                  {"level", a.level},
                  {"parameters", params},
                  {"trace_files", trace_files},
                  {"metadata", draws.metadata}};
  out.write_json("summary.json", summary);

  // PCE draws as estimates: tau[s1] surfaces for models 1/2, tau_ab for models 3/4.
  std::vector<PceEstimate> est;
  for (const auto& name : draws.names) {
    PrincipalStratum st;
    if (m12 && name.rfind("tau[", 0) == 0) {
      st = {std::stod(name.substr(4, name.size() - 5)), d.schema().constant_s0.value_or(0.0)};
    } else if (!m12 && name.rfind("tau_", 0) == 0) {
      st = {static_cast<double>(name[4] - '0'), static_cast<double>(name[5] - '0')};
    } else {
      continue;
    }
    PceEstimate e;
    e.stratum = st;
    e.method = "bayes-" + bayes::model_name(model);
    e.seed = cfg.seed;
    const auto& p = params[name];
    e.point = p["median"].get<double>();
    e.set_interval({p["lower"].get<double>(), p["upper"].get<double>(), a.level});
    e.diagnostics = p;
    e.diagnostics["parameter"] = name;
    e.diagnostics["prior"] = cfg.prior.name;
    if (name == "tau_01") e.diagnostics["well_defined"] = false;
    est.push_back(e);
  }
  out.write_json("estimates.json", estimates_json(est));
  out.write_json("diagnostics.json", {{"method", "bayes"}, {"metadata", draws.metadata}});
  print_estimates(est);
  if (draws.metadata.contains("nonconvergence")) std::cout << "warning: Gelman-Rubin above 1.2 for some parameters\n";
  ctx.summary = {{"method", "bayes"}, {"model", bayes::model_name(model)}, {"prior", cfg.prior.name}};
  return 0;
}

int cmd_estimate(const EstimateArgs& a, RunContext& ctx) {
  OutputDir& out = *ctx.out;
  if (!a.population.empty()) {
    ctx.inputs.push_back(a.population);
    const CellTable t = read_population(a.population);
    std::vector<PceEstimate> est;
    json diag = {{"method", a.method}, {"input", "population"}};
    if (a.method == "discrete-ai") {
      if (!a.joint.empty() && a.joint != "mono") throw BadParams("population input supports --joint mono only");
      const JointStratumModel joint = joint_from_monotonicity(t);
      const ArmLaws a1 = build_and_solve_general(t, joint, 1);
      const ArmLaws a0 = build_and_solve_general(t, joint, 0);
      est = pce_from_laws(a1, a0);
      diag["systems_arm1"] = a1.diagnostics["systems"];
      diag["systems_arm0"] = a0.diagnostics["systems"];
    } else if (a.method == "prop3") {
      const auto fit = parametric::fit_prop3_binary(t, false);
      std::vector<PrincipalStratum> strata = a.strata.empty()
                                                 ? std::vector<PrincipalStratum>{{1.0, 1.0}, {1.0, 0.0}, {0.0, 0.0}}
                                                 : parse_strata(a.strata);
      auto r = from_fit(fit, strata);
      est = r.estimates;
      diag["fit"] = r.diagnostics;
    } else {
      throw BadParams("population input supports --method discrete-ai or prop3");
    }
    out.write_json("estimates.json", estimates_json(est));
    out.write_json("diagnostics.json", diag);
    print_estimates(est);
    ctx.summary = {{"method", a.method}, {"estimates", est.size()}};
    return 0;
  }

  const Dataset d = load_data(a.in, ctx);
  if (a.method == "bayes") return cmd_estimate_bayes(d, a, ctx);

  std::vector<PrincipalStratum> strata;
  if (!a.strata.empty()) strata = parse_strata(a.strata);
  MethodResult r = run_method(d, a, strata);
  for (auto& e : r.estimates) e.seed = ctx.global.seed;
  json diag = {{"method", a.method}, {"fit", r.diagnostics}};

  if (a.bootstrap > 0) {
    BootstrapOptions opt;
    opt.replicates = a.bootstrap;
    opt.level = a.level;
    opt.seed = ctx.global.seed;
    opt.threads = ctx.global.threads;
    const auto fixed = strata;
    const Statistic stat = [&a, fixed](const Dataset& sample) {
      auto st = fixed;
      const MethodResult rr = run_method(sample, a, st);
      std::vector<double> v;
      for (const auto& e : rr.estimates) v.push_back(e.point);
      return v;
    };
    const BootstrapResult boot = bootstrap_ci(d, stat, opt);
    for (std::size_t i = 0; i < r.estimates.size(); ++i) {
      r.estimates[i].set_interval(boot.intervals[i]);
      r.estimates[i].diagnostics["bootstrap_se"] = boot.standard_errors[i];
    }
    diag["bootstrap"] = {{"replicates", a.bootstrap}, {"flavor", "percentile"}, {"failures", boot.failures},
                         {"failure_rate", boot.failure_rate}};
  }
  out.write_json("estimates.json", estimates_json(r.estimates));
  out.write_json("diagnostics.json", diag);
  print_estimates(r.estimates);
  ctx.summary = {{"method", a.method}, {"estimates", r.estimates.size()}};
  return 0;
}

// ------------------------------------------------------------------ diagnose

json check_result(const std::string& name, const std::function<json()>& body) {
  json j = {{"check", name}};
  try {
    json detail = body();
    j["pass"] = true;
    j["detail"] = detail;
  } catch (const LinearDependence& e) {
    j["pass"] = false;
    j["condition"] = e.condition();
    j["margin"] = e.margin();
    j["message"] = e.what();
  } catch (const RankDeficient& e) {
    j["pass"] = false;
    j["condition"] = e.condition();
    j["margin"] = std::isfinite(e.condition_estimate()) ? json(e.condition_estimate()) : json("inf");
    j["message"] = e.what();
  } catch (const MonotonicityViolated& e) {
    j["pass"] = false;
    j["condition"] = e.condition();
    j["margin"] = e.magnitude();
    j["w"] = e.w();
    j["message"] = e.what();
  } catch (const Error& e) {
    j["pass"] = false;
    j["condition"] = e.condition();
    j["message"] = e.what();
  }
  return j;
}

int cmd_diagnose(const DiagnoseArgs& a, RunContext& ctx) {
  const Dataset d = load_data(a.in, ctx);
  const Schema& sc = d.schema();
  const bool sdisc = sc.s_kind == VarKind::Discrete;
  const bool wdisc = sc.w_kind == VarKind::Discrete;
  const bool binary_s = sdisc && sc.s_categories == std::vector<double>{0.0, 1.0};
  json checks = json::array();
  auto want = [&](const std::string& name) { return a.check.empty() || a.check == name; };

  if (want("rank") && sdisc && wdisc) {
    checks.push_back(check_result("rank", [&]() -> json {
      if (sc.constant_s0) {
        const MomentSystem sys = build_system_constant_s0(d);
        const RankDiagnostic rd = rank_diagnostic(sys);
        json detail = {{"rank", rd.rank}, {"rows", rd.k}, {"condition", rd.condition}, {"min_singular", rd.min_singular}};
        if (!rd.identifiable)
          throw RankDeficient("P(S|Z=1,W) has rank " + std::to_string(rd.rank) + " < " + std::to_string(rd.k),
                              rd.condition);
        return detail;
      }
      const CellTable t = CellTable::from_dataset(d);
      const JointStratumModel joint = joint_from_monotonicity(t);
      const ArmLaws a1 = build_and_solve_general(t, joint, 1);
      const ArmLaws a0 = build_and_solve_general(t, joint, 0);
      return json{{"systems_arm1", a1.diagnostics["systems"]}, {"systems_arm0", a0.diagnostics["systems"]}};
    }));
  }
  if (want("monotonicity") && binary_s && !sc.constant_s0 && wdisc) {
    checks.push_back(check_result("monotonicity", [&]() -> json {
      const JointStratumModel joint = joint_from_monotonicity(d);
      return joint.notes;
    }));
  }
  if (want("linear-independence") && !sdisc && sc.constant_s0) {
    checks.push_back(check_result("linear-independence", [&]() -> json {
      parametric::OutcomeModelSpec spec;
      spec.f = parametric::Basis::parse(a.basis, sc);
      const auto fit = parametric::fit_prop1_linear(d, spec);
      return json{{"basis", spec.f.name()},
                  {"g_independence_pvalue", fit.diagnostics.value("g_independence_pvalue", json())},
                  {"alpha", parametric::kIndependenceAlpha}};
    }));
  }
  if (want("linear-independence") && !sdisc && !sc.constant_s0) {
    checks.push_back(check_result("linear-independence", [&]() -> json {
      parametric::OutcomeModelSpec spec;
      spec.f = parametric::Basis::parse(a.basis, sc);
      spec.h = spec.f;
      const JointStratumModel joint = joint_from_gaussian_copula(d, RhoSpec::constant(a.rho));
      const auto fit = parametric::fit_prop4_prop5(d, joint, spec);
      return fit.diagnostics;
    }));
  }
  if (want("constant-ratio") && binary_s && !sc.constant_s0 && wdisc) {
    checks.push_back(check_result("constant-ratio", [&]() -> json {
      const auto fit = parametric::fit_prop3_binary(d);
      return json{{"ratio_homogeneity_pvalues", fit.diagnostics.value("ratio_homogeneity_pvalues", json())},
                  {"alpha", parametric::kIndependenceAlpha}};
    }));
  }
  if (want("constant-conditional-mean") && !sc.constant_s0 && wdisc) {
    checks.push_back(check_result("constant-conditional-mean", [&]() -> json {
      const JointStratumModel joint = sdisc ? joint_from_monotonicity(d)
                                            : joint_from_gaussian_copula(d, RhoSpec::constant(a.rho));
      const auto fit = parametric::fit_propS1_discreteW(d, joint);
      return json{{"conditional_mean_variation", fit.diagnostics.value("conditional_mean_variation", json())}};
    }));
  }
  if (!a.check.empty() && checks.empty()) throw BadParams("check '" + a.check + "' does not apply to this dataset");

  bool all = true;
  for (const auto& c : checks) {
    all = all && c["pass"].get<bool>();
    std::cout << c["check"].get<std::string>() << ": " << (c["pass"].get<bool>() ? "pass" : "FAIL");
    if (c.contains("message")) std::cout << " (" << c["message"].get<std::string>() << ")";
    std::cout << '\n';
  }
  ctx.out->write_json("diagnose.json", {{"checks", checks}, {"all_pass", all}});
  ctx.summary = {{"checks", checks.size()}, {"all_pass", all}};
  return 0;
}

// ------------------------------------------------------------------ sweep

int cmd_sweep(const SweepArgs& a, RunContext& ctx) {
  const Dataset d = load_data(a.in, ctx);
  SweepSpec spec;
  spec.rho_values = a.rho;
  spec.replicates = a.bootstrap;
  spec.level = a.level;
  spec.seed = ctx.global.seed;
  spec.threads = ctx.global.threads;
  spec.mom.use_covariates = !a.no_covariates;
  if (!a.strata.empty()) spec.strata = parse_strata(a.strata);
  const SweepTable t = sensitivity_sweep(d, spec);

  std::ostringstream lng;
  lng << "s1,s0,rho,point,lower,upper,se,excludes_zero\n";
  std::ostringstream wide;
  wide << "s1,s0";
  for (double r : t.rhos) wide << ",rho=" << fmt(r);
  wide << '\n';
  for (std::size_t i = 0; i < t.strata.size(); ++i) {
    wide << fmt(t.strata[i].s1) << ',' << fmt(t.strata[i].s0);
    for (std::size_t j = 0; j < t.rhos.size(); ++j) {
      const SweepCell& c = t.at(i, j);
      lng << fmt(c.stratum.s1) << ',' << fmt(c.stratum.s0) << ',' << fmt(c.rho) << ',' << fmt(c.point) << ','
          << fmt(c.interval.lower) << ',' << fmt(c.interval.upper) << ',' << fmt(c.standard_error) << ','
          << (c.excludes_zero ? 1 : 0) << '\n';
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(3) << c.point << " (" << c.interval.lower << "; " << c.interval.upper
           << ")" << (c.excludes_zero ? "*" : "");
      wide << ',' << cell.str();
    }
    wide << '\n';
  }
  ctx.out->write_text("sweep.csv", lng.str());
  ctx.out->write_text("sweep_table.csv", wide.str());
  std::cout << wide.str();
  ctx.summary = {{"strata", t.strata.size()}, {"rhos", t.rhos}, {"failure_rates", t.failure_rates}};
  return 0;
}

// ------------------------------------------------------------------ report

std::vector<double> read_trace(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InputError("file", "cannot open trace " + p.string());
  std::string line;
  std::getline(in, line);
  std::vector<double> v;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    v.push_back(std::stod(line.substr(comma + 1)));
  }
  return v;
}

int cmd_report(const ReportArgs& a, RunContext& ctx) {
  if (a.inputs.empty() && a.in.data.empty()) throw InputError("args", "report needs --input or --data");
  if (a.bins < 1) throw BadParams("--bins must be positive");
  OutputDir& out = *ctx.out;

  // Pool every trace of a parameter per input, then bin all inputs of a
  // parameter on a shared grid so prior overlays line up.
  struct Source {
    std::string label;
    std::map<std::string, std::vector<double>> pooled;
    json summary;
  };
  std::vector<Source> sources;
  for (const auto& dir : a.inputs) {
    const fs::path sp = fs::path(dir) / "summary.json";
    ctx.inputs.push_back(sp.string());
    Source s;
    s.summary = io::read_json(sp);
    s.label = s.summary.value("model", std::string("run")) + "_" + s.summary.value("prior", std::string("prior"));
    for (const auto& [name, files] : s.summary.at("trace_files").items()) {
      auto& v = s.pooled[name];
      for (const auto& f : files) {
        const fs::path p = fs::path(dir) / f.get<std::string>();
        ctx.inputs.push_back(p.string());
        const auto t = read_trace(p);
        v.insert(v.end(), t.begin(), t.end());
      }
    }
    sources.push_back(std::move(s));
  }
  std::map<std::string, std::pair<double, double>> range;
  for (const auto& s : sources)
    for (const auto& [name, v] : s.pooled) {
      if (v.empty()) continue;
      const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
      auto it = range.find(name);
      if (it == range.end()) range[name] = {*mn, *mx};
      else it->second = {std::min(it->second.first, *mn), std::max(it->second.second, *mx)};
    }
  std::size_t histograms = 0;
  for (const auto& s : sources) {
    for (const auto& [name, v] : s.pooled) {
      if (v.empty()) continue;
      auto [lo, hi] = range[name];
      if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
      }
      const double width = (hi - lo) / static_cast<double>(a.bins);
      std::vector<std::size_t> counts(a.bins, 0);
      for (double x : v) {
        auto b = static_cast<std::size_t>((x - lo) / width);
        counts[std::min(b, a.bins - 1)] += 1;
      }
      std::ostringstream csv;
      csv << "bin_lower,bin_upper,count,density\n";
      for (std::size_t b = 0; b < a.bins; ++b)
        csv << fmt(lo + width * static_cast<double>(b)) << ',' << fmt(lo + width * static_cast<double>(b + 1)) << ','
            << counts[b] << ',' << fmt(static_cast<double>(counts[b]) / (static_cast<double>(v.size()) * width)) << '\n';
      out.write_text("histograms/" + s.label + "_" + trace_name(name) + ".csv", csv.str());
      ++histograms;
    }
    // Posterior PCE surface of models 1/2.
    std::ostringstream surf;
    bool any = false;
    surf << "s1,median,lower,upper\n";
    for (const auto& [name, p] : s.summary.at("parameters").items()) {
      if (name.rfind("tau[", 0) != 0) continue;
      any = true;
      surf << name.substr(4, name.size() - 5) << ',' << fmt(p["median"].get<double>()) << ','
           << fmt(p["lower"].get<double>()) << ',' << fmt(p["upper"].get<double>()) << '\n';
    }
    if (any) out.write_text("surfaces/" + s.label + ".csv", surf.str());
  }

  if (!a.in.data.empty()) {
    // MoM PCE surface over the box spanned by the 5% and 95% arm quantiles.
    if (a.grid < 2) throw BadParams("--grid must be at least 2");
    const Dataset d = load_data(a.in, ctx);
    const MomFit fit = mom_fit(d, a.rho);
    const auto s1 = sorted_arm(d, 1);
    const auto s0 = sorted_arm(d, 0);
    const double a1 = sorted_quantile(s1, 0.05), b1 = sorted_quantile(s1, 0.95);
    const double a0 = sorted_quantile(s0, 0.05), b0 = sorted_quantile(s0, 0.95);
    std::ostringstream csv;
    csv << "s1,s0,tau\n";
    const double g = static_cast<double>(a.grid - 1);
    for (std::size_t i = 0; i < a.grid; ++i)
      for (std::size_t j = 0; j < a.grid; ++j) {
        const PrincipalStratum st{a1 + (b1 - a1) * static_cast<double>(i) / g, a0 + (b0 - a0) * static_cast<double>(j) / g};
        csv << fmt(st.s1) << ',' << fmt(st.s0) << ',' << fmt(fit.tau(st, covariate_mean_given_stratum(d, fit, st)))
            << '\n';
      }
    out.write_text("surface.csv", csv.str());
  }
  std::cout << "wrote " << histograms << " histograms\n";
  ctx.summary = {{"histograms", histograms}};
  return 0;
}

// ------------------------------------------------------------------ driver

// Turns a JSON config object into flags placed before the user's own flags,
// so anything given on the command line wins.
std::vector<std::string> config_flags(const json& cfg, const std::string& sub) {
  std::vector<std::string> out;
  auto add = [&](const std::string& key, const json& v) {
    const std::string flag = "--" + key;
    if (v.is_boolean()) {
      if (v.get<bool>()) out.push_back(flag);
    } else if (v.is_array()) {
      for (const auto& e : v) {
        out.push_back(flag);
        out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
      }
    } else if (v.is_string()) {
      out.push_back(flag);
      out.push_back(v.get<std::string>());
    } else if (!v.is_object()) {
      out.push_back(flag);
      out.push_back(v.dump());
    }
  };
  if (!cfg.is_object()) throw InputError("config", "config file must hold a JSON object");
  for (const auto& [k, v] : cfg.items())
    if (!v.is_object()) add(k, v);
  if (cfg.contains(sub) && cfg[sub].is_object())
    for (const auto& [k, v] : cfg[sub].items()) add(k, v);
  return out;
}

const std::set<std::string> kCommands = {"simulate", "estimate", "diagnose", "sweep", "report", "replay"};

int report_error(const std::string& condition, const std::string& what, int code) {
  std::cerr << "error [" << condition << "]: " << what << '\n';
  return code;
}

int execute(std::vector<std::string> args) {
  // Expand --config before parsing; the manifest records the expanded form.
  json config;
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string path;
    std::size_t drop = 0;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      drop = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      drop = 1;
    }
    if (drop == 0) continue;
    config = io::read_json(path);
    args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i + drop));
    std::size_t at = 1;
    while (at < args.size() && !kCommands.count(args[at])) ++at;
    const std::string sub = at < args.size() ? args[at] : "";
    const auto extra = config_flags(config, sub);
    args.insert(args.begin() + static_cast<long>(std::min(at + 1, args.size())), extra.begin(), extra.end());
    break;
  }

  CLI::App app{"Principal causal effects with auxiliary variables"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  Global g;
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--threads", g.threads, "OpenMP threads (0 = runtime default)");
  app.add_option("--out", g.out, "Output directory");

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "Draw a dataset from a built-in design");
  s_sim->add_option("--dgp", sim.dgp, "1, 2, 3, 4 or jobs")->required();
  s_sim->add_option("--n", sim.n, "Sample size");
  s_sim->add_option("--param", sim.params, "Parameter override key=value")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  s_sim->add_flag("--population", sim.population, "Also write the exact observed-data law (designs 3 and 4)");

  auto add_data = [](CLI::App* s, DataArgs& d) {
    s->add_option("--data", d.data, "Dataset CSV");
    s->add_option("--schema", d.schema, "Schema JSON (default: schema.json next to the data)");
  };

  EstimateArgs est;
  auto* s_est = app.add_subcommand("estimate", "Estimate principal causal effects");
  add_data(s_est, est.in);
  s_est->add_option("--population", est.population, "Population JSON written by simulate --population");
  s_est->add_option("--method", est.method,
                    "weighting, discrete-ai, prop1, prop2, prop3, prop45, propS1, mom or bayes")
      ->required();
  s_est->add_option("--joint", est.joint, "mono, equi or copula:RHO");
  s_est->add_option("--basis", est.basis, "Basis for f(w): none, poly:D or indicator");
  s_est->add_option("--basis-h", est.basis_h, "Basis for h(w) (default: --basis)");
  s_est->add_option("--family", est.family, "Outcome family for prop45: linear or probit");
  s_est->add_option("--g-degree", est.g_degree, "Series degree for E(S|Z=1,W) with continuous W");
  s_est->add_option("--strata", est.strata, "Strata as s1:s0,s1:s0,...");
  s_est->add_option("--rho", est.rho, "Copula correlation for mom");
  s_est->add_option("--bootstrap", est.bootstrap, "Bootstrap replicates (0 = none)");
  s_est->add_option("--level", est.level, "Interval level");
  s_est->add_flag("--allow-sensitivity", est.allow_sensitivity, "Permit non-identified joints in weighting");
  s_est->add_flag("--no-covariates", est.no_covariates, "Ignore covariates in mom");
  s_est->add_option("--propensity", est.propensity, "empirical or logistic");
  s_est->add_option("--model", est.model, "Bayesian model 1, 2, 3 or 4");
  s_est->add_option("--prior", est.prior, "A, B, beta11 or beta55");
  s_est->add_option("--iterations", est.iterations, "Gibbs iterations per chain");
  s_est->add_option("--burn-in", est.burn_in, "Burn-in iterations");
  s_est->add_option("--chains", est.chains, "Number of chains");
  s_est->add_option("--thin", est.thin, "Thinning interval");
  s_est->add_option("--kernel", est.kernel, "Stratum update for models 3/4: collapsed or per-unit");
  s_est->add_option("--surface-grid", est.surface_grid, "s1 grid for model 1/2 PCE surfaces")->delimiter(',');

  DiagnoseArgs dia;
  auto* s_dia = app.add_subcommand("diagnose", "Report identifiability diagnostics");
  add_data(s_dia, dia.in);
  s_dia->add_option("check", dia.check,
                    "Only this check: rank, monotonicity, linear-independence, constant-ratio, constant-conditional-mean");
  s_dia->add_option("--basis", dia.basis, "Basis for f(w)");
  s_dia->add_option("--rho", dia.rho, "Copula correlation for continuous S");

  SweepArgs swp;
  auto* s_swp = app.add_subcommand("sweep", "Sensitivity sweep of the moment estimator over rho");
  add_data(s_swp, swp.in);
  s_swp->add_option("--rho", swp.rho, "Comma-separated rho values")->delimiter(',');
  s_swp->add_option("--bootstrap", swp.bootstrap, "Bootstrap replicates");
  s_swp->add_option("--level", swp.level, "Interval level");
  s_swp->add_option("--strata", swp.strata, "Strata as s1:s0,...");
  s_swp->add_flag("--no-covariates", swp.no_covariates, "Ignore covariates");

  ReportArgs rep;
  auto* s_rep = app.add_subcommand("report", "Histogram and surface CSVs for plotting");
  s_rep->add_option("--input", rep.inputs, "Output directory of a bayes estimate run")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  s_rep->add_option("--bins", rep.bins, "Histogram bins");
  add_data(s_rep, rep.in);
  s_rep->add_option("--rho", rep.rho, "Copula correlation for the moment surface");
  s_rep->add_option("--grid", rep.grid, "Grid points per axis for the moment surface");

  std::string manifest_in;
  auto* s_rpl = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  s_rpl->add_option("manifest", manifest_in, "manifest.json")->required();

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorClass::Input);
  }

  if (s_rpl->parsed()) {
    const json m = io::read_json(manifest_in);
    std::vector<std::string> again = m.at("argv").get<std::vector<std::string>>();
    again.push_back("--out");
    again.push_back(g.out);
    return execute(again);
  }

  const auto t0 = std::chrono::steady_clock::now();
  OutputDir out(g.out);
  fs::create_directories(g.out);
  RunContext ctx;
  ctx.global = g;
  ctx.out = &out;
  std::string command;
  int code = 0;
  json error;
  try {
    if (s_sim->parsed()) command = "simulate", code = cmd_simulate(sim, ctx);
    else if (s_est->parsed()) command = "estimate", code = cmd_estimate(est, ctx);
    else if (s_dia->parsed()) command = "diagnose", code = cmd_diagnose(dia, ctx);
    else if (s_swp->parsed()) command = "sweep", code = cmd_sweep(swp, ctx);
    else if (s_rep->parsed()) command = "report", code = cmd_report(rep, ctx);
  } catch (const Error& e) {
    code = report_error(e.condition(), e.what(), static_cast<int>(e.error_class()));
    error = {{"condition", e.condition()}, {"message", e.what()}};
  } catch (const std::exception& e) {
    code = report_error("numerical", e.what(), static_cast<int>(ErrorClass::Numerical));
    error = {{"condition", "numerical"}, {"message", e.what()}};
  }

  // Strip the output directory so a replay can redirect it.
  std::vector<std::string> recorded;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--out" && i + 1 < args.size()) {
      ++i;
      continue;
    }
    if (args[i].rfind("--out=", 0) == 0) continue;
    recorded.push_back(args[i]);
  }
  json outputs = json::array();
  for (const auto& f : out.files()) outputs.push_back({{"path", f}, {"sha256", sha256_file((out.root() / f).string())}});
  json inputs = json::array();
  for (const auto& f : ctx.inputs)
    if (fs::exists(f)) inputs.push_back({{"path", f}, {"sha256", sha256_file(f)}});
  json manifest = {
      {"command", command},
      {"argv", recorded},
      {"config", config.is_null() ? json::object() : config},
      {"seed", g.seed},
      {"threads", g.threads},
      {"versions",
       {{"pce", kVersion},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"boost", BOOST_LIB_VERSION}}},
      {"inputs", inputs},
      {"outputs", outputs},
      {"summary", ctx.summary},
      {"exit_code", code},
      {"wall_time_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  if (!error.is_null()) manifest["error"] = error;
  io::write_json(manifest, fs::path(g.out) / "manifest.json");
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  try {
    return execute(args);
  } catch (const Error& e) {
    return report_error(e.condition(), e.what(), static_cast<int>(e.error_class()));
  } catch (const std::exception& e) {
    return report_error("numerical", e.what(), static_cast<int>(ErrorClass::Numerical));
  }
}

}  // namespace pce::cli
