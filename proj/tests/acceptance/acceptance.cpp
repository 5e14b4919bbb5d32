// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include "cli.hpp"

#include "pce/bayes.hpp"
#include "pce/bootstrap.hpp"
#include "pce/copula.hpp"
#include "pce/dgp.hpp"
#include "pce/discrete_id.hpp"
#include "pce/mom.hpp"
#include "pce/normal.hpp"
#include "pce/parametric.hpp"
#include "pce/rng.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace fs = std::filesystem;
using namespace pce;
using namespace pce::parametric;

namespace {

// Pinned tolerances and constants.
constexpr double kPopulationTol = 1e-10;
constexpr double kDiscreteTol = 0.03;
constexpr double kRhatMax = 1.1;
constexpr double kPriorShiftFactor = 3.0;
constexpr double kMixTol = 1e-8;
constexpr double kForwardInverseTol = 1e-8;
constexpr double kSampledTol = 0.05;
constexpr double kCoverageLo = 0.90;
constexpr double kCoverageHi = 0.99;
constexpr int kReplicates = 20;  // seeds 1..20 for Monte Carlo point tolerances
constexpr std::uint64_t kSeed = 1;
// Coverage counts out of kReplicates; P(count < 17) is about 0.016 at nominal 95%.
constexpr int kMinCovered = 17;

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

std::map<int, bool> verdicts;

void report(int id, const std::string& title, Outcome& o, double seconds) {
  verdicts[id] = o.pass;
  std::printf("criterion %d: %s  %s (%.1f s)  %s\n", id, o.pass ? "PASS" : "FAIL", title.c_str(), seconds,
              o.detail.str().c_str());
  std::fflush(stdout);
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

dgp::DgpResult generate(dgp::DgpId id, std::size_t n, std::uint64_t seed, const std::map<std::string, double>& p = {}) {
  dgp::DgpSpec spec;
  spec.id = id;
  spec.n = n;
  spec.seed = seed;
  spec.params = p;
  return dgp::generate(spec);
}

double point_at(const std::vector<PceEstimate>& es, double s1, double s0) {
  for (const auto& e : es)
    if (e.stratum.s1 == s1 && e.stratum.s0 == s0) return e.point;
  throw std::runtime_error("stratum missing from estimates");
}

bayes::McmcConfig full_config(const std::string& prior) {
  bayes::McmcConfig cfg;
  cfg.iterations = 20000;
  cfg.burn_in = 4000;
  cfg.chains = 4;
  cfg.seed = kSeed;
  cfg.prior = bayes::prior_by_name(prior);
  return cfg;
}

// ---------------------------------------------------------------- 1

void criterion1() {
  const auto t0 = Clock::now();
  Outcome o;
  dgp::DgpSpec spec;
  spec.id = dgp::DgpId::Dgp3;
  const CellTable t = dgp::population_table(spec);
  const auto joint = joint_from_monotonicity(t);
  const auto es = pce_from_laws(build_and_solve_general(t, joint, 1), build_and_solve_general(t, joint, 0));
  const double truth[3][3] = {{1, 1, 0.3}, {1, 0, 0.4}, {0, 0, 0.5}};
  double worst = 0;
  for (const auto& r : truth) worst = std::max(worst, std::abs(point_at(es, r[0], r[1]) - r[2]));
  const double secs = since(t0);
  o.detail << "max |error| = " << fmt(worst) << " (tol " << kPopulationTol << ")";
  o.require(worst <= kPopulationTol, "exactness");
  o.require(secs < 1.0, "runtime < 1 s");
  report(1, "population-level exactness on DGP3", o, secs);
}

// ---------------------------------------------------------------- 2, 3

void criteria2and3() {
  const auto t0 = Clock::now();
  Outcome o;
  const double truth[3] = {0.3, 0.4, 0.5};
  const PrincipalStratum st[3] = {{1, 1}, {1, 0}, {0, 0}};
  const char* names[3] = {"tau_11", "tau_10", "tau_00"};

  // Discrete identification: replicate mean judged, seed-1 draw reported.
  double mean_err[3] = {0, 0, 0};
  double seed1_err = 0;
  for (int r = 1; r <= kReplicates; ++r) {
    const auto g = generate(dgp::DgpId::Dgp3, 50000, static_cast<std::uint64_t>(r));
    const auto es = discrete_ai_estimate(g.data, joint_from_monotonicity(g.data));
    for (int k = 0; k < 3; ++k) {
      const double e = point_at(es, st[k].s1, st[k].s0) - truth[k];
      mean_err[k] += e / kReplicates;
      if (r == 1) seed1_err = std::max(seed1_err, std::abs(e));
    }
  }
  const double worst_mean = std::max({std::abs(mean_err[0]), std::abs(mean_err[1]), std::abs(mean_err[2])});
  o.detail << "discrete-ai: max |mean error| over " << kReplicates << " seeds = " << fmt(worst_mean)
           << ", seed-1 max |error| = " << fmt(seed1_err) << "; ";
  o.require(worst_mean <= kDiscreteTol, "discrete-ai within 0.03");

  // Model 3 coverage is judged as a frequency over the replicate seeds; the seed-1 run is reported.
  int covered[2][3] = {{0, 0, 0}, {0, 0, 0}};
  double rmax = 0;
  double seed1_secs = 0;
  std::vector<double> ratios;
  std::string seed1_m4;
  const std::string priors[2] = {"beta11", "beta55"};
  for (int r = 1; r <= kReplicates; ++r) {
    const auto tr = Clock::now();
    const auto data = generate(dgp::DgpId::Dgp3, 50000, static_cast<std::uint64_t>(r)).data;
    double m3[2], m4[2];
    for (int j = 0; j < 2; ++j) {
      const auto p = bayes::run_gibbs(data, bayes::Model::M3, full_config(priors[j]));
      for (int k = 0; k < 3; ++k) {
        const auto s = bayes::summarize(p, names[k]);
        const bool c = s.lower <= truth[k] && truth[k] <= s.upper;
        covered[j][k] += c;
        rmax = std::max(rmax, s.rhat);
        if (r == 1)
          o.detail << "seed-1 M3/" << priors[j] << " " << names[k] << " [" << fmt(s.lower) << ", " << fmt(s.upper)
                   << "]" << (c ? "" : " misses") << "; ";
      }
      m3[j] = bayes::summarize(p, "tau_11").median;
    }
    if (r == 1) seed1_secs = since(tr);
    for (int j = 0; j < 2; ++j)
      m4[j] = bayes::summarize(bayes::run_gibbs(data, bayes::Model::M4, full_config(priors[j])), "tau_11").median;
    const double shift3 = std::abs(m3[0] - m3[1]), shift4 = std::abs(m4[0] - m4[1]);
    ratios.push_back(shift4 / shift3);
    if (r == 1)
      seed1_m4 = "seed-1 shifts M4 " + fmt(shift4) + ", M3 " + fmt(shift3) + ", ratio " + fmt(shift4 / shift3);
  }
  int min_covered = kReplicates;
  o.detail << "M3 coverage counts over " << kReplicates << " seeds:";
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 3; ++k) {
      min_covered = std::min(min_covered, covered[j][k]);
      o.detail << " " << covered[j][k];
    }
  o.detail << " (need >= " << kMinCovered << " each); max R-hat " << fmt(rmax) << "; seed-1 pipeline "
           << fmt(seed1_secs, 3) << " s";
  o.require(min_covered >= kMinCovered, "M3 coverage frequency");
  o.require(rmax < kRhatMax, "M3 R-hat < 1.1");
  o.require(seed1_secs < 600.0, "runtime < 10 min");
  report(2, "sampled DGP3: discrete-ai and model 3", o, since(t0));

  Outcome o3;
  std::sort(ratios.begin(), ratios.end());
  const double median_ratio = 0.5 * (ratios[ratios.size() / 2 - 1] + ratios[ratios.size() / 2]);
  o3.detail << "tau_11 median shift ratio M4/M3 across priors: median over " << kReplicates << " seeds "
            << fmt(median_ratio) << " (threshold " << kPriorShiftFactor << "); " << seed1_m4;
  o3.require(median_ratio >= kPriorShiftFactor, "prior-shift ratio");
  report(3, "identifiability contrast, model 4 vs model 3", o3, 0.0);
}

// ---------------------------------------------------------------- 4

void criterion4() {
  const auto t0 = Clock::now();
  Outcome o;
  const std::pair<const char*, double> truth[] = {{"beta01", -0.5}, {"beta02", 0.5}, {"beta11", 1.0}, {"beta12", 1.5}};
  const std::string priors[2] = {"A", "B"};
  // Seed 1 runs the full schedule; the remaining coverage replicates use shorter chains.
  int covered[2][4] = {{0, 0, 0, 0}, {0, 0, 0, 0}};
  double m2[2] = {0, 0};
  for (int r = 1; r <= kReplicates; ++r) {
    const auto d2 = generate(dgp::DgpId::Dgp2, 1000, static_cast<std::uint64_t>(r)).data;
    for (int j = 0; j < 2; ++j) {
      auto cfg = full_config(priors[j]);
      if (r > 1) {
        cfg.iterations = 4000;
        cfg.burn_in = 1000;
      }
      const auto p = bayes::run_gibbs(d2, bayes::Model::M2, cfg);
      for (int k = 0; k < 4; ++k) {
        const auto s = bayes::summarize(p, truth[k].first);
        const bool c = s.lower <= truth[k].second && truth[k].second <= s.upper;
        covered[j][k] += c;
        if (r == 1 && !c) o.detail << "seed-1 M2/" << priors[j] << " misses " << truth[k].first << "; ";
      }
      if (r == 1) m2[j] = bayes::summarize(p, "beta01").median;
    }
  }
  int min_covered = kReplicates;
  o.detail << "M2 coverage counts over " << kReplicates << " seeds (beta01, beta02, beta11, beta12; A then B):";
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 4; ++k) {
      min_covered = std::min(min_covered, covered[j][k]);
      o.detail << " " << covered[j][k];
    }
  o.detail << " (need >= " << kMinCovered << " each); ";
  o.require(min_covered >= kMinCovered, "M2 coverage frequency");

  const auto d1 = generate(dgp::DgpId::Dgp1, 1000, kSeed).data;
  double m1[2];
  for (int j = 0; j < 2; ++j)
    m1[j] = bayes::summarize(bayes::run_gibbs(d1, bayes::Model::M1, full_config(priors[j])), "beta01").median;
  const double s2 = std::abs(m2[0] - m2[1]);
  const double s1 = std::abs(m1[0] - m1[1]);
  o.detail << "seed-1 beta01 median shift A vs B: M1 " << fmt(s1) << ", M2 " << fmt(s2) << ", ratio " << fmt(s1 / s2);
  o.require(s1 >= kPriorShiftFactor * s2, "M1/M2 prior-shift ratio");
  report(4, "models 1 and 2 under priors A and B", o, since(t0));
}

// ---------------------------------------------------------------- 5

void criterion5() {
  const auto t0 = Clock::now();
  Outcome o;
  RngStream rng(kSeed, 5);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const double b0 = 2 * rng.normal(), a = 2 * rng.normal(), mu = 2 * rng.normal();
    const double s2 = 0.01 + 4 * rng.uniform();
    const double sd = std::sqrt(s2);
    auto f = [&](double s) {
      const double z = (s - mu) / sd;
      return std_normal_cdf(b0 + a * s) * std::exp(-0.5 * z * z) / (sd * std::sqrt(2 * M_PI));
    };
    const double q = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, mu - 40 * sd, mu + 40 * sd, 15, 1e-14);
    worst = std::max(worst, std::abs(probit_normal_mix(b0, a, mu, s2) - q));
  }
  const double secs = since(t0);
  o.detail << "max |closed form - quadrature| over 100 tuples = " << fmt(worst, 3);
  o.require(worst <= kMixTol, "agreement within 1e-8");
  o.require(secs < 1.0, "runtime < 1 s");
  report(5, "probit-normal mixing identity", o, secs);
}

// ---------------------------------------------------------------- 6

double max_abs_diff(const Vector& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(a(static_cast<Eigen::Index>(i)) - b[i]));
  return m;
}

double dotv(const std::vector<double>& b, std::initializer_list<double> x) {
  double s = 0;
  std::size_t i = 0;
  for (double v : x) s += b[i++] * v;
  return s;
}

JointStratumModel four_cells(double rho) {
  const double mu1[4] = {0.0, 1.0, 0.5, 2.5};
  const double mu0[4] = {0.3, -0.4, 1.1, 0.2};
  std::vector<GaussianCell> cells;
  for (int l = 0; l < 4; ++l) {
    GaussianCell c;
    c.mean1 = Vector{{mu1[l]}};
    c.mean0 = Vector{{mu0[l]}};
    c.sigma1 = 1.0 + 0.1 * l;
    c.sigma0 = 0.8 + 0.05 * l;
    c.rho = rho;
    cells.push_back(c);
  }
  return JointStratumModel::gaussian(cells, {0.0, 1.0, 2.0, 3.0}, VarKind::Discrete, 0, 0, Provenance::Oracle);
}

// Population-level moments from each family, then the fit.
std::map<std::string, double> forward_inverse() {
  std::map<std::string, double> err;
  {
    const std::vector<double> b1 = {0.4, 1.2, -0.3}, b0 = {1.0, -0.5, 0.7};
    ArmPoints t, c;
    for (double w = -2; w <= 2; w += 0.5) {
      const double g = 1 + 0.5 * w + w * w;
      for (double s : {-1.0, 0.5, 2.0}) t.add(s, w, dotv(b1, {1, s, w}));
      c.add(g, w, dotv(b0, {1, g, w}));
    }
    const auto f = fit_prop1_moments(t, c, Basis::poly(1));
    err["prop1"] = std::max(max_abs_diff(f.arm1.values, b1), max_abs_diff(f.arm0.values, b0));
  }
  {
    const std::vector<double> b1 = {0.5, 1.0, 1.5}, b0 = {1.0, -0.5, 0.5};
    ArmPoints t, c;
    for (double w = -2; w <= 2; w += 0.25) {
      const double g = 1 + 0.5 * w + w * w;
      for (double s : {-1.0, 0.0, 1.0, 2.5}) t.add(s, w, std_normal_cdf(dotv(b1, {1, s, w})));
      c.add(g, w, probit_normal_mix(b0[0] + b0[2] * w, b0[1], g, 1.0));
    }
    const auto f = fit_prop2_moments(t, c, Basis::poly(1), 1.0);
    err["prop2"] = std::max(max_abs_diff(f.arm1.values, b1), max_abs_diff(f.arm0.values, b0));
  }
  {
    const std::vector<double> b1 = {0.2, 0.3, -0.1, 0.05}, b0 = {0.1, -0.2, 0.4, 0.1};
    const double strata[3][3] = {{0.5, 0.3, 0.2}, {0.2, 0.3, 0.5}, {0.3, 0.5, 0.2}};
    CellTable t({0.0, 1.0}, {0.0, 1.0, 2.0});
    for (int l = 0; l < 3; ++l) {
      const double w = l, pw = 1.0 / 3.0;
      const double p11 = strata[l][0], p10 = strata[l][1], p00 = strata[l][2];
      auto ey = [&](const std::vector<double>& b, double s1, double s0) { return b[0] + b[1] * s1 + b[2] * s0 + b[3] * w; };
      t.add(1, 1, l, 0.5 * pw * (p11 + p10), 0.5 * pw * (p11 * ey(b1, 1, 1) + p10 * ey(b1, 1, 0)));
      t.add(1, 0, l, 0.5 * pw * p00, 0.5 * pw * p00 * ey(b1, 0, 0));
      t.add(0, 1, l, 0.5 * pw * p11, 0.5 * pw * p11 * ey(b0, 1, 1));
      t.add(0, 0, l, 0.5 * pw * (p10 + p00), 0.5 * pw * (p10 * ey(b0, 1, 0) + p00 * ey(b0, 0, 0)));
    }
    const auto f = fit_prop3_binary(t, false);
    err["prop3"] = std::max(max_abs_diff(f.arm1.values, b1), max_abs_diff(f.arm0.values, b0));
  }
  for (const Family fam : {Family::Linear, Family::Probit}) {
    const auto joint = four_cells(0.4);
    OutcomeModelSpec spec;
    spec.family = fam;
    spec.f = Basis::poly(1);
    spec.h = Basis::poly(1);
    const std::vector<double> b1 = {0.5, 1.0, -0.4, 0.2}, b0 = {-0.3, 0.6, 0.8, -0.1};
    ArmPoints t, c;
    for (double w = 0; w <= 3; w += 1)
      for (double s : {-1.0, 0.0, 1.0, 2.0}) {
        const double m0 = joint.cond_mean_s0(s, w, {}), m1 = joint.cond_mean_s1(s, w, {});
        const double e1 = dotv(b1, {1, s, m0, w}), e0 = dotv(b0, {1, m1, s, w});
        if (fam == Family::Linear) {
          t.add(s, w, e1);
          c.add(s, w, e0);
        } else {
          t.add(s, w, std_normal_cdf(e1 / std::sqrt(1 + b1[2] * b1[2] * joint.cond_var_s0(w))));
          c.add(s, w, std_normal_cdf(e0 / std::sqrt(1 + b0[1] * b0[1] * joint.cond_var_s1(w))));
        }
      }
    const auto f = fit_prop45_moments(t, c, joint, spec);
    err[fam == Family::Linear ? "prop4" : "prop5"] =
        std::max(max_abs_diff(f.arm1.values, b1), max_abs_diff(f.arm0.values, b0));
  }
  {
    std::vector<Matrix> mass;
    const double p[3][3] = {{0.5, 0.3, 0.2}, {0.2, 0.3, 0.5}, {0.3, 0.5, 0.2}};
    for (auto& q : p) {
      Matrix m = Matrix::Zero(2, 2);
      m(1, 1) = q[0];
      m(1, 0) = q[1];
      m(0, 0) = q[2];
      mass.push_back(m);
    }
    const auto joint = JointStratumModel::tabular({0.0, 1.0}, {0.0, 1.0, 2.0}, mass, Provenance::Oracle);
    const std::vector<double> b1 = {0.3, 0.4, -0.2}, b0 = {0.1, 0.25, 0.35};
    ArmPoints t, c;
    for (int l = 0; l < 3; ++l) {
      const double m11 = p[l][0], m10 = p[l][1], m00 = p[l][2];
      t.add(1, l, b1[0] + b1[1] + b1[2] * m11 / (m11 + m10), m11 + m10);
      t.add(0, l, b1[0], m00);
      c.add(1, l, b0[0] + b0[1] + b0[2], m11);
      c.add(0, l, b0[0] + b0[1] * m10 / (m10 + m00), m10 + m00);
    }
    const auto f = fit_propS1_moments(t, c, joint);
    err["propS1"] = std::max(max_abs_diff(f.arm1.values, b1), max_abs_diff(f.arm0.values, b0));
  }
  return err;
}

// Continuous S, constant S0, linear outcomes; g(w) = 1 + 0.5 w + w^2.
Dataset prop1_sample(std::size_t n, std::uint64_t seed, const std::vector<double>& b1, const std::vector<double>& b0) {
  Schema sc;
  sc.s_kind = VarKind::Continuous;
  sc.w_kind = VarKind::Continuous;
  sc.y_kind = OutcomeKind::Continuous;
  sc.constant_s0 = 0.0;
  RngStream rng(seed, 61);
  std::vector<ObservedUnit> units;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = rng.normal();
    const double s1 = 1.0 + 0.5 * w + w * w + rng.normal();
    const int z = rng.bernoulli(0.5) ? 1 : 0;
    const auto& b = z == 1 ? b1 : b0;
    units.push_back({z, z == 1 ? s1 : 0.0, b[0] + b[1] * s1 + b[2] * w + rng.normal(), w, {}});
  }
  return Dataset(sc, units);
}

// JOBS_LIKE intermediates with a probit outcome drawn from the latent strata.
Dataset prop5_sample(const dgp::DgpResult& g, std::uint64_t seed, const std::vector<double>& c1,
                     const std::vector<double>& c0) {
  Schema sc = g.data.schema();
  sc.y_kind = OutcomeKind::Binary;
  RngStream rng(seed, 62);
  std::vector<ObservedUnit> units;
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    auto u = g.data[i];
    const auto& c = u.z == 1 ? c1 : c0;
    u.y = rng.bernoulli(std_normal_cdf(c[0] + c[1] * g.latent[i].s1 + c[2] * g.latent[i].s0)) ? 1.0 : 0.0;
    units.push_back(u);
  }
  return Dataset(sc, units);
}

void criterion6() {
  const auto t0 = Clock::now();
  Outcome o;
  const auto fi = forward_inverse();
  double fi_worst = 0;
  for (const auto& [k, v] : fi) fi_worst = std::max(fi_worst, v);
  o.detail << "population max |error| = " << fmt(fi_worst, 3) << " (";
  for (const auto& [k, v] : fi) o.detail << k << " " << fmt(v, 2) << " ";
  o.detail << "); ";
  o.require(fi_worst <= kForwardInverseTol, "population forward-inverse within 1e-8");

  // Sampled n=20000: per-coefficient error averaged over replicate seeds.
  std::map<std::string, std::vector<double>> mean_err;
  std::map<std::string, double> seed1;
  auto accumulate = [&](const std::string& name, const ParametricFit& f, const std::vector<double>& t1,
                        const std::vector<double>& t0v, int rep) {
    auto& m = mean_err[name];
    m.resize(t1.size() + t0v.size(), 0.0);
    double worst = 0;
    for (std::size_t k = 0; k < t1.size(); ++k) {
      const double e = f.arm1.values(static_cast<Eigen::Index>(k)) - t1[k];
      m[k] += e / kReplicates;
      worst = std::max(worst, std::abs(e));
    }
    for (std::size_t k = 0; k < t0v.size(); ++k) {
      const double e = f.arm0.values(static_cast<Eigen::Index>(k)) - t0v[k];
      m[t1.size() + k] += e / kReplicates;
      worst = std::max(worst, std::abs(e));
    }
    if (rep == 1) seed1[name] = worst;
  };
  const auto p2 = dgp::default_params(dgp::DgpId::Dgp2);
  for (int rep = 1; rep <= kReplicates; ++rep) {
    const auto seed = static_cast<std::uint64_t>(rep);
    {
      const std::vector<double> b1 = {0.5, 1.0, 0.3}, b0 = {1.0, -0.5, 0.5};
      OutcomeModelSpec spec;
      spec.f = Basis::poly(1);
      spec.g_degree = 2;
      accumulate("prop1", fit_prop1_linear(prop1_sample(20000, seed, b1, b0), spec), b1, b0, rep);
    }
    {
      OutcomeModelSpec spec;
      spec.family = Family::Probit;
      spec.f = Basis::poly(1);
      spec.g_degree = 2;
      accumulate("prop2", fit_prop2_probit(generate(dgp::DgpId::Dgp2, 20000, seed).data, spec),
                 {p2.at("b10"), p2.at("b11"), p2.at("b12")}, {p2.at("b00"), p2.at("b01"), p2.at("b02")}, rep);
    }
    {
      // DGP3 outcome probabilities are exactly linear in (S1, S0) with no W term.
      const auto d3 = generate(dgp::DgpId::Dgp3, 20000, seed).data;
      accumulate("prop3", fit_prop3_binary(d3), {0.6, 0.1, 0.1, 0.0}, {0.1, 0.2, 0.2, 0.0}, rep);
      accumulate("propS1", fit_propS1_discreteW(d3, joint_from_monotonicity(d3)), {0.6, 0.1, 0.1}, {0.1, 0.2, 0.2}, rep);
    }
    {
      const auto g = dgp::generate_jobs_like(20000, 0.4, seed);
      const auto joint = joint_from_gaussian_copula(g.data, RhoSpec::constant(0.4));
      accumulate("prop4", fit_prop4_prop5(g.data, joint, OutcomeModelSpec{}), g.truth["beta1"].get<std::vector<double>>(),
                 g.truth["beta0"].get<std::vector<double>>(), rep);
      const std::vector<double> c1 = {-1.0, 0.3, -0.1}, c0 = {-0.5, -0.1, 0.2};
      OutcomeModelSpec spec;
      spec.family = Family::Probit;
      accumulate("prop5", fit_prop4_prop5(prop5_sample(g, seed, c1, c0), joint, spec), c1, c0, rep);
    }
  }
  double worst_mean = 0;
  o.detail << "sampled n=20000, max |mean error| over " << kReplicates << " seeds (seed-1 max |error|): ";
  for (const auto& [name, m] : mean_err) {
    double w = 0;
    for (double v : m) w = std::max(w, std::abs(v));
    worst_mean = std::max(worst_mean, w);
    o.detail << name << " " << fmt(w, 2) << " (" << fmt(seed1[name], 2) << ") ";
  }
  o.require(worst_mean <= kSampledTol, "sampled within 0.05");
  const double secs = since(t0);
  o.require(secs < 120.0, "runtime < 2 min");
  report(6, "forward-inverse oracles for every parametric fit", o, secs);
}

// ---------------------------------------------------------------- 7

void criterion7() {
  const auto t0 = Clock::now();
  Outcome o;
  std::vector<double> mean_err(6, 0.0);
  double seed1 = 0;
  for (int rep = 1; rep <= kReplicates; ++rep) {
    const auto g = dgp::generate_jobs_like(20000, 0.4, static_cast<std::uint64_t>(rep));
    const auto fit = mom_fit(g.data, 0.4);
    const auto b1 = g.truth["beta1"].get<std::vector<double>>();
    const auto b0 = g.truth["beta0"].get<std::vector<double>>();
    for (int k = 0; k < 3; ++k) {
      const double e1 = fit.beta1(k) - b1[static_cast<std::size_t>(k)];
      const double e0 = fit.beta0(k) - b0[static_cast<std::size_t>(k)];
      mean_err[static_cast<std::size_t>(k)] += e1 / kReplicates;
      mean_err[static_cast<std::size_t>(3 + k)] += e0 / kReplicates;
      if (rep == 1) seed1 = std::max({seed1, std::abs(e1), std::abs(e0)});
    }
  }
  double worst = 0;
  for (double v : mean_err) worst = std::max(worst, std::abs(v));
  o.detail << "MoM coefficients: max |mean error| over " << kReplicates << " seeds = " << fmt(worst)
           << ", seed-1 max |error| = " << fmt(seed1) << "; ";
  o.require(worst <= kSampledTol, "MoM coefficients within 0.05");

  const auto g = dgp::generate_jobs_like(20000, 0.4, kSeed);
  SweepSpec spec;
  spec.replicates = 500;
  spec.seed = kSeed;
  const auto ts = Clock::now();
  const auto table = sensitivity_sweep(g.data, spec);
  const double sweep_secs = since(ts);
  const auto b1 = g.truth["beta1"].get<std::vector<double>>();
  const auto b0 = g.truth["beta0"].get<std::vector<double>>();
  auto truth = [&](const PrincipalStratum& s) {
    return (b1[0] - b0[0]) + (b1[1] - b0[1]) * s.s1 + (b1[2] - b0[2]) * s.s0;
  };
  bool ordered = true;
  for (std::size_t j = 0; j < table.rhos.size(); ++j)
    for (std::size_t i = 1; i < table.strata.size(); ++i) {
      const double dt = truth(table.strata[i]) - truth(table.strata[i - 1]);
      const double de = table.at(i, j).point - table.at(i - 1, j).point;
      ordered = ordered && (dt > 0) == (de > 0);
    }
  o.detail << "sweep 5 rho x " << table.strata.size() << " strata, 500 replicates in " << fmt(sweep_secs, 3)
           << " s; ordering along s1-s0 matches truth: " << (ordered ? "yes" : "no");
  o.require(sweep_secs < 300.0, "sweep runtime < 5 min");
  o.require(ordered, "ordering");
  report(7, "method-of-moments pipeline and sensitivity sweep", o, since(t0));
}

// ---------------------------------------------------------------- 8

void criterion8() {
  const auto t0 = Clock::now();
  Outcome o;
  const PrincipalStratum st{4.0, 3.8};
  const int sets = 200;
  int covered = 0;
  for (int k = 0; k < sets; ++k) {
    const auto g = dgp::generate_jobs_like(500, 0.4, 1000 + static_cast<std::uint64_t>(k));
    const auto b1 = g.truth["beta1"].get<std::vector<double>>();
    const auto b0 = g.truth["beta0"].get<std::vector<double>>();
    const double truth = (b1[0] - b0[0]) + (b1[1] - b0[1]) * st.s1 + (b1[2] - b0[2]) * st.s0;
    BootstrapOptions opt;
    opt.replicates = 500;
    opt.seed = static_cast<std::uint64_t>(k);
    const auto r = bootstrap_ci(g.data, [&](const Dataset& d) { return std::vector<double>{mom_fit(d, 0.4).tau(st)}; }, opt);
    if (r.intervals[0].lower <= truth && truth <= r.intervals[0].upper) ++covered;
  }
  const double rate = static_cast<double>(covered) / sets;
  o.detail << "empirical coverage of nominal 95% percentile intervals = " << fmt(rate) << " (" << covered << "/" << sets
           << ", n=500, 500 replicates each)";
  o.require(rate >= kCoverageLo && rate <= kCoverageHi, "coverage in [0.90, 0.99]");
  report(8, "bootstrap coverage on a small MoM problem", o, since(t0));
}

// ---------------------------------------------------------------- 9

void criterion9() {
  Outcome o;
  o.detail << "the published application estimates and plots need the JOBS II data, which is not distributed; "
              "declared not reproducible. Substitutes: criterion 7 "
           << (verdicts[7] ? "passed" : "failed") << ", criterion 8 " << (verdicts[8] ? "passed" : "failed");
  o.require(verdicts[7] && verdicts[8], "substitute criteria");
  report(9, "application tables and figures (not reproducible)", o, 0.0);
}

// ---------------------------------------------------------------- 10

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pce");
  std::ostringstream sink;
  auto* old = std::cout.rdbuf(sink.rdbuf());
  const int code = cli::run_cli(args);
  std::cout.rdbuf(old);
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void criterion10() {
  const auto t0 = Clock::now();
  Outcome o;
  const fs::path root = fs::temp_directory_path() / ("pce_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string seed = std::to_string(kSeed);
  const std::string d3 = (root / "dgp3" / "dataset.csv").string();
  const std::string jobs = (root / "jobs" / "dataset.csv").string();
  const std::vector<std::pair<std::string, std::vector<std::string>>> runs = {
      {"dgp3", {"simulate", "--dgp", "DGP3", "--n", "50000", "--seed", seed}},
      {"jobs", {"simulate", "--dgp", "JOBS_LIKE", "--n", "20000", "--seed", seed}},
      {"discrete", {"estimate", "--method", "discrete-ai", "--data", d3, "--bootstrap", "200", "--seed", seed}},
      {"bayes", {"estimate", "--method", "bayes", "--model", "3", "--prior", "beta11", "--iterations", "20000", "--burn-in",
                 "4000", "--chains", "4", "--data", d3, "--seed", seed}},
      {"prop45", {"estimate", "--method", "prop45", "--joint", "copula:0.4", "--data", jobs, "--seed", seed}},
      {"sweep", {"sweep", "--data", jobs, "--bootstrap", "500", "--seed", seed}},
  };
  std::size_t files = 0;
  for (const auto& [name, args] : runs) {
    auto a = args;
    a.push_back("--out");
    a.push_back((root / name).string());
    if (cli(a) != 0) {
      o.require(false, name + " run");
      continue;
    }
    const fs::path again = root / (name + "_replay");
    if (cli({"replay", (root / name / "manifest.json").string(), "--out", again.string()}) != 0) {
      o.require(false, name + " replay");
      continue;
    }
    for (const auto& f : fs::recursive_directory_iterator(root / name)) {
      if (!f.is_regular_file() || f.path().filename() == "manifest.json") continue;
      const auto rel = fs::relative(f.path(), root / name);
      ++files;
      o.require(slurp(f.path()) == slurp(again / rel), name + "/" + rel.string() + " identical");
    }
  }
  fs::remove_all(root);
  o.detail << runs.size() << " pipelines replayed from their manifests, " << files << " output files compared byte-for-byte";
  report(10, "determinism under manifest replay", o, since(t0));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  const std::vector<std::pair<int, std::function<void()>>> steps = {
      {1, criterion1}, {2, criteria2and3}, {4, criterion4}, {5, criterion5}, {6, criterion6},
      {7, criterion7}, {8, criterion8},    {9, criterion9}, {10, criterion10}};
  for (const auto& [id, fn] : steps) {
    try {
      fn();
    } catch (const std::exception& e) {
      Outcome o;
      o.require(false, std::string("exception: ") + e.what());
      report(id, "aborted", o, 0.0);
    }
  }
  int failed = 0;
  for (const auto& [id, ok] : verdicts) failed += !ok;
  std::printf("acceptance: %d of %zu criteria passed (%.1f s)\n", static_cast<int>(verdicts.size()) - failed,
              verdicts.size(), since(t0));
  return failed == 0 ? 0 : 1;
}
