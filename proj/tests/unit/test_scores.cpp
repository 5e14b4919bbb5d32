#include "support.hpp"

#include "pce/copula.hpp"
#include "pce/dgp.hpp"
#include "pce/errors.hpp"
#include "pce/scores.hpp"

#include <doctest.h>

using namespace pce;

namespace {

// Horvitz-Thompson arm-mean difference with empirical propensity.
double ht_difference(const Dataset& d) {
  double n1 = 0, y1 = 0, y0 = 0;
  for (const auto& u : d.units()) {
    n1 += u.z;
    (u.z == 1 ? y1 : y0) += u.y;
  }
  const double n = static_cast<double>(d.size());
  const double pi = n1 / n;
  return y1 / pi / n - y0 / (1.0 - pi) / n;
}

Dataset one_cell_dataset(std::uint64_t seed, std::size_t n) {
  Schema sc = testing::discrete_schema({0, 1, 2}, {1}, false, 0.0);
  RngStream rng(seed, 0);
  std::vector<ObservedUnit> units;
  for (std::size_t i = 0; i < n; ++i) {
    const int z = rng.bernoulli(0.4) ? 1 : 0;
    const double s = z == 1 ? static_cast<double>(rng.uniform_index(3)) : 0.0;
    units.push_back({z, s, rng.normal() + s, 1.0, {}});
  }
  return Dataset(sc, units);
}

}  // namespace

TEST_CASE("propensity counting example") {
  Schema sc = testing::discrete_schema({0, 1}, {1, 2}, true);
  Dataset d(sc, {{1, 0, 0, 1, {}}, {1, 1, 1, 1, {}}, {0, 0, 0, 1, {}}, {1, 1, 1, 1, {}},
                 {0, 0, 1, 2, {}}, {1, 0, 0, 2, {}}});
  const auto pr = fit_propensity(d);
  CHECK(pr.predict(d[0]) == doctest::Approx(0.75));
  CHECK(pr.predict(d[4]) == doctest::Approx(0.5));
}

TEST_CASE("propensity requires both arms per cell") {
  Schema sc = testing::discrete_schema({0, 1}, {1, 2}, true);
  Dataset d(sc, {{1, 0, 0, 1, {}}, {0, 0, 0, 1, {}}, {1, 1, 1, 2, {}}});
  CHECK_THROWS_AS(fit_propensity(d), EmptyCell);
}

TEST_CASE("DGP3 propensity is one half per cell") {
  dgp::DgpSpec spec;
  spec.id = dgp::DgpId::Dgp3;
  spec.n = 20000;
  spec.seed = 4;
  const auto r = dgp::generate(spec);
  const auto pr = fit_propensity(r.data);
  for (double w : {1.0, 2.0}) {
    ObservedUnit u{0, 0, 0, w, {}};
    double nw = 0;
    for (const auto& v : r.data.units()) nw += v.w == w;
    CHECK(std::abs(pr.predict(u) - 0.5) < 3.0 / std::sqrt(nw));
  }
}

TEST_CASE("logistic propensity converges on randomized data") {
  dgp::DgpSpec spec;
  spec.id = dgp::DgpId::Dgp1;
  spec.n = 5000;
  spec.seed = 6;
  const auto r = dgp::generate(spec);
  const auto pr = fit_propensity(r.data, PropensityKind::Logistic);
  CHECK(pr.predict(r.data[0]) == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("principal score counting and degeneracy") {
  Schema sc = testing::discrete_schema({0, 1}, {1}, true, 0.0);
  Dataset d(sc, {{1, 0, 0, 1, {}}, {1, 1, 1, 1, {}}, {1, 0, 0, 1, {}}, {1, 1, 1, 1, {}}, {0, 0, 1, 1, {}}});
  const auto ps = fit_principal_score_constant_s0(d);
  CHECK(ps.score(0.0, d[0]) == doctest::Approx(0.5));
  CHECK(ps.score(1.0, d[0]) == doctest::Approx(0.5));

  Dataset e(sc, {{1, 1, 0, 1, {}}, {1, 1, 1, 1, {}}, {0, 0, 1, 1, {}}});
  const auto pe = fit_principal_score_constant_s0(e);
  CHECK(pe.score(1.0, e[0]) == doctest::Approx(1.0));
  const auto pr = fit_propensity(e);
  CHECK_THROWS_AS(pce_weighting_constant_s0(e, pe, pr, 0.0), ZeroStratumMass);
}

TEST_CASE("principal scores sum to one per cell") {
  dgp::DgpSpec spec;
  spec.id = dgp::DgpId::Dgp3;
  spec.n = 3000;
  const auto r = dgp::generate(spec);
  Schema sc = r.data.schema();
  sc.constant_s0 = 0.0;
  std::vector<ObservedUnit> units;
  for (auto u : r.data.units()) {
    if (u.z == 0) u.s = 0.0;
    units.push_back(u);
  }
  const Dataset d(sc, units);
  const auto ps = fit_principal_score_constant_s0(d);
  for (const auto& u : d.units()) CHECK(ps.scores(u).sum() == doctest::Approx(1.0).epsilon(1e-10));
  const auto pm = fit_principal_score_constant_s0(d, PrincipalScoreKind::MultinomialLogistic);
  for (std::size_t i = 0; i < 20; ++i) CHECK(pm.scores(d[i]).sum() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("one-sided noncompliance compliance rate") {
  Schema sc = testing::discrete_schema({0, 1}, {1, 2}, true, 0.0);
  RngStream rng(21, 0);
  std::vector<ObservedUnit> units;
  for (int i = 0; i < 20000; ++i) {
    const int z = rng.bernoulli(0.5) ? 1 : 0;
    const double w = rng.bernoulli(0.5) ? 1.0 : 2.0;
    const double s1 = rng.bernoulli(0.6) ? 1.0 : 0.0;
    units.push_back({z, z == 1 ? s1 : 0.0, rng.bernoulli(0.5) ? 1.0 : 0.0, w, {}});
  }
  const Dataset d(sc, units);
  const auto ps = fit_principal_score_constant_s0(d);
  for (double w : {1.0, 2.0}) {
    double nw = 0;
    for (const auto& u : units) nw += (u.w == w && u.z == 1);
    CHECK(std::abs(ps.score(1.0, {1, 0, 0, w, {}}) - 0.6) < 3.0 / std::sqrt(nw));
  }
}

TEST_CASE("single W cell collapses weighting to the arm-mean difference") {
  const Dataset d = one_cell_dataset(3, 400);
  const auto ps = fit_principal_score_constant_s0(d);
  const auto pr = fit_propensity(d);
  for (double s1 : {0.0, 1.0, 2.0}) {
    const auto e = pce_weighting_constant_s0(d, ps, pr, s1);
    CHECK(std::abs(e.point - ht_difference(d)) < 1e-12);
  }
}

TEST_CASE("hand-computed weighting example") {
  // Two W cells, three units each. Treated S gives e_1(w=1)=1/2, e_1(w=2)=1.
  Schema sc = testing::discrete_schema({0, 1}, {1, 2}, false, 0.0);
  Dataset d(sc, {{1, 1, 4.0, 1, {}}, {1, 0, 2.0, 1, {}}, {0, 0, 1.0, 1, {}},
                 {1, 1, 6.0, 2, {}}, {0, 0, 3.0, 2, {}}, {0, 0, 5.0, 2, {}}});
  const auto ps = fit_principal_score_constant_s0(d);
  const auto pr = fit_propensity(d);
  const auto e = pce_weighting_constant_s0(d, ps, pr, 1.0);
  // ebar = (3*0.5 + 3*1)/6 = 0.75; pi(1) = 2/3, pi(2) = 1/3.
  const double ebar = 0.75;
  const double t1 = ((0.5 / ebar) * 4.0 / (2.0 / 3) + (0.5 / ebar) * 2.0 / (2.0 / 3) + (1.0 / ebar) * 6.0 / (1.0 / 3)) / 6.0;
  const double t0 = ((0.5 / ebar) * 1.0 / (1.0 / 3) + (1.0 / ebar) * 3.0 / (2.0 / 3) + (1.0 / ebar) * 5.0 / (2.0 / 3)) / 6.0;
  CHECK(e.point == doctest::Approx(t1 - t0).epsilon(1e-14));
  CHECK(e.diagnostics["stratum_mass"].get<double>() == doctest::Approx(ebar));
}

TEST_CASE("weighting under principal ignorability recovers the truth") {
  // Y_z depends on W only, so tau_{s1} = E{E(Y1-Y0|W) | S1=s1}.
  Schema sc = testing::discrete_schema({0, 1}, {1, 2, 3}, false, 0.0);
  const double ps[3] = {0.2, 0.5, 0.8};
  const double eff[3] = {1.0, 2.0, -1.0};
  RngStream rng(31, 0);
  std::vector<ObservedUnit> units;
  for (int i = 0; i < 20000; ++i) {
    const int l = static_cast<int>(rng.uniform_index(3));
    const int z = rng.bernoulli(0.3 + 0.2 * l) ? 1 : 0;
    const double s1 = rng.bernoulli(ps[l]) ? 1.0 : 0.0;
    const double y0 = rng.normal();
    const double y1 = y0 + eff[l] + 0.5 * rng.normal();
    units.push_back({z, z == 1 ? s1 : 0.0, z == 1 ? y1 : y0, static_cast<double>(l + 1), {}});
  }
  const Dataset d(sc, units);
  const auto psm = fit_principal_score_constant_s0(d);
  const auto pr = fit_propensity(d);
  const double e1 = (0.2 + 0.5 + 0.8) / 3.0;
  const double truth1 = (0.2 * 1.0 + 0.5 * 2.0 + 0.8 * -1.0) / 3.0 / e1;
  const double truth0 = (0.8 * 1.0 + 0.5 * 2.0 + 0.2 * -1.0) / 3.0 / (1.0 - e1);
  CHECK(std::abs(pce_weighting_constant_s0(d, psm, pr, 1.0).point - truth1) <= 0.03 * 3);
  CHECK(std::abs(pce_weighting_constant_s0(d, psm, pr, 0.0).point - truth0) <= 0.03 * 3);
}

TEST_CASE("general weighting: single stratum joint gives the IPW ATE") {
  Schema sc = testing::discrete_schema({0, 1}, {1, 2}, false);
  RngStream rng(8, 0);
  std::vector<ObservedUnit> units;
  for (int i = 0; i < 2000; ++i) {
    const int z = rng.bernoulli(0.5) ? 1 : 0;
    const double w = rng.bernoulli(0.4) ? 1.0 : 2.0;
    units.push_back({z, 1.0, rng.normal() + z * w, w, {}});
  }
  const Dataset d(sc, units);
  std::vector<Matrix> mass(2, Matrix::Zero(2, 2));
  mass[0](1, 1) = 1.0;
  mass[1](1, 1) = 1.0;
  const auto joint = JointStratumModel::tabular({0, 1}, {1, 2}, mass, Provenance::Oracle);
  const auto pr = fit_propensity(d);
  const auto e = pce_weighting_general(d, joint, pr, {1.0, 1.0});
  double ipw = 0;
  for (const auto& u : d.units()) {
    const double p = pr.predict(u);
    ipw += u.z == 1 ? u.y / p : -u.y / (1.0 - p);
  }
  CHECK(e.point == doctest::Approx(ipw / static_cast<double>(d.size())).epsilon(1e-12));
  CHECK(e.diagnostics["treated_weight_mean"].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(e.diagnostics["control_weight_mean"].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("general weighting with the oracle joint under principal ignorability") {
  // DGP3 joint and assignment, outcomes depending on W only.
  dgp::DgpSpec spec;
  spec.id = dgp::DgpId::Dgp3;
  spec.n = 20000;
  spec.seed = 12;
  const auto r = dgp::generate(spec);
  RngStream rng(13, 0);
  const double mu1[2] = {0.8, 0.3};
  const double mu0[2] = {0.2, 0.4};
  std::vector<ObservedUnit> units;
  for (auto u : r.data.units()) {
    const int l = u.w == 1.0 ? 0 : 1;
    u.y = rng.bernoulli(u.z == 1 ? mu1[l] : mu0[l]) ? 1.0 : 0.0;
    units.push_back(u);
  }
  const Dataset d(r.data.schema(), units);
  const auto joint = dgp::oracle_joint(spec);
  const auto pr = fit_propensity(d);
  // tau_u = sum_w P(w|U=u) (mu1(w)-mu0(w)); P(W=1)=1/2.
  const double pi[3][2] = {{0.5, 0.2}, {0.3, 0.3}, {0.2, 0.5}};
  const PrincipalStratum st[3] = {{1, 1}, {1, 0}, {0, 0}};
  for (int k = 0; k < 3; ++k) {
    const double t = (pi[k][0] * (mu1[0] - mu0[0]) + pi[k][1] * (mu1[1] - mu0[1])) / (pi[k][0] + pi[k][1]);
    const auto e = pce_weighting_general(d, joint, pr, st[k]);
    CHECK(std::abs(e.point - t) <= 0.03);
    CHECK(e.diagnostics["treated_weight_mean"].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("relabeling W categories leaves the estimate unchanged") {
  dgp::DgpSpec spec;
  spec.id = dgp::DgpId::Dgp3;
  spec.n = 3000;
  spec.seed = 2;
  const auto r = dgp::generate(spec);
  Schema sc = r.data.schema();
  sc.constant_s0 = 0.0;
  sc.w_categories = {10.0, 20.0};
  Schema sc0 = r.data.schema();
  sc0.constant_s0 = 0.0;
  std::vector<ObservedUnit> a, b;
  for (auto u : r.data.units()) {
    if (u.z == 0) u.s = 0.0;
    a.push_back(u);
    u.w = u.w == 1.0 ? 20.0 : 10.0;
    b.push_back(u);
  }
  const Dataset da(sc0, a), db(sc, b);
  const auto ea = pce_weighting_constant_s0(da, fit_principal_score_constant_s0(da), fit_propensity(da), 1.0);
  const auto eb = pce_weighting_constant_s0(db, fit_principal_score_constant_s0(db), fit_propensity(db), 1.0);
  CHECK(ea.point == doctest::Approx(eb.point).epsilon(1e-12));
}

TEST_CASE("sensitivity joints need explicit permission") {
  const auto r = dgp::generate_jobs_like(2000, 0.3, 3);
  const auto joint = joint_from_gaussian_copula(r.data, RhoSpec::constant(0.3)).with_rho(0.5, Provenance::Sensitivity);
  const auto pr = fit_propensity(r.data);
  CHECK_THROWS_AS(pce_weighting_general(r.data, joint, pr, {4.0, 4.0}), JointNotIdentified);
  WeightingOptions opt;
  opt.allow_sensitivity = true;
  const auto e = pce_weighting_general(r.data, joint, pr, {4.0, 4.0}, opt);
  CHECK(e.diagnostics["rho"].get<double>() == doctest::Approx(0.5));
  CHECK(e.diagnostics["not_identified"].get<bool>());
}
