#include "support.hpp"

#include "pce/bayes.hpp"
#include "pce/bootstrap.hpp"
#include "pce/dgp.hpp"
#include "pce/errors.hpp"
#include "pce/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace pce;
using namespace pce::bayes;

namespace {

McmcConfig short_config(std::size_t iterations, std::size_t burn_in, const std::string& prior, std::uint64_t seed) {
  McmcConfig cfg;
  cfg.iterations = iterations;
  cfg.burn_in = burn_in;
  cfg.chains = 4;
  cfg.seed = seed;
  cfg.prior = prior_by_name(prior);
  return cfg;
}

Dataset dgp_data(dgp::DgpId id, std::size_t n, std::uint64_t seed, const std::map<std::string, double>& params = {}) {
  dgp::DgpSpec spec;
  spec.id = id;
  spec.n = n;
  spec.seed = seed;
  spec.params = params;
  return dgp::generate(spec).data;
}

double pooled_mean(const PosteriorDraws& d, const std::string& name) { return testing::mean(d.pooled(name)); }

// Monte Carlo standard error of a pooled mean from per-chain batch means;
// five long batches per chain so autocorrelation stays within a batch.
double batch_se(const PosteriorDraws& d, const std::string& name) {
  std::vector<double> batches;
  for (const auto& c : d.chains_of(name)) {
    const std::size_t b = c.size() / 5;
    for (std::size_t k = 0; k < 5; ++k)
      batches.push_back(std::accumulate(c.begin() + static_cast<std::ptrdiff_t>(k * b),
                                        c.begin() + static_cast<std::ptrdiff_t>((k + 1) * b), 0.0) /
                        static_cast<double>(b));
  }
  const double m = testing::mean(batches);
  double v = 0;
  for (double x : batches) v += (x - m) * (x - m);
  v /= static_cast<double>(batches.size() - 1);
  return std::sqrt(v / static_cast<double>(batches.size()));
}

}  // namespace

TEST_CASE("gelman-rubin reference cases") {
  const std::vector<std::vector<double>> flat(3, std::vector<double>(100, 2.5));
  const auto g = gelman_rubin(flat);
  CHECK(g.value == 1.0);
  CHECK(g.degenerate);

  RngStream rng(1, 0);
  std::vector<std::vector<double>> same(4, std::vector<double>(5000));
  for (auto& c : same)
    for (auto& x : c) x = rng.normal();
  CHECK(gelman_rubin(same).value < 1.05);

  std::vector<std::vector<double>> apart(2, std::vector<double>(1000));
  for (std::size_t k = 0; k < 2; ++k)
    for (auto& x : apart[k]) x = 10.0 * static_cast<double>(k) + rng.normal();
  CHECK(gelman_rubin(apart).value > 2.0);

  CHECK_THROWS_AS(gelman_rubin(std::vector<std::vector<double>>(1, std::vector<double>(10, 0.0))), InsufficientChains);
}

TEST_CASE("gelman-rubin against the textbook formula") {
  RngStream rng(2, 0);
  std::vector<std::vector<double>> ch(3, std::vector<double>(200));
  for (std::size_t k = 0; k < 3; ++k)
    for (auto& x : ch[k]) x = 0.3 * static_cast<double>(k) + rng.normal();
  const double n = 200, m = 3;
  std::vector<double> means;
  double w = 0;
  for (const auto& c : ch) {
    const double mu = testing::mean(c);
    means.push_back(mu);
    double s = 0;
    for (double x : c) s += (x - mu) * (x - mu);
    w += s / (n - 1) / m;
  }
  const double grand = testing::mean(means);
  double b = 0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= n / (m - 1);
  const double want = std::sqrt(((n - 1) / n * w + b / n) / w);
  CHECK(gelman_rubin(ch).value == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("priors and models by name") {
  CHECK(prior_by_name("A").beta_var == 100.0);
  CHECK(prior_by_name("B").beta_var == 1.0);
  CHECK(prior_by_name("B").gamma_var == 100.0);
  CHECK(prior_by_name("beta11").delta_a == 1.0);
  CHECK(prior_by_name("beta55").delta_a == 0.5);
  CHECK_THROWS_AS(prior_by_name("C"), BadParams);
  CHECK(parse_model("3") == Model::M3);
  CHECK(model_name(parse_model("M4")) == "M4");
}

TEST_CASE("schedule validation and the one-draw edge case") {
  McmcConfig cfg = short_config(10, 10, "beta11", 1);
  CHECK_THROWS_AS(cfg.validate(), BadParams);
  cfg.burn_in = 9;
  const auto d = dgp_data(dgp::DgpId::Dgp3, 200, 3);
  const auto p = gibbs_model34(d, Model::M3, cfg);
  CHECK(p.per_chain == 1);
  for (const auto& name : p.names) {
    const auto& c = p.chains_of(name);
    CHECK(c.size() == 4);
    for (const auto& v : c) CHECK(v.size() == 1);
  }
  cfg.thin = 0;
  CHECK_THROWS_AS(cfg.validate(), BadParams);

  McmcConfig c12 = short_config(6, 5, "A", 2);
  c12.surface_grid = {0.0};
  const auto q = gibbs_model12(dgp_data(dgp::DgpId::Dgp2, 100, 4), Model::M2, c12);
  CHECK(q.chains_of("beta01")[0].size() == 1);
  CHECK(q.chains_of("tau[0]")[3].size() == 1);
}

TEST_CASE("thinning keeps every thin-th draw") {
  McmcConfig cfg = short_config(1000, 200, "beta11", 5);
  cfg.thin = 4;
  const auto p = gibbs_model34(dgp_data(dgp::DgpId::Dgp3, 300, 5), Model::M3, cfg);
  CHECK(p.per_chain == 200);
  CHECK(p.chains_of("tau_11")[2].size() == 200);
}

TEST_CASE("without the likelihood the sampler draws from the prior") {
  const auto d = dgp_data(dgp::DgpId::Dgp4, 500, 6);
  for (const std::string prior : {"beta11", "beta55"}) {
    McmcConfig cfg = short_config(3000, 100, prior, 7);
    cfg.likelihood = false;
    const auto p = gibbs_model34(d, Model::M4, cfg);
    auto near = [&](const std::string& name, double want) {
      const auto v = p.pooled(name);
      double m = testing::mean(v), s = 0;
      for (double x : v) s += (x - m) * (x - m);
      const double se = std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
      CHECK(std::abs(m - want) <= 3 * se);
    };
    near("p_w1", 0.5);
    near("alpha_w2", 0.5);
    near("pi_11_w1", 0.25);
    near("pi_01_w2", 0.25);
    near("delta_10_z1", 0.5);
    near("delta_01_z0", 0.5);
    near("tau_00", 0.0);
  }
  McmcConfig cfg = short_config(3000, 100, "B", 8);
  cfg.likelihood = false;
  const auto q = gibbs_model12(dgp_data(dgp::DgpId::Dgp2, 200, 8), Model::M2, cfg);
  const auto b = q.pooled("beta11");
  double m = testing::mean(b), s = 0;
  for (double x : b) s += (x - m) * (x - m);
  CHECK(std::abs(m) <= 3 * std::sqrt(s / static_cast<double>(b.size() - 1) / static_cast<double>(b.size())));
  CHECK(s / static_cast<double>(b.size() - 1) == doctest::Approx(1.0).epsilon(0.05));
  const auto g = q.pooled("gamma1");
  double gm = testing::mean(g), gs = 0;
  for (double x : g) gs += (x - gm) * (x - gm);
  CHECK(gs / static_cast<double>(g.size() - 1) == doctest::Approx(100.0).epsilon(0.05));
}

TEST_CASE("probability and variance draws stay in range") {
  const auto p = gibbs_model34(dgp_data(dgp::DgpId::Dgp4, 1000, 9), Model::M4, short_config(600, 100, "beta55", 9));
  for (const auto& name : p.names) {
    if (name.rfind("tau", 0) == 0) continue;
    for (const auto& c : p.chains_of(name))
      for (double x : c) CHECK((x >= 0.0 && x <= 1.0));
  }
  const auto q = gibbs_model12(dgp_data(dgp::DgpId::Dgp1, 300, 9), Model::M1, short_config(400, 100, "A", 9));
  for (const auto& c : q.chains_of("sigma2"))
    for (double x : c) CHECK(x > 0.0);
}

TEST_CASE("serial and parallel samplers agree exactly") {
  McmcConfig cfg = short_config(500, 100, "beta11", 10);
  const auto d3 = dgp_data(dgp::DgpId::Dgp3, 800, 10);
  const auto a = gibbs_model34_serial(d3, Model::M3, cfg);
  for (int threads : {1, 2, 4}) {
    cfg.threads = threads;
    const auto b = gibbs_model34(d3, Model::M3, cfg);
    CHECK(a.draws == b.draws);
  }
  McmcConfig c12 = short_config(300, 50, "A", 11);
  const auto d2 = dgp_data(dgp::DgpId::Dgp2, 300, 11);
  c12.threads = 3;
  CHECK(gibbs_model12_serial(d2, Model::M2, c12).draws == gibbs_model12(d2, Model::M2, c12).draws);
}

TEST_CASE("collapsed and per-unit stratum kernels target the same posterior") {
  const auto d = dgp_data(dgp::DgpId::Dgp3, 1000, 12);
  McmcConfig cfg = short_config(20000, 1000, "beta11", 12);
  const auto a = gibbs_model34(d, Model::M3, cfg);
  cfg.kernel = StratumKernel::PerUnit;
  cfg.seed = 13;
  const auto b = gibbs_model34(d, Model::M3, cfg);
  CHECK(a.metadata["kernel"] == "collapsed");
  CHECK(b.metadata["kernel"] == "per-unit");
  for (const std::string name : {"tau_11", "tau_10", "tau_00", "pi_10_w1", "delta_00_z0"}) {
    const double se = std::hypot(batch_se(a, name), batch_se(b, name));
    INFO(name);
    CHECK(std::abs(pooled_mean(a, name) - pooled_mean(b, name)) <= 4 * se);
  }
}

TEST_CASE("unit order does not change the posterior") {
  const auto d = dgp_data(dgp::DgpId::Dgp3, 2000, 14);
  std::vector<ObservedUnit> units(d.units().begin(), d.units().end());
  std::reverse(units.begin(), units.end());
  std::rotate(units.begin(), units.begin() + 700, units.end());
  const Dataset perm(d.schema(), units);
  McmcConfig cfg = short_config(8000, 1000, "beta11", 15);
  cfg.kernel = StratumKernel::PerUnit;
  const auto a = gibbs_model34(d, Model::M3, cfg);
  const auto b = gibbs_model34(perm, Model::M3, cfg);
  for (const std::string name : {"tau_11", "tau_10", "tau_00"}) {
    const double se = std::hypot(batch_se(a, name), batch_se(b, name));
    CHECK(std::abs(pooled_mean(a, name) - pooled_mean(b, name)) <= 3 * se);
  }
}

TEST_CASE("null outcome model gives effects near zero") {
  std::map<std::string, double> null;
  for (const std::string u : {"11", "10", "00"})
    for (const std::string z : {"z1", "z0"}) null["delta_" + u + "_" + z] = 0.5;
  const auto p = gibbs_model34(dgp_data(dgp::DgpId::Dgp3, 20000, 16, null), Model::M3, short_config(3000, 500, "beta11", 16));
  for (const std::string name : {"tau_11", "tau_10", "tau_00"}) {
    const auto s = summarize(p, name);
    CHECK(std::abs(s.mean) < 0.05);
    CHECK((s.lower < 0.0 && s.upper > 0.0));
  }
}

TEST_CASE("M3 on DGP3 covers the truth") {
  const auto p = run_gibbs(dgp_data(dgp::DgpId::Dgp3, 10000, 17), Model::M3, short_config(4000, 1000, "beta11", 17));
  const double truth[3] = {0.3, 0.4, 0.5};
  const char* names[3] = {"tau_11", "tau_10", "tau_00"};
  for (int k = 0; k < 3; ++k) {
    const auto s = summarize(p, names[k]);
    CHECK(s.lower <= truth[k]);
    CHECK(s.upper >= truth[k]);
    CHECK(s.rhat < 1.1);
  }
  CHECK_FALSE(p.metadata.contains("nonconvergence"));
}

TEST_CASE("M2 on DGP2 covers the outcome coefficients") {
  const auto d = dgp_data(dgp::DgpId::Dgp2, 1000, 18);
  for (const std::string prior : {"A", "B"}) {
    const auto p = run_gibbs(d, Model::M2, short_config(3000, 1000, prior, 18));
    const std::pair<const char*, double> truth[] = {{"beta01", -0.5}, {"beta02", 0.5}, {"beta11", 1.0}, {"beta12", 1.5}};
    for (const auto& [name, v] : truth) {
      const auto s = summarize(p, name);
      CHECK(s.lower <= v);
      CHECK(s.upper >= v);
    }
  }
}

TEST_CASE("summaries and metadata") {
  McmcConfig cfg = short_config(400, 100, "beta55", 19);
  const auto p = run_gibbs(dgp_data(dgp::DgpId::Dgp3, 500, 19), Model::M4, cfg);
  CHECK(p.metadata["model"] == "M4");
  CHECK(p.metadata["prior"] == "beta55");
  CHECK(p.metadata.contains("tau_01"));
  CHECK(std::find(p.names.begin(), p.names.end(), "tau_01") != p.names.end());
  const auto s = summarize(p, "tau_11");
  CHECK(s.lower <= s.median);
  CHECK(s.median <= s.upper);
  auto v = p.pooled("tau_11");
  std::sort(v.begin(), v.end());
  CHECK(s.median == doctest::Approx(sorted_quantile(v, 0.5)));
  CHECK(s.lower == doctest::Approx(sorted_quantile(v, 0.025)));

  cfg.chains = 1;
  const auto one = gibbs_model34(dgp_data(dgp::DgpId::Dgp3, 500, 19), Model::M3, cfg);
  CHECK_THROWS_AS(gelman_rubin(one, "tau_11"), InsufficientChains);
}
