#include "pce/bayes.hpp"

#include "pce/bootstrap.hpp"
#include "pce/errors.hpp"
#include "pce/io.hpp"
#include "pce/linalg.hpp"
#include "pce/normal.hpp"
#include "pce/rng.hpp"

#include <omp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <functional>
#include <sstream>

namespace pce::bayes {

PriorSet prior_by_name(const std::string& name) {
  PriorSet p;
  p.name = name;
  if (name == "A") return p;
  if (name == "B") {
    // Only the outcome coefficients shrink; the gamma block keeps its prior-A variance.
    p.beta_var = 1.0;
    return p;
  }
  if (name == "beta11") return p;
  if (name == "beta55") {
    p.delta_a = 0.5;
    return p;
  }
  throw BadParams("unknown prior '" + name + "' (expected A, B, beta11 or beta55)");
}

Model parse_model(const std::string& s) {
  if (s == "1" || s == "M1") return Model::M1;
  if (s == "2" || s == "M2") return Model::M2;
  if (s == "3" || s == "M3") return Model::M3;
  if (s == "4" || s == "M4") return Model::M4;
  throw BadParams("unknown model '" + s + "'");
}

std::string model_name(Model m) {
  switch (m) {
    case Model::M1: return "M1";
    case Model::M2: return "M2";
    case Model::M3: return "M3";
    case Model::M4: return "M4";
  }
  return "?";
}

void McmcConfig::validate() const {
  if (iterations == 0) throw BadParams("iterations must be positive");
  if (burn_in >= iterations) throw BadParams("burn-in must be smaller than the iteration count");
  if (chains == 0) throw BadParams("at least one chain is required");
  if (thin == 0) throw BadParams("thin must be positive");
  if (kept_per_chain() == 0) throw BadParams("schedule keeps no draws");
  if (!(prior.beta_var > 0.0) || !(prior.gamma_var > 0.0)) throw BadParams("prior variances must be positive");
  if (!(prior.dirichlet > 0.0) || !(prior.delta_a > 0.0) || !(prior.prob_a > 0.0))
    throw BadParams("Dirichlet/Beta hyperparameters must be positive");
}

const std::vector<std::vector<double>>& PosteriorDraws::chains_of(const std::string& name) const {
  const auto it = draws.find(name);
  if (it == draws.end()) throw InputError("parameter", "no draws for parameter '" + name + "'");
  return it->second;
}

std::vector<double> PosteriorDraws::pooled(const std::string& name) const {
  std::vector<double> out;
  for (const auto& c : chains_of(name)) out.insert(out.end(), c.begin(), c.end());
  return out;
}

GelmanRubin gelman_rubin(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw InsufficientChains("Gelman-Rubin needs at least 2 chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw BadParams("chains differ in length");
  if (n < 2) return {1.0, true};
  const auto m = static_cast<double>(chains.size());
  const auto nn = static_cast<double>(n);
  std::vector<double> means;
  double within = 0.0;
  for (const auto& c : chains) {
    double mean = 0.0;
    for (double v : c) mean += v;
    mean /= nn;
    double ss = 0.0;
    for (double v : c) ss += (v - mean) * (v - mean);
    within += ss / (nn - 1.0);
    means.push_back(mean);
  }
  within /= m;
  double grand = 0.0;
  for (double v : means) grand += v;
  grand /= m;
  double between = 0.0;
  for (double v : means) between += (v - grand) * (v - grand);
  between *= nn / (m - 1.0);
  if (!(within > 0.0)) {
    if (between > 0.0) return {INFINITY, true};
    return {1.0, true};
  }
  const double vhat = (nn - 1.0) / nn * within + between / nn;
  return {std::sqrt(vhat / within), false};
}

GelmanRubin gelman_rubin(const PosteriorDraws& d, const std::string& name) {
  return gelman_rubin(d.chains_of(name));
}

ParameterSummary summarize(const PosteriorDraws& d, const std::string& name, double level) {
  std::vector<double> v = d.pooled(name);
  if (v.empty()) throw InputError("parameter", "no draws for '" + name + "'");
  std::sort(v.begin(), v.end());
  ParameterSummary s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  s.median = sorted_quantile(v, 0.5);
  s.lower = sorted_quantile(v, (1.0 - level) / 2.0);
  s.upper = sorted_quantile(v, 1.0 - (1.0 - level) / 2.0);
  if (d.chains >= 2) {
    const GelmanRubin gr = gelman_rubin(d, name);
    s.rhat = gr.value;
    s.rhat_degenerate = gr.degenerate;
  }
  return s;
}

namespace {

// One chain's kept draws, parameter-major.
struct ChainOutput {
  std::vector<std::vector<double>> values;
};

class Recorder {
 public:
  Recorder(std::size_t params, const McmcConfig& cfg) : cfg_(cfg), out_{std::vector<std::vector<double>>(params)} {
    for (auto& v : out_.values) v.reserve(cfg.kept_per_chain());
  }
  bool keep(std::size_t it) const { return it >= cfg_.burn_in && (it - cfg_.burn_in + 1) % cfg_.thin == 0; }
  void push(const std::vector<double>& row) {
    for (std::size_t p = 0; p < row.size(); ++p) out_.values[p].push_back(row[p]);
  }
  ChainOutput take() { return std::move(out_); }

 private:
  const McmcConfig& cfg_;
  ChainOutput out_;
};

using ChainFn = std::function<ChainOutput(std::size_t chain)>;

std::vector<ChainOutput> run_chains(const McmcConfig& cfg, const ChainFn& fn, bool parallel) {
  std::vector<ChainOutput> out(cfg.chains);
  std::vector<std::exception_ptr> errors(cfg.chains);
  if (parallel) {
    const int threads = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
    const auto n = static_cast<std::int64_t>(cfg.chains);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::int64_t c = 0; c < n; ++c) {
      try {
        out[static_cast<std::size_t>(c)] = fn(static_cast<std::size_t>(c));
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    }
  } else {
    for (std::size_t c = 0; c < cfg.chains; ++c) out[c] = fn(c);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

PosteriorDraws assemble(const std::vector<std::string>& names, std::vector<ChainOutput> chains, const McmcConfig& cfg) {
  PosteriorDraws d;
  d.names = names;
  d.chains = cfg.chains;
  d.per_chain = cfg.kept_per_chain();
  d.burn_in = cfg.burn_in;
  d.thin = cfg.thin;
  for (std::size_t p = 0; p < names.size(); ++p) {
    auto& slot = d.draws[names[p]];
    for (auto& c : chains) slot.push_back(std::move(c.values[p]));
  }
  d.metadata["iterations"] = cfg.iterations;
  d.metadata["burn_in"] = cfg.burn_in;
  d.metadata["chains"] = cfg.chains;
  d.metadata["thin"] = cfg.thin;
  d.metadata["seed"] = cfg.seed;
  d.metadata["prior"] = cfg.prior.name;
  d.metadata["likelihood"] = cfg.likelihood;
  return d;
}

// Draw from N(P^{-1} b, P^{-1}) given the precision P.
Vector draw_gaussian(const Matrix& precision, const Vector& b, RngStream& rng) {
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success) throw NonConvergence("posterior precision is not positive definite", 0);
  const Vector mean = llt.solve(b);
  Vector e(b.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = rng.normal();
  // L L' = P, so L'^{-1} e has covariance P^{-1}.
  return mean + llt.matrixU().solve(e);
}

double inv_gamma(double shape, double scale, RngStream& rng) { return scale / rng.gamma(shape); }

// ---------------------------------------------------------------- models 1/2

struct Data12 {
  std::vector<int> z;
  std::vector<double> s;  // observed S1 for treated units
  std::vector<double> y;
  std::vector<double> w;
  int g_terms = 2;
};

Data12 prepare12(const Dataset& d, Model model) {
  const Schema& sc = d.schema();
  if (sc.y_kind != OutcomeKind::Binary) throw InputError("schema", "models 1/2 need a binary outcome");
  if (sc.s_kind != VarKind::Continuous) throw InputError("schema", "models 1/2 need a continuous intermediate");
  if (!sc.constant_s0) throw InputError("schema", "models 1/2 need a constant control intermediate");
  d.require_both_arms();
  Data12 out;
  out.g_terms = model == Model::M2 ? 3 : 2;
  for (const auto& u : d.units()) {
    out.z.push_back(u.z);
    out.s.push_back(u.s);
    out.y.push_back(u.y);
    out.w.push_back(u.w);
  }
  return out;
}

std::vector<std::string> names12(const Data12& data, const McmcConfig& cfg) {
  std::vector<std::string> n = {"beta00", "beta01", "beta02", "beta10", "beta11", "beta12", "gamma0", "gamma1"};
  if (data.g_terms == 3) n.emplace_back("gamma2");
  n.emplace_back("sigma2");
  for (double s : cfg.surface_grid) n.push_back("tau[" + io::format_double(s) + "]");
  return n;
}

double g_mean(const Vector& gamma, double w) {
  double m = gamma(0) + gamma(1) * w;
  if (gamma.size() == 3) m += gamma(2) * w * w;
  return m;
}

ChainOutput chain12(const Data12& data, const McmcConfig& cfg, std::size_t chain) {
  RngStream rng(cfg.seed, chain);
  const std::size_t n = data.z.size();
  const int q = data.g_terms;

  // Overdispersed start: coefficient blocks from N(0, I), sigma2 from 1/Gamma(2, 1).
  std::array<Vector, 2> beta = {Vector(3), Vector(3)};
  for (auto& b : beta)
    for (Eigen::Index j = 0; j < 3; ++j) b(j) = rng.normal();
  Vector gamma(q);
  for (Eigen::Index j = 0; j < q; ++j) gamma(j) = rng.normal();
  double sigma2 = 1.0 / rng.gamma(2.0);

  std::vector<double> s1 = data.s;
  for (std::size_t i = 0; i < n; ++i)
    if (data.z[i] == 0) s1[i] = g_mean(gamma, data.w[i]) + std::sqrt(sigma2) * rng.normal();
  std::vector<double> ystar(n, 0.0);

  Recorder rec(names12(data, cfg).size(), cfg);
  std::vector<double> row;
  const double beta_prec = 1.0 / cfg.prior.beta_var;
  const double gamma_prec = 1.0 / cfg.prior.gamma_var;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    if (cfg.likelihood) {
      // Latent utilities.
      for (std::size_t i = 0; i < n; ++i) {
        const Vector& b = beta[static_cast<std::size_t>(data.z[i])];
        const double eta = b(0) + b(1) * s1[i] + b(2) * data.w[i];
        ystar[i] = rng.truncated_unit_normal(eta, data.y[i] > 0.5);
      }
      // Missing S1 of controls: Normal prior from the S1 | W model times the
      // Normal likelihood of the control utility.
      const Vector& b0 = beta[0];
      const double prec = 1.0 / sigma2 + b0(1) * b0(1);
      for (std::size_t i = 0; i < n; ++i) {
        if (data.z[i] == 1) continue;
        const double m = g_mean(gamma, data.w[i]);
        const double mean = (m / sigma2 + b0(1) * (ystar[i] - b0(0) - b0(2) * data.w[i])) / prec;
        s1[i] = mean + rng.normal() / std::sqrt(prec);
      }
      // Outcome coefficients per arm.
      for (int z = 0; z <= 1; ++z) {
        Matrix xtx = Matrix::Identity(3, 3) * beta_prec;
        Vector xty = Vector::Zero(3);
        for (std::size_t i = 0; i < n; ++i) {
          if (data.z[i] != z) continue;
          const double x[3] = {1.0, s1[i], data.w[i]};
          for (int a = 0; a < 3; ++a) {
            xty(a) += x[a] * ystar[i];
            for (int c = 0; c < 3; ++c) xtx(a, c) += x[a] * x[c];
          }
        }
        beta[static_cast<std::size_t>(z)] = draw_gaussian(xtx, xty, rng);
      }
      // S1 | W coefficients and variance from all (observed + imputed) S1.
      Matrix gtg = Matrix::Identity(q, q) * gamma_prec;
      Vector gts = Vector::Zero(q);
      for (std::size_t i = 0; i < n; ++i) {
        const double g[3] = {1.0, data.w[i], data.w[i] * data.w[i]};
        for (int a = 0; a < q; ++a) {
          gts(a) += g[a] * s1[i] / sigma2;
          for (int c = 0; c < q; ++c) gtg(a, c) += g[a] * g[c] / sigma2;
        }
      }
      gamma = draw_gaussian(gtg, gts, rng);
      double ssr = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = s1[i] - g_mean(gamma, data.w[i]);
        ssr += e * e;
      }
      sigma2 = inv_gamma(static_cast<double>(n) / 2.0, ssr / 2.0, rng);
    } else {
      for (auto& b : beta)
        for (Eigen::Index j = 0; j < 3; ++j) b(j) = std::sqrt(cfg.prior.beta_var) * rng.normal();
      for (Eigen::Index j = 0; j < q; ++j) gamma(j) = std::sqrt(cfg.prior.gamma_var) * rng.normal();
    }

    if (!rec.keep(it)) continue;
    row.clear();
    for (int z = 0; z <= 1; ++z)
      for (Eigen::Index j = 0; j < 3; ++j) row.push_back(beta[static_cast<std::size_t>(z)](j));
    for (Eigen::Index j = 0; j < q; ++j) row.push_back(gamma(j));
    row.push_back(sigma2);
    // PCE surface: average over the empirical W reweighted by N(s1; g(W), sigma2).
    const double sd = std::sqrt(sigma2);
    for (double s : cfg.surface_grid) {
      double num = 0.0;
      double den = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double k = std_normal_pdf((s - g_mean(gamma, data.w[i])) / sd);
        const double d1 = std_normal_cdf(beta[1](0) + beta[1](1) * s + beta[1](2) * data.w[i]);
        const double d0 = std_normal_cdf(beta[0](0) + beta[0](1) * s + beta[0](2) * data.w[i]);
        num += k * (d1 - d0);
        den += k;
      }
      row.push_back(den > 0.0 ? num / den : NAN);
    }
    rec.push(row);
  }
  return rec.take();
}

PosteriorDraws model12(const Dataset& d, Model model, const McmcConfig& cfg, bool parallel) {
  if (model != Model::M1 && model != Model::M2) throw BadParams("gibbs_model12 runs models 1 and 2");
  cfg.validate();
  const Data12 data = prepare12(d, model);
  auto chains = run_chains(cfg, [&](std::size_t c) { return chain12(data, cfg, c); }, parallel);
  PosteriorDraws out = assemble(names12(data, cfg), std::move(chains), cfg);
  out.metadata["model"] = model_name(model);
  out.metadata["surface_grid"] = cfg.surface_grid;
  out.metadata["beta_prior_variance"] = cfg.prior.beta_var;
  out.metadata["gamma_prior_variance"] = cfg.prior.gamma_var;
  return out;
}

// ---------------------------------------------------------------- models 3/4

// Strata in index order (1,1), (1,0), (0,0), (0,1).
constexpr std::array<std::array<int, 2>, 4> kStrata = {{{1, 1}, {1, 0}, {0, 0}, {0, 1}}};
constexpr std::array<const char*, 4> kStratumLabel = {"11", "10", "00", "01"};

struct Data34 {
  int strata = 3;
  int levels = 2;
  // Cell counts indexed [z][s][y][l].
  std::vector<double> count;
  // Per-unit view for the reference kernel.
  std::vector<int> z, s, y, l;
  std::size_t cell(int zz, int ss, int yy, int ll) const {
    return ((static_cast<std::size_t>(zz) * 2 + static_cast<std::size_t>(ss)) * 2 + static_cast<std::size_t>(yy)) *
               static_cast<std::size_t>(levels) +
           static_cast<std::size_t>(ll);
  }
};

Data34 prepare34(const Dataset& d, Model model) {
  const Schema& sc = d.schema();
  if (sc.y_kind != OutcomeKind::Binary) throw InputError("schema", "models 3/4 need a binary outcome");
  if (sc.s_kind != VarKind::Discrete || sc.s_categories != std::vector<double>{0.0, 1.0})
    throw InputError("schema", "models 3/4 need a binary intermediate with categories 0,1");
  if (sc.w_kind != VarKind::Discrete) throw InputError("schema", "models 3/4 need a discrete W");
  d.require_both_arms();
  Data34 out;
  out.strata = model == Model::M4 ? 4 : 3;
  out.levels = sc.w_levels();
  out.count.assign(8 * static_cast<std::size_t>(out.levels), 0.0);
  for (const auto& u : d.units()) {
    const int s = u.s > 0.5 ? 1 : 0;
    const int y = u.y > 0.5 ? 1 : 0;
    const int l = d.w_index(u.w);
    out.count[out.cell(u.z, s, y, l)] += 1.0;
    out.z.push_back(u.z);
    out.s.push_back(s);
    out.y.push_back(y);
    out.l.push_back(l);
  }
  return out;
}

std::vector<std::string> names34(const Data34& data) {
  std::vector<std::string> n;
  for (int l = 0; l < data.levels; ++l) n.push_back("p_w" + std::to_string(l + 1));
  for (int l = 0; l < data.levels; ++l) n.push_back("alpha_w" + std::to_string(l + 1));
  for (int l = 0; l < data.levels; ++l)
    for (int u = 0; u < data.strata; ++u) n.push_back(std::string("pi_") + kStratumLabel[u] + "_w" + std::to_string(l + 1));
  for (int u = 0; u < data.strata; ++u)
    for (int z = 1; z >= 0; --z) n.push_back(std::string("delta_") + kStratumLabel[u] + "_z" + std::to_string(z));
  for (int u = 0; u < data.strata; ++u) n.push_back(std::string("tau_") + kStratumLabel[u]);
  return n;
}

std::vector<double> draw_dirichlet(const std::vector<double>& a, RngStream& rng) {
  std::vector<double> g(a.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    g[k] = rng.gamma(a[k]);
    sum += g[k];
  }
  if (!(sum > 0.0)) {
    // All gamma draws underflowed (tiny shapes): fall back to a uniform index.
    std::fill(g.begin(), g.end(), 0.0);
    g[rng.uniform_index(g.size())] = 1.0;
    return g;
  }
  for (double& v : g) v /= sum;
  return g;
}

// Strata compatible with an observed (z, s).
std::vector<int> feasible(int strata, int z, int s) {
  std::vector<int> out;
  for (int u = 0; u < strata; ++u)
    if (kStrata[static_cast<std::size_t>(u)][z == 1 ? 0 : 1] == s) out.push_back(u);
  return out;
}

ChainOutput chain34(const Data34& data, const McmcConfig& cfg, std::size_t chain) {
  RngStream rng(cfg.seed, chain);
  const int ns = data.strata;
  const int nl = data.levels;
  const PriorSet& pr = cfg.prior;

  // Overdispersed start from the priors.
  std::vector<double> pw = draw_dirichlet(std::vector<double>(static_cast<std::size_t>(nl), pr.prob_a), rng);
  std::vector<double> alpha(static_cast<std::size_t>(nl));
  for (auto& a : alpha) a = rng.beta(pr.prob_a, pr.prob_a);
  std::vector<std::vector<double>> pi(static_cast<std::size_t>(nl));
  for (auto& p : pi) p = draw_dirichlet(std::vector<double>(static_cast<std::size_t>(ns), pr.dirichlet), rng);
  // delta[u][z]
  std::vector<std::array<double, 2>> delta(static_cast<std::size_t>(ns));
  for (auto& dd : delta)
    for (double& v : dd) v = rng.beta(pr.delta_a, pr.delta_a);

  std::array<std::vector<int>, 2> feas_s0 = {feasible(ns, 0, 0), feasible(ns, 0, 1)};
  std::array<std::vector<int>, 2> feas_s1 = {feasible(ns, 1, 0), feasible(ns, 1, 1)};
  auto feas = [&](int z, int s) -> const std::vector<int>& { return z == 1 ? feas_s1[static_cast<std::size_t>(s)] : feas_s0[static_cast<std::size_t>(s)]; };

  Recorder rec(names34(data).size(), cfg);
  std::vector<double> row;
  // n_u[l][u], success/failure counts per (u, z).
  std::vector<std::vector<double>> nu(static_cast<std::size_t>(nl), std::vector<double>(static_cast<std::size_t>(ns)));
  std::vector<std::array<double, 2>> ys(static_cast<std::size_t>(ns)), yf(static_cast<std::size_t>(ns));
  std::vector<double> wcount(static_cast<std::size_t>(nl)), ztreated(static_cast<std::size_t>(nl));
  std::vector<double> prob;

  for (int l = 0; l < nl; ++l) {
    for (int zz = 0; zz <= 1; ++zz)
      for (int ss = 0; ss <= 1; ++ss)
        for (int yy = 0; yy <= 1; ++yy) {
          const double c = data.count[data.cell(zz, ss, yy, l)];
          wcount[static_cast<std::size_t>(l)] += c;
          if (zz == 1) ztreated[static_cast<std::size_t>(l)] += c;
        }
  }

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (auto& v : nu) std::fill(v.begin(), v.end(), 0.0);
    for (auto& a : ys) a = {0.0, 0.0};
    for (auto& a : yf) a = {0.0, 0.0};
    if (cfg.likelihood) {
      auto weight = [&](int u, int z, int y, int l) {
        const double d = delta[static_cast<std::size_t>(u)][static_cast<std::size_t>(z)];
        return pi[static_cast<std::size_t>(l)][static_cast<std::size_t>(u)] * (y == 1 ? d : 1.0 - d);
      };
      auto assign = [&](int u, int z, int y, int l, double k) {
        nu[static_cast<std::size_t>(l)][static_cast<std::size_t>(u)] += k;
        (y == 1 ? ys : yf)[static_cast<std::size_t>(u)][static_cast<std::size_t>(z)] += k;
      };
      if (cfg.kernel == StratumKernel::Collapsed) {
        // Units in a (z,s,y,w) cell share one full conditional, and every cell
        // has at most two feasible strata, so the per-unit draws sum to a binomial.
        for (int l = 0; l < nl; ++l)
          for (int zz = 0; zz <= 1; ++zz)
            for (int ss = 0; ss <= 1; ++ss)
              for (int yy = 0; yy <= 1; ++yy) {
                const double c = data.count[data.cell(zz, ss, yy, l)];
                if (c == 0.0) continue;
                const auto& f = feas(zz, ss);
                if (f.size() == 1) {
                  assign(f[0], zz, yy, l, c);
                  continue;
                }
                const double a = weight(f[0], zz, yy, l);
                const double b = weight(f[1], zz, yy, l);
                const double p = a + b > 0.0 ? a / (a + b) : 0.5;
                const auto k = static_cast<double>(rng.binomial(static_cast<std::int64_t>(c), p));
                assign(f[0], zz, yy, l, k);
                assign(f[1], zz, yy, l, c - k);
              }
      } else {
        for (std::size_t i = 0; i < data.z.size(); ++i) {
          const auto& f = feas(data.z[i], data.s[i]);
          prob.assign(f.size(), 0.0);
          for (std::size_t k = 0; k < f.size(); ++k) prob[k] = weight(f[k], data.z[i], data.y[i], data.l[i]);
          const int u = f.size() == 1 ? f[0] : f[rng.categorical(prob)];
          assign(u, data.z[i], data.y[i], data.l[i], 1.0);
        }
      }
    }
    // Conjugate updates.
    std::vector<double> a(static_cast<std::size_t>(nl));
    for (int l = 0; l < nl; ++l)
      a[static_cast<std::size_t>(l)] = pr.prob_a + (cfg.likelihood ? wcount[static_cast<std::size_t>(l)] : 0.0);
    pw = draw_dirichlet(a, rng);
    for (int l = 0; l < nl; ++l) {
      const double t = cfg.likelihood ? ztreated[static_cast<std::size_t>(l)] : 0.0;
      const double c = cfg.likelihood ? wcount[static_cast<std::size_t>(l)] - t : 0.0;
      alpha[static_cast<std::size_t>(l)] = rng.beta(pr.prob_a + t, pr.prob_a + c);
      std::vector<double> da(static_cast<std::size_t>(ns));
      for (int u = 0; u < ns; ++u) da[static_cast<std::size_t>(u)] = pr.dirichlet + nu[static_cast<std::size_t>(l)][static_cast<std::size_t>(u)];
      pi[static_cast<std::size_t>(l)] = draw_dirichlet(da, rng);
    }
    for (int u = 0; u < ns; ++u)
      for (int z = 0; z <= 1; ++z)
        delta[static_cast<std::size_t>(u)][static_cast<std::size_t>(z)] =
            rng.beta(pr.delta_a + ys[static_cast<std::size_t>(u)][static_cast<std::size_t>(z)],
                     pr.delta_a + yf[static_cast<std::size_t>(u)][static_cast<std::size_t>(z)]);

    if (!rec.keep(it)) continue;
    row.clear();
    row.insert(row.end(), pw.begin(), pw.end());
    row.insert(row.end(), alpha.begin(), alpha.end());
    for (const auto& p : pi) row.insert(row.end(), p.begin(), p.end());
    for (int u = 0; u < ns; ++u) {
      row.push_back(delta[static_cast<std::size_t>(u)][1]);
      row.push_back(delta[static_cast<std::size_t>(u)][0]);
    }
    for (int u = 0; u < ns; ++u) row.push_back(delta[static_cast<std::size_t>(u)][1] - delta[static_cast<std::size_t>(u)][0]);
    rec.push(row);
  }
  return rec.take();
}

PosteriorDraws model34(const Dataset& d, Model model, const McmcConfig& cfg, bool parallel) {
  if (model != Model::M3 && model != Model::M4) throw BadParams("gibbs_model34 runs models 3 and 4");
  cfg.validate();
  const Data34 data = prepare34(d, model);
  auto chains = run_chains(cfg, [&](std::size_t c) { return chain34(data, cfg, c); }, parallel);
  PosteriorDraws out = assemble(names34(data), std::move(chains), cfg);
  out.metadata["model"] = model_name(model);
  out.metadata["delta_prior"] = "Beta(" + io::format_double(cfg.prior.delta_a) + "," + io::format_double(cfg.prior.delta_a) + ")";
  out.metadata["kernel"] = cfg.kernel == StratumKernel::Collapsed ? "collapsed" : "per-unit";
  if (model == Model::M4) {
    // Under monotone data the (0,1) stratum is empty and its effect has no true value.
    out.metadata["tau_01"] = "reported but not well-defined when the data satisfy monotonicity";
  }
  return out;
}

}  // namespace

PosteriorDraws gibbs_model12(const Dataset& d, Model model, const McmcConfig& cfg) {
  return model12(d, model, cfg, true);
}
PosteriorDraws gibbs_model12_serial(const Dataset& d, Model model, const McmcConfig& cfg) {
  return model12(d, model, cfg, false);
}
PosteriorDraws gibbs_model34(const Dataset& d, Model model, const McmcConfig& cfg) {
  return model34(d, model, cfg, true);
}
PosteriorDraws gibbs_model34_serial(const Dataset& d, Model model, const McmcConfig& cfg) {
  return model34(d, model, cfg, false);
}

PosteriorDraws run_gibbs(const Dataset& d, Model model, const McmcConfig& cfg) {
  PosteriorDraws out = (model == Model::M1 || model == Model::M2) ? gibbs_model12(d, model, cfg)
                                                                  : gibbs_model34(d, model, cfg);
  if (out.chains >= 2) {
    nlohmann::json flagged = nlohmann::json::array();
    for (const auto& name : out.names) {
      const GelmanRubin gr = gelman_rubin(out, name);
      if (gr.value > kRhatWarn) flagged.push_back({{"parameter", name}, {"rhat", gr.value}});
    }
    if (!flagged.empty()) out.metadata["nonconvergence"] = flagged;
  }
  return out;
}

}  // namespace pce::bayes
