#pragma once

#include "pce/dataset.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pce::bayes {

// Hyperparameters. Normal blocks are N(0, var * I).
struct PriorSet {
  std::string name = "A";
  double beta_var = 100.0;   // outcome-model coefficients (models 1/2)
  double gamma_var = 100.0;  // intermediate-model coefficients (models 1/2)
  double dirichlet = 1.0;    // stratum probabilities pi_{.,w} (models 3/4)
  double delta_a = 1.0;      // Beta(a, a) on outcome probabilities delta_{u,z}
  double prob_a = 1.0;       // Beta(a, a) on P(W=w) and alpha_w = P(Z=1|W=w)
};

// "A", "B" (models 1/2), "beta11", "beta55" (models 3/4; Beta(1,1), Beta(0.5,0.5)).
PriorSet prior_by_name(const std::string& name);

enum class Model { M1, M2, M3, M4 };
Model parse_model(const std::string& s);
std::string model_name(Model m);

enum class StratumKernel {
  Collapsed,  // binomial split of each (Z,S,Y,W) cell count between its feasible strata
  PerUnit,    // one categorical draw per unit (reference implementation)
};

struct McmcConfig {
  std::size_t iterations = 20000;
  std::size_t burn_in = 4000;
  std::size_t chains = 4;
  std::size_t thin = 1;
  std::uint64_t seed = 0;
  PriorSet prior;
  int threads = 0;
  // s1 values at which models 1/2 record PCE draws; empty disables.
  std::vector<double> surface_grid = {-1.0, 0.0, 1.0, 2.0, 3.0};
  // false: data contribute nothing, so every block is drawn from its prior.
  bool likelihood = true;
  StratumKernel kernel = StratumKernel::Collapsed;

  std::size_t kept_per_chain() const { return (iterations - burn_in) / thin; }
  void validate() const;
};

struct PosteriorDraws {
  std::vector<std::string> names;
  // name -> per-chain post-burn-in draws
  std::map<std::string, std::vector<std::vector<double>>> draws;
  std::size_t chains = 0;
  std::size_t per_chain = 0;
  std::size_t burn_in = 0;
  std::size_t thin = 1;
  nlohmann::json metadata = nlohmann::json::object();

  const std::vector<std::vector<double>>& chains_of(const std::string& name) const;
  std::vector<double> pooled(const std::string& name) const;
};

struct ParameterSummary {
  double mean = 0.0;
  double median = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double sd = 0.0;
  double rhat = 1.0;
  bool rhat_degenerate = false;
};

ParameterSummary summarize(const PosteriorDraws& d, const std::string& name, double level = 0.95);

struct GelmanRubin {
  double value = 1.0;
  bool degenerate = false;
};

// Potential scale reduction factor. Throws InsufficientChains for < 2 chains.
GelmanRubin gelman_rubin(const PosteriorDraws& d, const std::string& name);
GelmanRubin gelman_rubin(const std::vector<std::vector<double>>& chains);

// Models 1/2: probit outcome, Normal S1 given W, constant S0.
PosteriorDraws gibbs_model12(const Dataset& d, Model model, const McmcConfig& cfg);
PosteriorDraws gibbs_model12_serial(const Dataset& d, Model model, const McmcConfig& cfg);

// Models 3/4: categorical strata given W, Bernoulli outcomes given (Z, U).
PosteriorDraws gibbs_model34(const Dataset& d, Model model, const McmcConfig& cfg);
PosteriorDraws gibbs_model34_serial(const Dataset& d, Model model, const McmcConfig& cfg);

// Dispatch on model; sets metadata["nonconvergence"] when any R-hat exceeds 1.2.
PosteriorDraws run_gibbs(const Dataset& d, Model model, const McmcConfig& cfg);

inline constexpr double kRhatWarn = 1.2;

}  // namespace pce::bayes
