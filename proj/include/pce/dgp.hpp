#pragma once

#include "pce/cell_table.hpp"
#include "pce/copula.hpp"
#include "pce/dataset.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pce::dgp {

enum class DgpId { Dgp1, Dgp2, Dgp3, Dgp4, JobsLike };

DgpId parse_dgp_id(const std::string& s);
std::string dgp_name(DgpId id);

struct DgpSpec {
  DgpId id = DgpId::Dgp3;
  std::size_t n = 1000;
  // Overrides of the default parameters (see default_params).
  std::map<std::string, double> params;
  std::uint64_t seed = 0;
};

// Default parameters of a design, keyed by name.
std::map<std::string, double> default_params(DgpId id);

struct DgpResult {
  Dataset data;
  // Latent (S1, S0) per unit. Oracle use only; never part of the dataset file.
  std::vector<PrincipalStratum> latent;
  nlohmann::json truth;
};

// Draws n units from the design. Throws BadParams on invalid parameters.
DgpResult generate(const DgpSpec& spec);

// Job-search-like design: 7-level W, bivariate Normal (S1,S0)|W with
// correlation rho_true, linear potential outcomes with Normal noise.
DgpResult generate_jobs_like(std::size_t n, double rho_true, std::uint64_t seed,
                             std::map<std::string, double> overrides = {});

// Exact observed-data law of DGP3/DGP4 (probability masses, not counts).
CellTable population_table(const DgpSpec& spec);

// The generating P(U | W) of DGP3/DGP4 as a tabular joint with oracle provenance.
JointStratumModel oracle_joint(const DgpSpec& spec);

}  // namespace pce::dgp
