#pragma once

#include "pce/cell_table.hpp"
#include "pce/copula.hpp"
#include "pce/dataset.hpp"
#include "pce/linalg.hpp"

#include <string>
#include <utility>
#include <vector>

namespace pce {

// b = M' x: column l of M is a distribution over the K row values given w_l,
// b[l] the observed mixture of the unknown per-row quantities x.
struct MomentSystem {
  Matrix m;                       // K x L
  Vector b;                       // L
  std::vector<double> row_labels;  // stratum values
  std::vector<double> col_labels;  // W values
  std::vector<std::string> warnings;
};

enum class OutcomeFunctional { Mean, ProbY };

struct FunctionalSpec {
  OutcomeFunctional kind = OutcomeFunctional::Mean;
  double y = 1.0;  // ProbY: target outcome value (binary Y)
};

// M[k][l] = P(S = s_k | Z=1, W = w_l); b[l] = E(Y | Z=0, W = w_l) or P(Y = y | Z=0, W = w_l).
MomentSystem build_system_constant_s0(const CellTable& t, const FunctionalSpec& f = {});
MomentSystem build_system_constant_s0(const Dataset& d, const FunctionalSpec& f = {});

struct SolveOptions {
  // Treat solutions as probabilities: clip to [0,1] and log the pre-clip values.
  bool probabilities = false;
};

struct SystemSolution {
  Vector values;  // after clipping
  Vector raw;     // before clipping
  bool clipped = false;
  RankInfo rank;
};

// Least squares solution of M' x = b. Throws RankDeficient unless rank(M) = K.
SystemSolution solve_system(const MomentSystem& sys, const SolveOptions& opt = {});

struct RankDiagnostic {
  int rank = 0;
  int k = 0;
  double condition = 0.0;
  double min_singular = 0.0;
  bool identifiable = false;
};

RankDiagnostic rank_diagnostic(const MomentSystem& sys);

// K = L = 2 closed form. theta_{sw} = P(S=s | Z=1, W=w) with w in {1, 0};
// delta_w = E(Y | Z=0, W=w). Returns (E(Y0|S1=1), E(Y0|S1=0)).
std::pair<double, double> example_two_by_two(double theta11, double theta10, double theta01,
                                             double theta00, double delta1, double delta0);

// Constant-S0 design: tau_{s1} = E(Y | Z=1, S=s1) - E(Y0 | S1 = s1).
std::vector<PceEstimate> pce_constant_s0(const CellTable& t, const SolveOptions& opt = {});
std::vector<PceEstimate> pce_constant_s0(const Dataset& d);

// Outcome means E(Y_arm | S1, S0) for every stratum with positive joint mass.
struct ArmLaws {
  int arm = 0;
  std::vector<PrincipalStratum> strata;
  std::vector<double> means;
  std::vector<double> raw;
  nlohmann::json diagnostics = nlohmann::json::object();
};

// For arm 0 and each s0 in the support, solves
//   E(Y | Z=0, S=s0, w_l) = sum_k P(S1 = s_k | S0 = s0, w_l) E(Y0 | s_k, s0);
// arm 1 is symmetric. The joint must be tabular and identified.
ArmLaws build_and_solve_general(const CellTable& t, const JointStratumModel& joint, int arm,
                                const SolveOptions& opt = {});

// Per-stratum tau = E(Y1|U) - E(Y0|U) for strata recovered in both arms.
std::vector<PceEstimate> pce_from_laws(const ArmLaws& arm1, const ArmLaws& arm0);

// Full pipeline on a dataset: both arms, probabilities clipped when Y is binary.
std::vector<PceEstimate> discrete_ai_estimate(const Dataset& d, const JointStratumModel& joint);

}  // namespace pce
