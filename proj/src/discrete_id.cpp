#include "pce/discrete_id.hpp"

#include "pce/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pce {

namespace {

// Joint cells below this mass are treated as empty strata.
constexpr double kMassFloor = 1e-14;

double arm_functional(const CellTable& t, int z, int l, const FunctionalSpec& f) {
  const double mean = t.mean_y_arm(z, l);
  if (f.kind == OutcomeFunctional::Mean) return mean;
  return f.y == 1.0 ? mean : 1.0 - mean;
}

int index_of(const std::vector<double>& v, double x) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] == x) return static_cast<int>(i);
  return -1;
}

void clip(SystemSolution& s) {
  s.values = s.raw;
  for (Eigen::Index i = 0; i < s.values.size(); ++i) {
    const double v = std::clamp(s.raw(i), 0.0, 1.0);
    if (v != s.raw(i)) s.clipped = true;
    s.values(i) = v;
  }
}

}  // namespace

MomentSystem build_system_constant_s0(const CellTable& t, const FunctionalSpec& f) {
  MomentSystem sys;
  const int k = t.s_levels();
  const int l = t.w_levels();
  sys.m = Matrix(k, l);
  sys.b = Vector(l);
  for (int c = 0; c < l; ++c) {
    for (int r = 0; r < k; ++r) sys.m(r, c) = t.p_s(1, r, c);
    sys.b(c) = arm_functional(t, 0, c, f);
  }
  sys.row_labels = t.s_values();
  sys.col_labels = t.w_values();
  // Under a constant S0 every control unit sits at one S value.
  int occupied = 0;
  for (int r = 0; r < k; ++r) {
    double m = 0.0;
    for (int c = 0; c < l; ++c) m += t.mass(0, r, c);
    if (m > 0.0) ++occupied;
  }
  if (occupied > 1) sys.warnings.emplace_back("control arm has more than one S value; constant-S0 assumption does not hold");
  return sys;
}

MomentSystem build_system_constant_s0(const Dataset& d, const FunctionalSpec& f) {
  auto sys = build_system_constant_s0(CellTable::from_dataset(d), f);
  if (!d.schema().constant_s0) sys.warnings.emplace_back("schema does not declare a constant S0");
  return sys;
}

RankDiagnostic rank_diagnostic(const MomentSystem& sys) {
  const RankInfo r = numerical_rank(sys.m.transpose());
  RankDiagnostic out;
  out.rank = r.rank;
  out.k = static_cast<int>(sys.m.rows());
  out.condition = r.condition;
  out.min_singular = r.min_singular;
  out.identifiable = r.rank == out.k;
  return out;
}

SystemSolution solve_system(const MomentSystem& sys, const SolveOptions& opt) {
  SystemSolution s;
  s.rank = numerical_rank(sys.m.transpose());
  s.raw = solve_least_squares(sys.m.transpose(), sys.b);
  if (opt.probabilities) {
    clip(s);
  } else {
    s.values = s.raw;
  }
  return s;
}

std::pair<double, double> example_two_by_two(double theta11, double theta10, double theta01,
                                             double theta00, double delta1, double delta0) {
  const double det = theta11 * theta00 - theta10 * theta01;
  if (std::abs(det) < 1e-15) throw RankDeficient("2x2 system is singular", INFINITY);
  return {(delta1 * theta00 - delta0 * theta01) / det, (delta0 * theta11 - delta1 * theta10) / det};
}

std::vector<PceEstimate> pce_constant_s0(const CellTable& t, const SolveOptions& opt) {
  const MomentSystem sys = build_system_constant_s0(t);
  const SystemSolution sol = solve_system(sys, opt);
  const RankDiagnostic rd = rank_diagnostic(sys);
  std::vector<PceEstimate> out;
  for (int k = 0; k < t.s_levels(); ++k) {
    // Y1 is independent of W within S1 strata, so pool the treated cells.
    double mass = 0.0;
    double ysum = 0.0;
    for (int l = 0; l < t.w_levels(); ++l) {
      mass += t.mass(1, k, l);
      ysum += t.y_sum(1, k, l);
    }
    if (!(mass > 0.0)) {
      std::ostringstream msg;
      msg << "no treated units with s=" << t.s_values()[static_cast<std::size_t>(k)];
      throw ZeroStratumMass(msg.str());
    }
    PceEstimate e;
    e.stratum = {t.s_values()[static_cast<std::size_t>(k)], NAN};
    e.point = ysum / mass - sol.values(k);
    e.method = "discrete-ai";
    e.diagnostics["e_y1"] = ysum / mass;
    e.diagnostics["e_y0"] = sol.values(k);
    e.diagnostics["e_y0_unclipped"] = sol.raw(k);
    e.diagnostics["rank"] = rd.rank;
    e.diagnostics["condition"] = rd.condition;
    if (!sys.warnings.empty()) e.diagnostics["warnings"] = sys.warnings;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<PceEstimate> pce_constant_s0(const Dataset& d) {
  const bool binary = d.schema().y_kind == OutcomeKind::Binary;
  auto out = pce_constant_s0(CellTable::from_dataset(d), SolveOptions{binary});
  for (auto& e : out) {
    e.stratum.s0 = d.schema().constant_s0.value_or(NAN);
    if (!d.schema().constant_s0) e.diagnostics["warning"] = "schema does not declare a constant S0";
  }
  return out;
}

ArmLaws build_and_solve_general(const CellTable& t, const JointStratumModel& joint, int arm,
                                const SolveOptions& opt) {
  if (arm != 0 && arm != 1) throw BadParams("arm must be 0 or 1");
  if (joint.kind() != JointKind::Tabular) throw InputError("joint", "discrete solver needs a tabular joint");
  if (!joint.identified()) throw JointNotIdentified("joint stratum model is not identified");
  if (joint.s_values() != t.s_values()) throw InputError("joint", "joint and data S supports differ");
  const int k = t.s_levels();
  const int l = t.w_levels();
  std::vector<int> wmap(static_cast<std::size_t>(l));
  for (int c = 0; c < l; ++c) {
    wmap[static_cast<std::size_t>(c)] = index_of(joint.w_values(), t.w_values()[static_cast<std::size_t>(c)]);
    if (wmap[static_cast<std::size_t>(c)] < 0) throw InputError("joint", "joint does not cover every W value");
  }
  // mass(own, other, w) with `own` the arm's observed S value.
  auto jm = [&](int own, int other, int c) {
    const int jl = wmap[static_cast<std::size_t>(c)];
    return arm == 1 ? joint.mass(own, other, jl) : joint.mass(other, own, jl);
  };

  ArmLaws out;
  out.arm = arm;
  nlohmann::json per_value = nlohmann::json::array();
  for (int own = 0; own < k; ++own) {
    // Columns: W cells where the observed value has positive mass.
    std::vector<int> cols;
    for (int c = 0; c < l; ++c) {
      double m = 0.0;
      for (int other = 0; other < k; ++other) m += jm(own, other, c);
      if (m > kMassFloor) cols.push_back(c);
    }
    if (cols.empty()) continue;
    // Rows: values of the other potential intermediate with positive mass.
    std::vector<int> rows;
    for (int other = 0; other < k; ++other) {
      double m = 0.0;
      for (int c : cols) m = std::max(m, jm(own, other, c));
      if (m > kMassFloor) rows.push_back(other);
    }
    MomentSystem sys;
    sys.m = Matrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    sys.b = Vector(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const int c = cols[j];
      double total = 0.0;
      for (int other = 0; other < k; ++other) total += jm(own, other, c);
      for (std::size_t i = 0; i < rows.size(); ++i)
        sys.m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = jm(own, rows[i], c) / total;
      sys.b(static_cast<Eigen::Index>(j)) = t.mean_y(arm, own, c);
      sys.col_labels.push_back(t.w_values()[static_cast<std::size_t>(c)]);
    }
    for (int r : rows) sys.row_labels.push_back(t.s_values()[static_cast<std::size_t>(r)]);

    const RankDiagnostic rd = rank_diagnostic(sys);
    const double sval = t.s_values()[static_cast<std::size_t>(own)];
    if (!rd.identifiable) {
      std::ostringstream msg;
      msg << "moment system for arm " << arm << ", s=" << sval << " has rank " << rd.rank << " < " << rd.k;
      throw RankDeficient(msg.str(), rd.condition);
    }
    const SystemSolution sol = solve_system(sys, opt);
    per_value.push_back({{"s", sval}, {"rank", rd.rank}, {"rows", rd.k}, {"columns", cols.size()},
                         {"condition", rd.condition}, {"clipped", sol.clipped}});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double other = t.s_values()[static_cast<std::size_t>(rows[i])];
      out.strata.push_back(arm == 1 ? PrincipalStratum{sval, other} : PrincipalStratum{other, sval});
      out.means.push_back(sol.values(static_cast<Eigen::Index>(i)));
      out.raw.push_back(sol.raw(static_cast<Eigen::Index>(i)));
    }
  }
  out.diagnostics["systems"] = per_value;
  return out;
}

std::vector<PceEstimate> pce_from_laws(const ArmLaws& arm1, const ArmLaws& arm0) {
  std::vector<PceEstimate> out;
  for (std::size_t i = 0; i < arm1.strata.size(); ++i) {
    for (std::size_t j = 0; j < arm0.strata.size(); ++j) {
      if (!(arm1.strata[i] == arm0.strata[j])) continue;
      PceEstimate e;
      e.stratum = arm1.strata[i];
      e.point = arm1.means[i] - arm0.means[j];
      e.method = "discrete-ai";
      e.diagnostics["e_y1"] = arm1.means[i];
      e.diagnostics["e_y0"] = arm0.means[j];
      e.diagnostics["e_y1_unclipped"] = arm1.raw[i];
      e.diagnostics["e_y0_unclipped"] = arm0.raw[j];
      out.push_back(std::move(e));
    }
  }
  return out;
}

std::vector<PceEstimate> discrete_ai_estimate(const Dataset& d, const JointStratumModel& joint) {
  const CellTable t = CellTable::from_dataset(d);
  const SolveOptions opt{d.schema().y_kind == OutcomeKind::Binary};
  const ArmLaws a1 = build_and_solve_general(t, joint, 1, opt);
  const ArmLaws a0 = build_and_solve_general(t, joint, 0, opt);
  auto out = pce_from_laws(a1, a0);
  for (auto& e : out) {
    e.diagnostics["joint_provenance"] = provenance_name(joint.provenance());
    e.diagnostics["systems_arm1"] = a1.diagnostics["systems"];
    e.diagnostics["systems_arm0"] = a0.diagnostics["systems"];
  }
  return out;
}

}  // namespace pce
