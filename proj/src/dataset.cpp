#include "pce/dataset.hpp"

#include "pce/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pce {

namespace {

const char* kind_name(VarKind k) { return k == VarKind::Discrete ? "discrete" : "continuous"; }

VarKind kind_from(const std::string& s) {
  if (s == "discrete") return VarKind::Discrete;
  if (s == "continuous") return VarKind::Continuous;
  throw InputError("schema", "unknown variable kind '" + s + "'");
}

int find_category(const std::vector<double>& cats, double v) {
  for (std::size_t i = 0; i < cats.size(); ++i)
    if (cats[i] == v) return static_cast<int>(i);
  return -1;
}

}  // namespace

nlohmann::json schema_to_json(const Schema& schema) {
  nlohmann::json j;
  j["s_type"] = kind_name(schema.s_kind);
  if (schema.s_kind == VarKind::Discrete) j["s_categories"] = schema.s_categories;
  j["w_type"] = kind_name(schema.w_kind);
  if (schema.w_kind == VarKind::Discrete) j["w_categories"] = schema.w_categories;
  j["y_type"] = schema.y_kind == OutcomeKind::Binary ? "binary" : "continuous";
  j["constant_s0"] = schema.constant_s0 ? nlohmann::json(*schema.constant_s0) : nlohmann::json();
  j["covariates"] = schema.covariate_names;
  return j;
}

Schema schema_from_json(const nlohmann::json& j) {
  Schema s;
  try {
    s.s_kind = kind_from(j.at("s_type").get<std::string>());
    if (s.s_kind == VarKind::Discrete) s.s_categories = j.at("s_categories").get<std::vector<double>>();
    s.w_kind = kind_from(j.at("w_type").get<std::string>());
    if (s.w_kind == VarKind::Discrete) s.w_categories = j.at("w_categories").get<std::vector<double>>();
    const auto y = j.at("y_type").get<std::string>();
    if (y == "binary") {
      s.y_kind = OutcomeKind::Binary;
    } else if (y == "continuous") {
      s.y_kind = OutcomeKind::Continuous;
    } else {
      throw InputError("schema", "unknown y_type '" + y + "'");
    }
    if (j.contains("constant_s0") && !j["constant_s0"].is_null())
      s.constant_s0 = j["constant_s0"].get<double>();
    if (j.contains("covariates")) s.covariate_names = j["covariates"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("schema", std::string("malformed schema: ") + e.what());
  }
  return s;
}

Dataset::Dataset(Schema schema, std::vector<ObservedUnit> units)
    : schema_(std::move(schema)), units_(std::move(units)) {}

void Dataset::validate() const {
  const std::size_t p = schema_.covariate_names.size();
  for (std::size_t i = 0; i < units_.size(); ++i) {
    const auto& u = units_[i];
    auto fail = [i](const std::string& what) {
      std::ostringstream msg;
      msg << "unit " << i << ": " << what;
      throw InputError("schema", msg.str());
    };
    if (u.z != 0 && u.z != 1) fail("z must be 0 or 1");
    if (!std::isfinite(u.y) || !std::isfinite(u.s) || !std::isfinite(u.w)) fail("non-finite value");
    if (schema_.y_kind == OutcomeKind::Binary && u.y != 0.0 && u.y != 1.0) fail("binary y must be 0 or 1");
    if (schema_.s_kind == VarKind::Discrete && find_category(schema_.s_categories, u.s) < 0)
      fail("s outside declared categories");
    if (schema_.w_kind == VarKind::Discrete && find_category(schema_.w_categories, u.w) < 0)
      fail("w outside declared categories");
    if (u.x.size() != p) fail("covariate count does not match schema");
    for (double v : u.x)
      if (!std::isfinite(v)) fail("non-finite covariate");
    if (schema_.constant_s0 && u.z == 0 && u.s != *schema_.constant_s0)
      fail("control unit s differs from declared constant_s0");
  }
}

void Dataset::require_both_arms() const {
  if (count_arm(0) == 0 || count_arm(1) == 0)
    throw InputError("empty-arm", "both treatment arms must be non-empty");
}

std::size_t Dataset::count_arm(int z) const {
  return static_cast<std::size_t>(
      std::count_if(units_.begin(), units_.end(), [z](const ObservedUnit& u) { return u.z == z; }));
}

int Dataset::s_index(double s) const {
  const int k = find_category(schema_.s_categories, s);
  if (k < 0) throw InputError("schema", "s value not among declared categories");
  return k;
}

int Dataset::w_index(double w) const {
  const int l = find_category(schema_.w_categories, w);
  if (l < 0) throw InputError("schema", "w value not among declared categories");
  return l;
}

Dataset Dataset::resample(const std::vector<std::size_t>& indices) const {
  std::vector<ObservedUnit> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(units_.at(i));
  return Dataset(schema_, std::move(out));
}

void PceEstimate::set_interval(const Interval& iv) {
  interval = iv;
  const bool outside = point < iv.lower || point > iv.upper;
  diagnostics["point_outside_interval"] = outside;
}

nlohmann::json to_json(const PceEstimate& e) {
  nlohmann::json j;
  j["stratum"] = {{"s1", e.stratum.s1}, {"s0", e.stratum.s0}};
  j["point"] = e.point;
  if (e.interval) {
    j["interval"] = {{"lower", e.interval->lower}, {"upper", e.interval->upper},
                     {"level", e.interval->level}};
  } else {
    j["interval"] = nullptr;
  }
  j["method"] = e.method;
  j["seed"] = e.seed;
  j["diagnostics"] = e.diagnostics;
  return j;
}

}  // namespace pce
