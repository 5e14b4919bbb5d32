#pragma once

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pce {

enum class VarKind { Discrete, Continuous };
enum class OutcomeKind { Binary, Continuous };

struct ObservedUnit {
  int z = 0;
  double s = 0.0;
  double y = 0.0;
  double w = 0.0;
  std::vector<double> x;
};

struct Schema {
  VarKind s_kind = VarKind::Continuous;
  std::vector<double> s_categories;  // ordered category values when discrete
  VarKind w_kind = VarKind::Continuous;
  std::vector<double> w_categories;
  OutcomeKind y_kind = OutcomeKind::Continuous;
  // Set when every control unit shares one intermediate value (S0 = c).
  std::optional<double> constant_s0;
  std::vector<std::string> covariate_names;

  int s_levels() const { return static_cast<int>(s_categories.size()); }
  int w_levels() const { return static_cast<int>(w_categories.size()); }
};

nlohmann::json schema_to_json(const Schema& schema);
Schema schema_from_json(const nlohmann::json& j);

class Dataset {
 public:
  Dataset() = default;
  Dataset(Schema schema, std::vector<ObservedUnit> units);

  const Schema& schema() const noexcept { return schema_; }
  const std::vector<ObservedUnit>& units() const noexcept { return units_; }
  std::size_t size() const noexcept { return units_.size(); }
  std::size_t covariate_count() const noexcept { return schema_.covariate_names.size(); }
  const ObservedUnit& operator[](std::size_t i) const { return units_[i]; }

  // Throws InputError when any unit violates the schema.
  void validate() const;
  // Throws InputError unless both treatment arms are non-empty.
  void require_both_arms() const;

  std::size_t count_arm(int z) const;
  // Category index of a value; throws InputError when the value is not declared.
  int s_index(double s) const;
  int w_index(double w) const;

  // Subset by unit indices (with repetition), e.g. for bootstrap resamples.
  Dataset resample(const std::vector<std::size_t>& indices) const;

 private:
  Schema schema_;
  std::vector<ObservedUnit> units_;
};

struct PrincipalStratum {
  double s1 = 0.0;
  double s0 = 0.0;
  friend bool operator==(const PrincipalStratum&, const PrincipalStratum&) = default;
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
};

struct PceEstimate {
  PrincipalStratum stratum;
  double point = 0.0;
  std::optional<Interval> interval;
  std::string method;
  std::uint64_t seed = 0;
  nlohmann::json diagnostics = nlohmann::json::object();

  // Attach an interval; if the point falls outside it the fact is recorded
  // in diagnostics["point_outside_interval"].
  void set_interval(const Interval& iv);
};

nlohmann::json to_json(const PceEstimate& e);

}  // namespace pce
