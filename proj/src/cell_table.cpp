#include "pce/cell_table.hpp"

#include "pce/errors.hpp"

#include <sstream>
#include <stdexcept>

namespace pce {

CellTable::CellTable(std::vector<double> s_values, std::vector<double> w_values)
    : s_values_(std::move(s_values)),
      w_values_(std::move(w_values)),
      mass_(2 * s_values_.size() * w_values_.size(), 0.0),
      ysum_(2 * s_values_.size() * w_values_.size(), 0.0) {}

CellTable CellTable::from_dataset(const Dataset& d) {
  const Schema& sc = d.schema();
  if (sc.s_kind != VarKind::Discrete || sc.w_kind != VarKind::Discrete)
    throw InputError("schema", "cell table requires discrete S and W");
  CellTable t(sc.s_categories, sc.w_categories);
  for (const auto& u : d.units()) t.add(u.z, d.s_index(u.s), d.w_index(u.w), 1.0, u.y);
  return t;
}

std::size_t CellTable::index(int z, int k, int l) const {
  if (z < 0 || z > 1 || k < 0 || k >= s_levels() || l < 0 || l >= w_levels())
    throw std::out_of_range("cell table index");
  return (static_cast<std::size_t>(z) * s_values_.size() + static_cast<std::size_t>(k)) *
             w_values_.size() +
         static_cast<std::size_t>(l);
}

void CellTable::add(int z, int k, int l, double mass, double y_sum) {
  const auto i = index(z, k, l);
  mass_[i] += mass;
  ysum_[i] += y_sum;
}

double CellTable::arm_cell_mass(int z, int l) const {
  double m = 0.0;
  for (int k = 0; k < s_levels(); ++k) m += mass(z, k, l);
  return m;
}

double CellTable::w_mass(int l) const { return arm_cell_mass(0, l) + arm_cell_mass(1, l); }

double CellTable::total_mass() const {
  double m = 0.0;
  for (double v : mass_) m += v;
  return m;
}

double CellTable::p_s(int z, int k, int l) const {
  const double denom = arm_cell_mass(z, l);
  if (!(denom > 0.0)) {
    std::ostringstream msg;
    msg << "no units with z=" << z << " in cell w=" << w_values_[static_cast<std::size_t>(l)];
    throw EmptyCell(msg.str());
  }
  return mass(z, k, l) / denom;
}

double CellTable::mean_y(int z, int k, int l) const {
  const double m = mass(z, k, l);
  if (!(m > 0.0)) {
    std::ostringstream msg;
    msg << "no units with z=" << z << ", s=" << s_values_[static_cast<std::size_t>(k)]
        << ", w=" << w_values_[static_cast<std::size_t>(l)];
    throw EmptyCell(msg.str());
  }
  return y_sum(z, k, l) / m;
}

double CellTable::mean_y_arm(int z, int l) const {
  const double denom = arm_cell_mass(z, l);
  if (!(denom > 0.0)) {
    std::ostringstream msg;
    msg << "no units with z=" << z << " in cell w=" << w_values_[static_cast<std::size_t>(l)];
    throw EmptyCell(msg.str());
  }
  double s = 0.0;
  for (int k = 0; k < s_levels(); ++k) s += y_sum(z, k, l);
  return s / denom;
}

double CellTable::p_w(int l) const {
  const double total = total_mass();
  if (!(total > 0.0)) throw EmptyCell("empty cell table");
  return w_mass(l) / total;
}

}  // namespace pce
