#pragma once

#include "pce/dataset.hpp"

#include <vector>

namespace pce {

// Observed-data law for discrete S and W, summarized per (z, s, w) cell by a
// mass (a unit count for samples, a probability for population inputs) and the
// mass-weighted outcome sum. Estimators written against this table run
// identically on samples and on exact population probabilities.
class CellTable {
 public:
  CellTable(std::vector<double> s_values, std::vector<double> w_values);

  static CellTable from_dataset(const Dataset& d);

  int s_levels() const noexcept { return static_cast<int>(s_values_.size()); }
  int w_levels() const noexcept { return static_cast<int>(w_values_.size()); }
  const std::vector<double>& s_values() const noexcept { return s_values_; }
  const std::vector<double>& w_values() const noexcept { return w_values_; }

  void add(int z, int k, int l, double mass, double y_sum);

  double mass(int z, int k, int l) const { return mass_[index(z, k, l)]; }
  double y_sum(int z, int k, int l) const { return ysum_[index(z, k, l)]; }
  double arm_cell_mass(int z, int l) const;
  double w_mass(int l) const;
  double total_mass() const;

  // P(S = s_k | Z = z, W = w_l). Throws EmptyCell when the (z, w) cell is empty.
  double p_s(int z, int k, int l) const;
  // E(Y | Z = z, S = s_k, W = w_l). Throws EmptyCell when the cell is empty.
  double mean_y(int z, int k, int l) const;
  // E(Y | Z = z, W = w_l).
  double mean_y_arm(int z, int l) const;
  // P(W = w_l).
  double p_w(int l) const;

 private:
  std::size_t index(int z, int k, int l) const;

  std::vector<double> s_values_;
  std::vector<double> w_values_;
  std::vector<double> mass_;
  std::vector<double> ysum_;
};

}  // namespace pce
