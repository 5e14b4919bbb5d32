#pragma once

#include <Eigen/Dense>

namespace pce {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Singular values below this fraction of the largest one count as zero.
inline constexpr double kRankTolerance = 1e-8;

struct RankInfo {
  int rank = 0;
  int columns = 0;
  double max_singular = 0.0;
  double min_singular = 0.0;
  // Ratio of largest to smallest singular value (inf when the smallest is 0).
  double condition = 0.0;
  bool full_column_rank() const noexcept { return rank == columns; }
};

RankInfo numerical_rank(const Matrix& a);

// argmin ||A x - b||_2. Exact solve for square nonsingular A.
// Throws RankDeficient when the numerical rank is below the column count.
Vector solve_least_squares(const Matrix& a, const Vector& b);

// Weighted least squares with non-negative row weights.
Vector solve_weighted_least_squares(const Matrix& a, const Vector& b, const Vector& weights);

}  // namespace pce
