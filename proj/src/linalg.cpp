#include "pce/linalg.hpp"

#include "pce/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace pce {

namespace {

RankInfo rank_from_singular_values(const Vector& sv, int columns) {
  RankInfo info;
  info.columns = columns;
  if (sv.size() == 0) return info;
  info.max_singular = sv(0);
  info.min_singular = sv.size() < columns ? 0.0 : sv(sv.size() - 1);
  const double cutoff = kRankTolerance * info.max_singular;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff && sv(i) > 0.0) ++info.rank;
  info.condition = info.min_singular > 0.0 ? info.max_singular / info.min_singular
                                           : std::numeric_limits<double>::infinity();
  return info;
}

}  // namespace

RankInfo numerical_rank(const Matrix& a) {
  if (a.rows() == 0 || a.cols() == 0) {
    RankInfo info;
    info.columns = static_cast<int>(a.cols());
    info.condition = std::numeric_limits<double>::infinity();
    return info;
  }
  Eigen::JacobiSVD<Matrix> svd(a);
  return rank_from_singular_values(svd.singularValues(), static_cast<int>(a.cols()));
}

Vector solve_least_squares(const Matrix& a, const Vector& b) {
  if (a.rows() != b.size()) throw InputError("dimension", "least squares: row count mismatch");
  if (a.rows() < a.cols()) {
    throw RankDeficient("least squares: fewer rows than columns",
                        std::numeric_limits<double>::infinity());
  }
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RankInfo info = rank_from_singular_values(svd.singularValues(), static_cast<int>(a.cols()));
  if (!info.full_column_rank()) {
    std::ostringstream msg;
    msg << "least squares: numerical rank " << info.rank << " < " << info.columns
        << " columns (condition " << info.condition << ")";
    throw RankDeficient(msg.str(), info.condition);
  }
  return svd.solve(b);
}

Vector solve_weighted_least_squares(const Matrix& a, const Vector& b, const Vector& weights) {
  if (weights.size() != a.rows()) throw InputError("dimension", "weighted least squares: weight count mismatch");
  const Vector root = weights.cwiseMax(0.0).cwiseSqrt();
  return solve_least_squares(root.asDiagonal() * a, root.cwiseProduct(b));
}

}  // namespace pce
