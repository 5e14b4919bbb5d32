#pragma once

#include "pce/linalg.hpp"

#include <optional>

namespace pce::glm {

struct FitInfo {
  int iterations = 0;
  double gradient_norm = 0.0;
  double log_likelihood = 0.0;
};

struct ProbitOptions {
  double tolerance = 1e-9;  // on the weight-normalized score norm
  int max_iterations = 500;
};

struct ProbitFit {
  Vector coefficients;
  FitInfo info;
};

// Binary-response probit MLE, P(Y=1|x) = Phi(x'theta). Responses may be
// fractional in [0,1] (population-level probabilities); weights are
// non-negative. Fisher scoring with step halving, started at zero.
ProbitFit fit_probit(const Matrix& x, const Vector& y, const Vector& weights,
                     const ProbitOptions& opt = {});

// Probit whose index is rescaled per row:
//   P(Y=1|x_i) = Phi( x_i'theta / sqrt(1 + theta[scaled]^2 * v_i) ).
// This is the observed-data law after integrating a Normal latent term with
// variance v_i against a probit link whose coefficient is theta[scaled].
ProbitFit fit_scaled_probit(const Matrix& x, const Vector& y, const Vector& weights,
                            Eigen::Index scaled, const Vector& v, const ProbitOptions& opt = {});

struct LogisticOptions {
  double tolerance = 1e-10;
  int max_iterations = 200;
};

struct LogisticFit {
  Vector coefficients;
  FitInfo info;
};

// Logistic regression by Newton-Raphson. Throws NonConvergence.
LogisticFit fit_logistic(const Matrix& x, const Vector& y, const LogisticOptions& opt = {});

struct MultinomialFit {
  // (categories - 1) x p coefficient matrix; the last category is the reference.
  Matrix coefficients;
  int categories = 0;
  FitInfo info;
  // Category probabilities at covariate row `row`; they sum to one.
  Vector probabilities(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
};

struct MultinomialOptions {
  double tolerance = 1e-8;
  int max_iterations = 200;
};

// Multinomial logistic regression; labels are in [0, categories).
MultinomialFit fit_multinomial_logistic(const Matrix& x, const std::vector<int>& labels,
                                        int categories, const MultinomialOptions& opt = {});

}  // namespace pce::glm
