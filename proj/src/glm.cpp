#include "pce/glm.hpp"

#include "pce/errors.hpp"
#include "pce/normal.hpp"

#include <cmath>
#include <sstream>

namespace pce::glm {

namespace {

struct ProbitTerms {
  double log_likelihood = 0.0;
  Vector score;
  Matrix information;
};

// Index t_i and its gradient for the (optionally) scaled probit.
struct IndexEval {
  double t;
  double k;  // sqrt(1 + theta_a^2 v_i)
};

ProbitTerms probit_terms(const Matrix& x, const Vector& y, const Vector& wts, const Vector& theta,
                         Eigen::Index scaled, const Vector* v, bool need_derivatives) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  ProbitTerms out;
  if (need_derivatives) {
    out.score = Vector::Zero(p);
    out.information = Matrix::Zero(p, p);
  }
  Vector grad_t(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wi = wts(i);
    if (wi <= 0.0) continue;
    const double eta = x.row(i).dot(theta);
    double k = 1.0;
    double vi = 0.0;
    if (v != nullptr) {
      vi = (*v)(i);
      k = std::sqrt(1.0 + theta(scaled) * theta(scaled) * vi);
    }
    const double t = eta / k;
    const double cdf = std_normal_cdf(t);
    const double sf = std_normal_sf(t);
    const double p1 = std::max(cdf, 1e-300);
    const double p0 = std::max(sf, 1e-300);
    out.log_likelihood += wi * (y(i) * std::log(p1) + (1.0 - y(i)) * std::log(p0));
    if (!need_derivatives) continue;
    grad_t = x.row(i).transpose() / k;
    if (v != nullptr) grad_t(scaled) -= eta * theta(scaled) * vi / (k * k * k);
    const double pdf = std_normal_pdf(t);
    // Score of the Bernoulli log-likelihood in t; the ratio form is stable in both tails.
    const double denom = std::max(p1 * p0, 1e-300);
    const double r = pdf / denom;
    out.score += wi * (y(i) - cdf) * r * grad_t;
    out.information.noalias() += (wi * pdf * r) * grad_t * grad_t.transpose();
  }
  return out;
}

ProbitFit probit_driver(const Matrix& x, const Vector& y, const Vector& wts, Eigen::Index scaled,
                        const Vector* v, const ProbitOptions& opt) {
  const double total = wts.cwiseMax(0.0).sum();
  if (!(total > 0.0)) throw InputError("probit", "probit fit needs positive total weight");
  const RankInfo rank = numerical_rank(x);
  if (!rank.full_column_rank())
    throw RankDeficient("probit design is rank deficient", rank.condition);

  Vector theta = Vector::Zero(x.cols());
  ProbitTerms cur = probit_terms(x, y, wts, theta, scaled, v, true);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const double gnorm = cur.score.norm() / total;
    if (gnorm <= opt.tolerance) {
      return {theta, {it - 1, gnorm, cur.log_likelihood}};
    }
    const Vector step = cur.information.ldlt().solve(cur.score);
    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 40; ++half) {
      const Vector trial = theta + scale * step;
      const ProbitTerms t = probit_terms(x, y, wts, trial, scaled, v, false);
      if (std::isfinite(t.log_likelihood) && t.log_likelihood >= cur.log_likelihood - 1e-12 * total) {
        theta = trial;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;
    cur = probit_terms(x, y, wts, theta, scaled, v, true);
  }
  const double gnorm = cur.score.norm() / total;
  if (gnorm <= opt.tolerance) return {theta, {opt.max_iterations, gnorm, cur.log_likelihood}};
  std::ostringstream msg;
  msg << "probit MLE did not converge (score norm " << gnorm << ")";
  throw NonConvergence(msg.str(), opt.max_iterations);
}

}  // namespace

ProbitFit fit_probit(const Matrix& x, const Vector& y, const Vector& weights,
                     const ProbitOptions& opt) {
  return probit_driver(x, y, weights, 0, nullptr, opt);
}

ProbitFit fit_scaled_probit(const Matrix& x, const Vector& y, const Vector& weights,
                            Eigen::Index scaled, const Vector& v, const ProbitOptions& opt) {
  if (scaled < 0 || scaled >= x.cols()) throw InputError("probit", "scaled coefficient index out of range");
  if (v.size() != x.rows()) throw InputError("probit", "variance vector length mismatch");
  return probit_driver(x, y, weights, scaled, &v, opt);
}

LogisticFit fit_logistic(const Matrix& x, const Vector& y, const LogisticOptions& opt) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  const RankInfo rank = numerical_rank(x);
  if (!rank.full_column_rank())
    throw RankDeficient("logistic design is rank deficient", rank.condition);
  Vector beta = Vector::Zero(p);
  auto loglik = [&](const Vector& b) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double eta = x.row(i).dot(b);
      // log(1 + e^eta) computed stably
      const double softplus = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
      ll += y(i) * eta - softplus;
    }
    return ll;
  };
  double ll = loglik(beta);
  for (int it = 0; it <= opt.max_iterations; ++it) {
    Vector grad = Vector::Zero(p);
    Matrix hess = Matrix::Zero(p, p);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double eta = x.row(i).dot(beta);
      const double mu = 1.0 / (1.0 + std::exp(-eta));
      grad += (y(i) - mu) * x.row(i).transpose();
      hess.noalias() += (mu * (1.0 - mu)) * x.row(i).transpose() * x.row(i);
    }
    const double gnorm = grad.norm() / static_cast<double>(n);
    if (gnorm <= opt.tolerance) return {beta, {it, gnorm, ll}};
    if (it == opt.max_iterations) break;
    const Vector step = hess.ldlt().solve(grad);
    double scale = 1.0;
    for (int half = 0; half < 40; ++half) {
      const Vector trial = beta + scale * step;
      const double t = loglik(trial);
      if (std::isfinite(t) && t >= ll - 1e-12 * static_cast<double>(n)) {
        beta = trial;
        ll = t;
        break;
      }
      scale *= 0.5;
    }
  }
  throw NonConvergence("logistic regression did not converge", opt.max_iterations);
}

Vector MultinomialFit::probabilities(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  Vector eta(categories);
  for (int k = 0; k + 1 < categories; ++k) eta(k) = coefficients.row(k).dot(row);
  eta(categories - 1) = 0.0;
  const double m = eta.maxCoeff();
  Vector p = (eta.array() - m).exp();
  return p / p.sum();
}

MultinomialFit fit_multinomial_logistic(const Matrix& x, const std::vector<int>& labels,
                                        int categories, const MultinomialOptions& opt) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw InputError("multinomial", "label count mismatch");
  if (categories < 2) throw InputError("multinomial", "need at least two categories");
  const RankInfo rank = numerical_rank(x);
  if (!rank.full_column_rank())
    throw RankDeficient("multinomial design is rank deficient", rank.condition);

  const int km1 = categories - 1;
  MultinomialFit fit;
  fit.categories = categories;
  fit.coefficients = Matrix::Zero(km1, p);
  auto flat = [&](const Matrix& b) {
    Vector v(km1 * p);
    for (int k = 0; k < km1; ++k) v.segment(k * p, p) = b.row(k).transpose();
    return v;
  };
  auto unflat = [&](const Vector& v) {
    Matrix b(km1, p);
    for (int k = 0; k < km1; ++k) b.row(k) = v.segment(k * p, p).transpose();
    return b;
  };
  auto loglik = [&](const MultinomialFit& f) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector pr = f.probabilities(x.row(i));
      ll += std::log(std::max(pr(labels[static_cast<std::size_t>(i)]), 1e-300));
    }
    return ll;
  };
  double ll = loglik(fit);
  for (int it = 0; it <= opt.max_iterations; ++it) {
    Vector grad = Vector::Zero(km1 * p);
    Matrix hess = Matrix::Zero(km1 * p, km1 * p);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector pr = fit.probabilities(x.row(i));
      const auto xi = x.row(i).transpose();
      for (int a = 0; a < km1; ++a) {
        const double ya = labels[static_cast<std::size_t>(i)] == a ? 1.0 : 0.0;
        grad.segment(a * p, p) += (ya - pr(a)) * xi;
        for (int b = 0; b < km1; ++b) {
          const double wab = pr(a) * ((a == b ? 1.0 : 0.0) - pr(b));
          hess.block(a * p, b * p, p, p).noalias() += wab * xi * xi.transpose();
        }
      }
    }
    const double gnorm = grad.norm() / static_cast<double>(n);
    if (gnorm <= opt.tolerance) {
      fit.info = {it, gnorm, ll};
      return fit;
    }
    if (it == opt.max_iterations) break;
    const Vector step = hess.ldlt().solve(grad);
    const Vector base = flat(fit.coefficients);
    double scale = 1.0;
    for (int half = 0; half < 40; ++half) {
      MultinomialFit trial = fit;
      trial.coefficients = unflat(base + scale * step);
      const double t = loglik(trial);
      if (std::isfinite(t) && t >= ll - 1e-12 * static_cast<double>(n)) {
        fit = std::move(trial);
        ll = t;
        break;
      }
      scale *= 0.5;
    }
  }
  throw NonConvergence("multinomial logistic regression did not converge", opt.max_iterations);
}

}  // namespace pce::glm
