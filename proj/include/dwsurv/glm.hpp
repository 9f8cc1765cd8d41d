#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "dwsurv/core.hpp"
#include "dwsurv/errors.hpp"
#include "dwsurv/linalg.hpp"

namespace dwsurv {

struct LogisticOptions {
  int max_iterations = 50;
  double deviance_tolerance = 1e-10;
  double separation_bound = 30.0;  // any |alpha_k| beyond this flags the fit
  // The working normal matrix degrades as fits approach separation; that is
  // reported through converged=false, not as a singularity, so the inner
  // solve tolerates much worse conditioning than the estimating equation.
  double condition_limit = 1e15;
};

template <class Scalar>
struct LogisticFitT {
  VectorX<Scalar> coefficients;
  bool converged = false;
  int iterations = 0;
  VectorX<Scalar> fitted_probabilities;   // expit(X alpha), clipped
  MatrixX<Scalar> information;            // X^T W X at the final iterate
  std::vector<Scalar> deviance_trace;     // one entry per accepted step
};

using LogisticFit = LogisticFitT<double>;

namespace detail {

template <class Scalar>
Scalar bernoulli_deviance(const VectorX<Scalar>& y, const VectorX<Scalar>& mu) {
  Scalar dev = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    dev -= Scalar(2) * (y(i) * std::log(mu(i)) + (Scalar(1) - y(i)) * std::log(Scalar(1) - mu(i)));
  }
  return dev;
}

template <class Scalar>
VectorX<Scalar> clipped_probs(const MatrixX<Scalar>& x, const VectorX<Scalar>& alpha) {
  VectorX<Scalar> mu = (x * alpha).unaryExpr([](Scalar v) { return expit(v); });
  for (Eigen::Index i = 0; i < mu.size(); ++i) mu(i) = clip_probability(mu(i));
  return mu;
}

}  // namespace detail

// Bernoulli log-likelihood maximised by iteratively reweighted least squares
// with step halving, so the deviance is non-increasing across accepted
// iterations. Probabilities are clipped inside the working weights; complete
// separation is reported through converged = false rather than an error.
template <class Scalar>
LogisticFitT<Scalar> fit_logistic(const MatrixX<Scalar>& design, const VectorX<Scalar>& y,
                                  const LogisticOptions& opts = {},
                                  const std::vector<std::string>* column_names = nullptr) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (y.size() != n) fail(ErrorCategory::schema, "design rows do not match response length");
  if (n == 0) fail(ErrorCategory::no_information, "empty design");

  LogisticFitT<Scalar> fit;
  fit.coefficients = VectorX<Scalar>::Zero(p);
  VectorX<Scalar> mu = detail::clipped_probs(design, fit.coefficients);
  Scalar dev = detail::bernoulli_deviance(y, mu);
  fit.deviance_trace.push_back(dev);

  for (int it = 1; it <= opts.max_iterations; ++it) {
    VectorX<Scalar> w = mu.array() * (Scalar(1) - mu.array());
    VectorX<Scalar> z = design * fit.coefficients + ((y - mu).array() / w.array()).matrix();
    MatrixX<Scalar> xtwx = design.transpose() * w.asDiagonal() * design;
    VectorX<Scalar> xtwz = design.transpose() * (w.asDiagonal() * z);
    VectorX<Scalar> proposal =
        solve_normal_checked<Scalar>(xtwx, xtwz, Scalar(opts.condition_limit), column_names)
            .solution;

    // Step halving keeps the deviance monotone when plain IRLS overshoots.
    VectorX<Scalar> direction = proposal - fit.coefficients;
    Scalar step = 1;
    VectorX<Scalar> candidate;
    VectorX<Scalar> mu_new;
    Scalar dev_new = std::numeric_limits<Scalar>::infinity();
    for (int half = 0; half < 30; ++half) {
      candidate = fit.coefficients + step * direction;
      mu_new = detail::clipped_probs(design, candidate);
      dev_new = detail::bernoulli_deviance(y, mu_new);
      if (dev_new <= dev + Scalar(1e-12)) break;
      step /= 2;
    }

    fit.coefficients = candidate;
    mu = mu_new;
    fit.iterations = it;
    fit.deviance_trace.push_back(dev_new);
    const Scalar delta = std::abs(dev - dev_new);
    dev = dev_new;
    if (delta < Scalar(opts.deviance_tolerance)) {
      fit.converged = true;
      break;
    }
  }

  if (fit.coefficients.cwiseAbs().maxCoeff() > Scalar(opts.separation_bound)) {
    fit.converged = false;  // separation: estimate diverging
  }
  fit.fitted_probabilities = mu;
  VectorX<Scalar> w = mu.array() * (Scalar(1) - mu.array());
  fit.information = design.transpose() * w.asDiagonal() * design;
  return fit;
}

template <class Scalar>
VectorX<Scalar> predict_prob(const LogisticFitT<Scalar>& fit, const MatrixX<Scalar>& design) {
  if (design.cols() != fit.coefficients.size()) {
    fail(ErrorCategory::schema, "prediction design has wrong column count");
  }
  return detail::clipped_probs(design, fit.coefficients);
}

struct UnivariateTestResult {
  double estimate = 0.0;
  double standard_error = std::numeric_limits<double>::infinity();
  double p_value = 1.0;
};

// Wald test for the slope in logit(y) ~ 1 + x.
inline UnivariateTestResult univariate_logistic_test(const Vector& x, const Vector& y) {
  if (x.size() != y.size() || x.size() == 0) {
    fail(ErrorCategory::schema, "mismatched test vectors");
  }
  const double spread = x.maxCoeff() - x.minCoeff();
  if (!(spread > 0.0)) {
    fail(ErrorCategory::degenerate_predictor, "constant predictor in univariate logistic test");
  }
  Matrix design(x.size(), 2);
  design.col(0).setOnes();
  design.col(1) = x;
  const LogisticFit fit = fit_logistic<double>(design, y);
  // 2x2 information inverse for the slope variance.
  const Matrix& info = fit.information;
  const double det = info(0, 0) * info(1, 1) - info(0, 1) * info(1, 0);
  if (!(det > 0.0)) fail(ErrorCategory::singular, "degenerate information in univariate test");
  const double var_slope = info(0, 0) / det;
  UnivariateTestResult r;
  r.estimate = fit.coefficients(1);
  r.standard_error = std::sqrt(var_slope);
  r.p_value = two_sided_normal_p(r.estimate / r.standard_error);
  return r;
}

// One-parameter Cox partial-likelihood score test, Breslow tie handling.
// The covariate is centred first; the partial likelihood is invariant to
// that shift and the exponentials stay bounded.
inline UnivariateTestResult univariate_cox_score_test(const Vector& x, const Vector& time,
                                                      const IntVector& delta) {
  const Eigen::Index n = x.size();
  if (time.size() != n || delta.size() != n || n == 0) {
    fail(ErrorCategory::schema, "mismatched test vectors");
  }
  if (delta.sum() == 0) {
    fail(ErrorCategory::no_information, "no events in Cox score test");
  }
  const Vector xc = x.array() - x.mean();
  if (!(xc.cwiseAbs().maxCoeff() > 0.0)) {
    return UnivariateTestResult{0.0, std::numeric_limits<double>::infinity(), 1.0};
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return time(a) < time(b);
  });

  // Log partial likelihood, score and information at b, sweeping risk sets
  // from the largest time down so S0/S1/S2 are running sums.
  auto evaluate = [&](double b, double& loglik, double& score, double& info) {
    loglik = 0.0;
    score = 0.0;
    info = 0.0;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    Eigen::Index i = n - 1;
    while (i >= 0) {
      Eigen::Index j = i;
      const double t = time(order[static_cast<std::size_t>(i)]);
      while (j >= 0 && time(order[static_cast<std::size_t>(j)]) == t) {
        const Eigen::Index k = order[static_cast<std::size_t>(j)];
        const double e = std::exp(b * xc(k));
        s0 += e;
        s1 += xc(k) * e;
        s2 += xc(k) * xc(k) * e;
        --j;
      }
      for (Eigen::Index m = i; m > j; --m) {
        const Eigen::Index k = order[static_cast<std::size_t>(m)];
        if (delta(k) == 1) {
          const double mean = s1 / s0;
          loglik += b * xc(k) - std::log(s0);
          score += xc(k) - mean;
          info += s2 / s0 - mean * mean;
        }
      }
      i = j;
    }
  };

  double b = 0.0;
  double loglik, score, info;
  evaluate(b, loglik, score, info);
  for (int it = 0; it < 50 && std::abs(score) > 1e-10; ++it) {
    if (!(info > 0.0)) break;
    double step = score / info;
    double b_new = b + step;
    double ll_new, sc_new, in_new;
    evaluate(b_new, ll_new, sc_new, in_new);
    for (int half = 0; half < 30 && ll_new < loglik - 1e-12; ++half) {
      step /= 2;
      b_new = b + step;
      evaluate(b_new, ll_new, sc_new, in_new);
    }
    b = b_new;
    loglik = ll_new;
    score = sc_new;
    info = in_new;
  }

  UnivariateTestResult r;
  r.estimate = b;
  r.standard_error = info > 0.0 ? 1.0 / std::sqrt(info) : std::numeric_limits<double>::infinity();
  r.p_value = info > 0.0 ? two_sided_normal_p(r.estimate / r.standard_error) : 1.0;
  return r;
}

}  // namespace dwsurv
