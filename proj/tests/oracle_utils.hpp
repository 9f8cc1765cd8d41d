// Independent reference implementations used only by tests. Everything here
// is written against plain arrays in long double, on purpose: these oracles
// must not share a code path with the library they check.
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace oracle {

using LongMatrix = std::vector<std::vector<long double>>;
using LongVector = std::vector<long double>;

// Gauss-Jordan with full pivoting.
inline LongVector solve_dense(LongMatrix a, LongVector b) {
  const std::size_t n = b.size();
  std::vector<std::size_t> col_of(n);
  for (std::size_t k = 0; k < n; ++k) col_of[k] = k;

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pr = k, pc = k;
    long double best = 0.0L;
    for (std::size_t i = k; i < n; ++i) {
      for (std::size_t j = k; j < n; ++j) {
        if (std::fabs(a[i][j]) > best) {
          best = std::fabs(a[i][j]);
          pr = i;
          pc = j;
        }
      }
    }
    if (best == 0.0L) throw std::runtime_error("oracle: singular system");
    std::swap(a[k], a[pr]);
    std::swap(b[k], b[pr]);
    for (std::size_t i = 0; i < n; ++i) std::swap(a[i][k], a[i][pc]);
    std::swap(col_of[k], col_of[pc]);

    const long double piv = a[k][k];
    for (std::size_t j = 0; j < n; ++j) a[k][j] /= piv;
    b[k] /= piv;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == k) continue;
      const long double f = a[i][k];
      if (f == 0.0L) continue;
      for (std::size_t j = 0; j < n; ++j) a[i][j] -= f * a[k][j];
      b[i] -= f * b[k];
    }
  }
  LongVector x(n);
  for (std::size_t k = 0; k < n; ++k) x[col_of[k]] = b[k];
  return x;
}

// Weighted least squares theta = (X^T W X)^{-1} X^T W y by explicit loops.
inline LongVector weighted_least_squares(const std::vector<LongVector>& x, const LongVector& w,
                                         const LongVector& y) {
  const std::size_t n = x.size();
  const std::size_t p = x.front().size();
  LongMatrix a(p, LongVector(p, 0.0L));
  LongVector b(p, 0.0L);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < p; ++r) {
      for (std::size_t c = 0; c < p; ++c) a[r][c] += w[i] * x[i][r] * x[i][c];
      b[r] += w[i] * x[i][r] * y[i];
    }
  }
  return solve_dense(a, b);
}

// Newton-Raphson logistic regression at long double with step halving and a
// very tight gradient tolerance.
inline LongVector logistic_newton(const std::vector<LongVector>& x, const LongVector& y,
                                  int max_iter = 200) {
  const std::size_t n = x.size();
  const std::size_t p = x.front().size();
  LongVector beta(p, 0.0L);

  auto loglik = [&](const LongVector& bt) {
    long double ll = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      long double eta = 0.0L;
      for (std::size_t k = 0; k < p; ++k) eta += bt[k] * x[i][k];
      // log(1 + exp(eta)) computed stably
      const long double log1pe = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
      ll += y[i] * eta - log1pe;
    }
    return ll;
  };

  long double ll = loglik(beta);
  for (int it = 0; it < max_iter; ++it) {
    LongVector grad(p, 0.0L);
    LongMatrix hess(p, LongVector(p, 0.0L));
    for (std::size_t i = 0; i < n; ++i) {
      long double eta = 0.0L;
      for (std::size_t k = 0; k < p; ++k) eta += beta[k] * x[i][k];
      const long double mu = 1.0L / (1.0L + std::exp(-eta));
      const long double wi = mu * (1.0L - mu);
      for (std::size_t r = 0; r < p; ++r) {
        grad[r] += (y[i] - mu) * x[i][r];
        for (std::size_t c = 0; c < p; ++c) hess[r][c] += wi * x[i][r] * x[i][c];
      }
    }
    long double gnorm = 0.0L;
    for (auto g : grad) gnorm = std::max(gnorm, std::fabs(g));
    if (gnorm < 1e-16L) break;
    const LongVector step = solve_dense(hess, grad);
    long double t = 1.0L;
    LongVector candidate(p);
    for (int half = 0; half < 60; ++half) {
      for (std::size_t k = 0; k < p; ++k) candidate[k] = beta[k] + t * step[k];
      const long double ll_new = loglik(candidate);
      if (ll_new >= ll - 1e-18L) {
        beta = candidate;
        ll = ll_new;
        break;
      }
      t /= 2.0L;
    }
  }
  return beta;
}

// Breslow log partial likelihood and score for a single covariate, by naive
// risk-set enumeration.
struct CoxEval {
  long double loglik;
  long double score;
  long double info;
};

inline CoxEval cox_partial_by_enumeration(const LongVector& x, const LongVector& time,
                                          const std::vector<int>& delta, long double b) {
  const std::size_t n = x.size();
  CoxEval out{0.0L, 0.0L, 0.0L};
  for (std::size_t i = 0; i < n; ++i) {
    if (delta[i] != 1) continue;
    long double s0 = 0.0L, s1 = 0.0L, s2 = 0.0L;
    for (std::size_t k = 0; k < n; ++k) {
      if (time[k] >= time[i]) {
        const long double e = std::exp(b * x[k]);
        s0 += e;
        s1 += x[k] * e;
        s2 += x[k] * x[k] * e;
      }
    }
    out.loglik += b * x[i] - std::log(s0);
    out.score += x[i] - s1 / s0;
    out.info += s2 / s0 - (s1 / s0) * (s1 / s0);
  }
  return out;
}

}  // namespace oracle
