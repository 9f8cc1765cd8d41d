#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "dwsurv/core.hpp"
#include "dwsurv/errors.hpp"
#include "dwsurv/fit.hpp"
#include "dwsurv/rng.hpp"
#include "dwsurv/simgen.hpp"

namespace dwsurv {

// Expected log outcome on a fresh cohort under the true optimal rule and
// under the rule being evaluated. dvf = v_est - v_true is accumulated from
// per-subject terms that are nonpositive by construction, so the reported
// value can never exceed zero.
struct ValueResult {
  double v_true = 0.0;
  double v_est = 0.0;
  double dvf = 0.0;
};

// decide_fn maps a raw covariate row to {0, 1}. The cohort is drawn from
// the scenario's site-mixture covariate law; the expectation is noiseless
// (E eps = 0), so the true rule maximizes the per-subject value pointwise.
template <class DecideFn>
ValueResult value_function(DecideFn&& decide_fn, const GeneratedTruth& truth,
                           Eigen::Index cohort_size, SplitRng& rng) {
  const Eigen::Index n_sites = truth.site_fractions.size();
  double sum_true = 0.0;
  double sum_est = 0.0;
  double sum_gap = 0.0;
  for (Eigen::Index i = 0; i < cohort_size; ++i) {
    const double u = rng.u01();
    int site = 1;
    double cdf = 0.0;
    for (Eigen::Index j = 0; j < n_sites; ++j) {
      cdf += truth.site_fractions(j);
      if (u < cdf) {
        site = static_cast<int>(j) + 1;
        break;
      }
      site = static_cast<int>(n_sites);
    }
    const Eigen::Vector3d x = draw_covariate_row(site, rng);
    const double tf = truth.treatment_free(x(0), x(1), x(2));
    const double blip = truth.blip(x(1));
    const int a_opt = blip > 0.0 ? 1 : 0;
    const int a_est = decide_fn(x);
    sum_true += tf + a_opt * blip;
    sum_est += tf + a_est * blip;
    sum_gap += (a_est - a_opt) * blip;  // <= 0 pointwise
  }
  ValueResult out;
  out.v_true = sum_true / static_cast<double>(cohort_size);
  out.v_est = sum_est / static_cast<double>(cohort_size);
  out.dvf = sum_gap / static_cast<double>(cohort_size);
  return out;
}

inline ValueResult value_function(const FittedRule& rule, const GeneratedTruth& truth,
                                  Eigen::Index cohort_size, SplitRng& rng) {
  return value_function(
      [&rule](const Eigen::Vector3d& x) {
        return decide(rule, Vector(x));
      },
      truth, cohort_size, rng);
}

// Monte Carlo metrics for one estimator configuration.
struct MetricSummary {
  struct PerParameter {
    double mean = 0.0;
    double lo = 0.0;            // mean - 1.96 sd
    double hi = 0.0;            // mean + 1.96 sd
    double sd = 0.0;
    double rb_pct = 0.0;        // 100 (mean - truth) / truth, or absolute bias
    bool rb_is_absolute = false;  // set when truth == 0
    double mse = 0.0;
    double rmse = 0.0;
    double mc_se = 0.0;         // sd / sqrt(reps)
  };

  std::vector<PerParameter> params;
  double dvf_mean = 0.0;
  double dvf_sd = 0.0;
  Eigen::Index n_reps = 0;
  bool degenerate_sd = false;  // fewer than 2 replications
};

inline MetricSummary summarize(const Matrix& estimates, const Vector& truth, const Vector& dvfs) {
  const Eigen::Index reps = estimates.rows();
  const Eigen::Index k = estimates.cols();
  if (reps < 1) fail(ErrorCategory::schema, "summarize needs at least one replication");
  if (truth.size() != k) fail(ErrorCategory::schema, "truth length mismatch");

  MetricSummary out;
  out.n_reps = reps;
  out.degenerate_sd = reps < 2;
  for (Eigen::Index j = 0; j < k; ++j) {
    MetricSummary::PerParameter p;
    p.mean = estimates.col(j).mean();
    const double var =
        reps > 1 ? (estimates.col(j).array() - p.mean).square().sum() / static_cast<double>(reps - 1)
                 : std::numeric_limits<double>::quiet_NaN();
    p.sd = std::sqrt(var);
    p.lo = p.mean - 1.96 * p.sd;
    p.hi = p.mean + 1.96 * p.sd;
    if (truth(j) != 0.0) {
      p.rb_pct = 100.0 * (p.mean - truth(j)) / truth(j);
    } else {
      p.rb_pct = p.mean - truth(j);
      p.rb_is_absolute = true;
    }
    p.mse = (estimates.col(j).array() - truth(j)).square().sum() / static_cast<double>(reps);
    p.rmse = std::sqrt(p.mse);
    p.mc_se = p.sd / std::sqrt(static_cast<double>(reps));
    out.params.push_back(p);
  }
  if (dvfs.size() > 0) {
    out.dvf_mean = dvfs.mean();
    if (dvfs.size() > 1) {
      out.dvf_sd = std::sqrt((dvfs.array() - out.dvf_mean).square().sum() /
                             static_cast<double>(dvfs.size() - 1));
    } else {
      out.dvf_sd = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

// |weighted mean difference| / sqrt((s0^2 + s1^2) / 2) with weighted group
// means and variances; unit weights recover the plain SMD.
inline double weighted_smd(const Vector& x, const IntVector& group, const Vector& w) {
  const Eigen::Index n = x.size();
  if (group.size() != n || w.size() != n) fail(ErrorCategory::schema, "misaligned SMD inputs");
  double sw[2] = {0.0, 0.0};
  double sx[2] = {0.0, 0.0};
  for (Eigen::Index i = 0; i < n; ++i) {
    const int g = group(i) == 1 ? 1 : 0;
    sw[g] += w(i);
    sx[g] += w(i) * x(i);
  }
  if (!(sw[0] > 0.0) || !(sw[1] > 0.0)) fail(ErrorCategory::schema, "both groups must be nonempty");
  const double mean[2] = {sx[0] / sw[0], sx[1] / sw[1]};
  double sv[2] = {0.0, 0.0};
  for (Eigen::Index i = 0; i < n; ++i) {
    const int g = group(i) == 1 ? 1 : 0;
    const double d = x(i) - mean[g];
    sv[g] += w(i) * d * d;
  }
  const double var0 = sv[0] / sw[0];
  const double var1 = sv[1] / sw[1];
  const double pooled = (var0 + var1) / 2.0;
  if (!(pooled > 0.0)) fail(ErrorCategory::degenerate_predictor, "zero pooled variance in SMD");
  return std::abs(mean[1] - mean[0]) / std::sqrt(pooled);
}

}  // namespace dwsurv
