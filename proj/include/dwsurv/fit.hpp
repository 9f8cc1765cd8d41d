#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dwsurv/core.hpp"
#include "dwsurv/errors.hpp"
#include "dwsurv/linalg.hpp"
#include "dwsurv/types.hpp"
#include "dwsurv/weights.hpp"

namespace dwsurv {

// Estimated treatment rule: theta = (beta, psi) from the weighted
// estimating equation, plus the metadata needed to apply the rule to new
// covariate vectors. The covariance slot is filled by the pooled fit's
// single-site sandwich or by the distributed combiner.
struct FittedRule {
  Vector beta;
  Vector psi;
  std::optional<Matrix> covariance;
  ModelSpec spec;
  std::vector<std::string> covariate_names;
  std::int64_t n_events = 0;
  double solve_condition = 0.0;

  Vector theta() const {
    Vector t(beta.size() + psi.size());
    t << beta, psi;
    return t;
  }
};

// Normal-equation pieces of the weighted regression on the uncensored rows:
// gram = X~^T W X~, moment = X~^T W y~, yy = y~^T W y~, and the two meat
// bases used by the sandwich variance. Shared by the pooled fit and the
// per-site summarizer so both routes run the same accumulation.
struct WeightedNormalEquations {
  Matrix gram;
  Vector moment;
  double yy = 0.0;
  Matrix meat_w32;  // sum of delta * w^(3/2) * x x^T
  std::int64_t n_events = 0;
  Eigen::Index p = 0;
};

inline WeightedNormalEquations accumulate_normal_equations(const Dataset& ds,
                                                           const DesignMatrices& design,
                                                           const Vector& w) {
  const Eigen::Index p = design.p();
  WeightedNormalEquations eq;
  eq.p = p;
  eq.gram = Matrix::Zero(p, p);
  eq.moment = Vector::Zero(p);
  eq.meat_w32 = Matrix::Zero(p, p);
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    if (ds.delta(i) != 1) continue;
    const double wi = w(i);
    const double yi = std::log(ds.time(i));
    const auto row = design.stacked.row(i).transpose();
    eq.gram.noalias() += wi * row * row.transpose();
    eq.moment.noalias() += (wi * yi) * row;
    eq.yy += wi * yi * yi;
    eq.meat_w32.noalias() += (wi * std::sqrt(wi)) * row * row.transpose();
    ++eq.n_events;
  }
  return eq;
}

// Solves the weighted estimating equation on pooled individual-level data.
// Only rows with an observed event enter; censored rows have exactly zero
// influence on theta.
inline FittedRule fit_pooled(const Dataset& ds, const ModelSpec& spec, const WeightVector& wv) {
  if (wv.w.size() != ds.n()) fail(ErrorCategory::schema, "weight vector length mismatch");
  const DesignMatrices design = build_design(ds, spec);
  const WeightedNormalEquations eq = accumulate_normal_equations(ds, design, wv.w);
  if (eq.n_events == 0) {
    fail(ErrorCategory::no_information, "no uncensored records to fit on");
  }
  const std::vector<std::string> names = design_column_names(spec);
  const auto solve = solve_normal_checked<double>(eq.gram, eq.moment, kConditionLimit, &names);

  FittedRule rule;
  rule.beta = solve.solution.head(design.pf());
  rule.psi = solve.solution.tail(design.pg());
  rule.spec = spec;
  rule.covariate_names = ds.covariate_names;
  rule.n_events = eq.n_events;
  rule.solve_condition = solve.condition;
  return rule;
}

// gamma(a, x) = a * psi^T g(x); identically zero under control.
inline double blip_value(const FittedRule& rule, const Eigen::Ref<const Vector>& x, int a) {
  if (a == 0) return 0.0;
  const auto resolved = resolve_features(rule.spec.blip, rule.covariate_names);
  double g = 0.0;
  for (std::size_t k = 0; k < resolved.size(); ++k) {
    g += rule.psi(static_cast<Eigen::Index>(k)) * evaluate_feature(resolved[k], x);
  }
  return g;
}

// Recommended treatment: 1 iff the estimated blip is strictly positive.
// An exact tie goes to control.
inline int decide(const FittedRule& rule, const Eigen::Ref<const Vector>& x) {
  return blip_value(rule, x, 1) > 0.0 ? 1 : 0;
}

}  // namespace dwsurv
