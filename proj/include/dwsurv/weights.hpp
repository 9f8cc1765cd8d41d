#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <sstream>

#include "dwsurv/core.hpp"
#include "dwsurv/errors.hpp"

namespace dwsurv {

// Which treatment-balancing family multiplies the inverse-probability-of-
// censoring factor. Overlap is the default throughout.
struct WeightSpec {
  enum class Family { kOverlap, kIpt };

  Family treatment_kind = Family::kOverlap;
  std::optional<double> truncation;  // probability floor, in (0, 0.5)

  void validate() const {
    if (truncation && !(*truncation > 0.0 && *truncation < 0.5)) {
      fail(ErrorCategory::schema, "truncation floor must lie in (0, 0.5)");
    }
  }
};

// Per-record weight plus the nuisance components it was built from. Weights
// exist for every record; the event-indicator filter is applied at the
// estimating-equation stage so censored-cell diagnostics stay possible.
struct WeightVector {
  Vector w;
  Vector pi;
  Vector phi;
};

inline double treatment_factor(int a, double pi, WeightSpec::Family family) {
  if (family == WeightSpec::Family::kOverlap) {
    return std::abs(static_cast<double>(a) - pi);
  }
  return a == 1 ? 1.0 / pi : 1.0 / (1.0 - pi);
}

// Weight for an arbitrary (delta, a) cell: the treatment factor over the
// probability of the observed censoring status.
inline double weight_value(int delta, int a, double pi, double phi_a, WeightSpec::Family family) {
  const double ipc = delta == 1 ? phi_a : 1.0 - phi_a;
  return treatment_factor(a, pi, family) / ipc;
}

inline WeightVector compute_weights(const Vector& pi, const Vector& phi, const IntVector& a,
                                    const WeightSpec& spec) {
  spec.validate();
  const Eigen::Index n = pi.size();
  if (phi.size() != n || a.size() != n) {
    fail(ErrorCategory::schema, "misaligned nuisance probability vectors");
  }
  WeightVector out;
  out.w.resize(n);
  out.pi.resize(n);
  out.phi.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double p = pi(i);
    double f = phi(i);
    if (spec.truncation) {
      p = std::min(1.0 - *spec.truncation, std::max(*spec.truncation, p));
      f = std::max(*spec.truncation, f);
    }
    if (!(p > 0.0 && p < 1.0)) {
      std::ostringstream msg;
      msg << "propensity " << p << " at row " << i << " violates positivity";
      fail(ErrorCategory::positivity, msg.str());
    }
    if (!(f > 0.0 && f <= 1.0)) {
      std::ostringstream msg;
      msg << "censoring probability " << f << " at row " << i << " violates positivity";
      fail(ErrorCategory::positivity, msg.str());
    }
    out.pi(i) = p;
    out.phi(i) = f;
    out.w(i) = treatment_factor(a(i), p, spec.treatment_kind) / f;
  }
  return out;
}

// The four products P(delta, a | x) * w(delta, a, x) that the balancing
// identity requires to coincide. Cells are ordered (delta, a) =
// (0,0), (0,1), (1,0), (1,1).
struct BalanceCheck {
  std::array<double, 4> cells{};
  double max_relative_spread = 0.0;
};

template <class WeightFn>
BalanceCheck check_balancing(double pi, double phi0, double phi1, WeightFn&& weight_fn) {
  BalanceCheck out;
  const double phis[2] = {phi0, phi1};
  int c = 0;
  for (int delta = 0; delta <= 1; ++delta) {
    for (int a = 0; a <= 1; ++a) {
      const double p_delta = delta == 1 ? phis[a] : 1.0 - phis[a];
      const double p_a = a == 1 ? pi : 1.0 - pi;
      out.cells[c++] = p_delta * p_a * weight_fn(delta, a, pi, phis[a]);
    }
  }
  double lo = out.cells[0], hi = out.cells[0];
  for (double v : out.cells) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double scale = std::max(std::abs(lo), std::abs(hi));
  out.max_relative_spread = scale > 0.0 ? (hi - lo) / scale : 0.0;
  return out;
}

inline BalanceCheck check_balancing(double pi, double phi0, double phi1,
                                    WeightSpec::Family family) {
  return check_balancing(pi, phi0, phi1, [family](int delta, int a, double p, double phi_a) {
    return weight_value(delta, a, p, phi_a, family);
  });
}

}  // namespace dwsurv
