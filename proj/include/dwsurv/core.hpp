#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace dwsurv {

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using IntVector = VectorX<int>;

// Probabilities produced by any model are kept strictly inside
// [kProbClip, 1 - kProbClip].
inline constexpr double kProbClip = 1e-12;

template <class Scalar>
Scalar expit(Scalar x) {
  if (x >= Scalar(0)) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
  }
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <class Scalar>
Scalar clip_probability(Scalar p, Scalar eps = Scalar(kProbClip)) {
  return std::min(Scalar(1) - eps, std::max(eps, p));
}

// Two-sided tail probability of a standard normal Wald statistic.
inline double two_sided_normal_p(double z) {
  if (!std::isfinite(z)) return std::isnan(z) ? 1.0 : 0.0;
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

}  // namespace dwsurv
