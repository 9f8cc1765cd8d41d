#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "dwsurv/core.hpp"
#include "dwsurv/errors.hpp"

namespace dwsurv {

inline constexpr double kConditionLimit = 1e12;

template <class Scalar>
struct CheckedSolve {
  VectorX<Scalar> solution;
  Scalar condition;  // diagonal-ratio estimate from the pivoted QR
};

// Solves the (symmetric, positive semidefinite in exact arithmetic) normal
// equations A x = b through a rank-revealing decomposition. Throws a
// singularity error reporting the condition estimate and the column the
// pivoting identifies as dependent.
template <class Scalar>
CheckedSolve<Scalar> solve_normal_checked(const MatrixX<Scalar>& A, const VectorX<Scalar>& b,
                                          Scalar condition_limit = Scalar(kConditionLimit),
                                          const std::vector<std::string>* column_names = nullptr) {
  const Eigen::Index p = A.cols();
  Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr(A);
  const auto& R = qr.matrixR();
  Scalar dmax = 0, dmin = std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index k = 0; k < p; ++k) {
    const Scalar d = std::abs(R(k, k));
    dmax = std::max(dmax, d);
    dmin = std::min(dmin, d);
  }
  const Scalar condition =
      dmin > Scalar(0) ? dmax / dmin : std::numeric_limits<Scalar>::infinity();
  const Eigen::Index rank = qr.rank();
  if (rank < p || condition > condition_limit) {
    const Eigen::Index offender = qr.colsPermutation().indices()(rank < p ? rank : p - 1);
    std::ostringstream msg;
    msg << "singular normal equations (condition ~ " << static_cast<double>(condition)
        << "), dependent column " << offender;
    if (column_names != nullptr && offender < static_cast<Eigen::Index>(column_names->size())) {
      msg << " (" << (*column_names)[offender] << ")";
    }
    fail(ErrorCategory::singular, msg.str());
  }
  return {qr.solve(b), condition};
}

// A B^{-1} M B^{-1} A-style symmetric sandwich, solved rather than inverted.
template <class Scalar>
MatrixX<Scalar> sandwich(const MatrixX<Scalar>& bread, const MatrixX<Scalar>& meat) {
  Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr(bread);
  if (qr.rank() < bread.cols()) {
    fail(ErrorCategory::singular, "singular bread matrix in sandwich covariance");
  }
  MatrixX<Scalar> half = qr.solve(meat);
  MatrixX<Scalar> cov = qr.solve(half.transpose()).transpose();
  return ((cov + cov.transpose()) / Scalar(2)).eval();
}

inline bool is_positive_semidefinite(const Matrix& m, double tol_scale = 1e-10) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) return false;
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  return es.eigenvalues().minCoeff() >= -tol_scale * scale;
}

}  // namespace dwsurv
