#pragma once

#include <span>

#include <Eigen/Dense>

#include "lerg/core.h"

namespace lerg {

inline constexpr double kDefaultRidge = 1e-8;

struct SurrogateFit {
  Eigen::MatrixXd coefficients;    // M x N, one column per response step
  Eigen::RowVectorXd intercepts;   // N, zero when fitted without intercept
};

// Weighted least squares of targets (rows = samples, cols = steps) on the
// mask indicators, solved per column through the damped normal equations
//   (Z^T W Z / S + ridge * I) beta = Z^T W g / S
// where S is the total weight. The ridge term does not touch the intercept.
// Throws SingularSystem if the damped system cannot be factorized.
SurrogateFit fit_linear_surrogate(std::span<const Mask> masks,
                                  const Eigen::MatrixXd& targets,
                                  std::span<const double> weights = {},
                                  double ridge = kDefaultRidge,
                                  bool intercept = true);

// Gradient of the damped objective at `fit`, one column per step. Zero (to
// rounding) at the optimum.
Eigen::MatrixXd surrogate_gradient(std::span<const Mask> masks,
                                   const Eigen::MatrixXd& targets,
                                   std::span<const double> weights,
                                   double ridge, bool intercept,
                                   const SurrogateFit& fit);

// Design matrix with an optional leading intercept column.
Eigen::MatrixXd design_matrix(std::span<const Mask> masks, bool intercept);

}  // namespace lerg
