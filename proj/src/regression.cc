#include "lerg/regression.h"

namespace lerg {
namespace {

Eigen::VectorXd weight_vector(std::span<const double> weights, Eigen::Index rows) {
  if (weights.empty()) return Eigen::VectorXd::Ones(rows);
  if (static_cast<Eigen::Index>(weights.size()) != rows) {
    throw Error(ErrorCode::kValidationError, "one weight per sample required");
  }
  Eigen::VectorXd w(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!(weights[r] >= 0.0)) {
      throw Error(ErrorCode::kValidationError, "sample weights must be >= 0");
    }
    w(r) = weights[r];
  }
  return w;
}

Eigen::MatrixXd ridge_matrix(Eigen::Index cols, double ridge, bool intercept) {
  Eigen::MatrixXd damp = Eigen::MatrixXd::Identity(cols, cols) * ridge;
  if (intercept) damp(0, 0) = 0.0;
  return damp;
}

}  // namespace

Eigen::MatrixXd design_matrix(std::span<const Mask> masks, bool intercept) {
  if (masks.empty()) {
    throw Error(ErrorCode::kValidationError, "no samples to fit");
  }
  const auto m = static_cast<Eigen::Index>(masks.front().size());
  const Eigen::Index offset = intercept ? 1 : 0;
  Eigen::MatrixXd z(static_cast<Eigen::Index>(masks.size()), m + offset);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const Mask& mask = masks[r];
    if (static_cast<Eigen::Index>(mask.size()) != m) {
      throw Error(ErrorCode::kValidationError, "masks differ in length");
    }
    if (intercept) z(r, 0) = 1.0;
    for (Eigen::Index i = 0; i < m; ++i) z(r, i + offset) = mask.test(i) ? 1.0 : 0.0;
  }
  return z;
}

SurrogateFit fit_linear_surrogate(std::span<const Mask> masks,
                                  const Eigen::MatrixXd& targets,
                                  std::span<const double> weights, double ridge,
                                  bool intercept) {
  const Eigen::MatrixXd z = design_matrix(masks, intercept);
  if (targets.rows() != z.rows()) {
    throw Error(ErrorCode::kValidationError, "one target row per sample required");
  }
  const Eigen::VectorXd w = weight_vector(weights, z.rows());
  const double total = w.sum();
  if (!(total > 0.0)) {
    throw Error(ErrorCode::kSingularSystem, "all sample weights are zero");
  }
  const Eigen::MatrixXd zw = z.transpose() * w.asDiagonal();
  const Eigen::MatrixXd gram =
      zw * z / total + ridge_matrix(z.cols(), ridge, intercept);
  const Eigen::MatrixXd rhs = zw * targets / total;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw Error(ErrorCode::kSingularSystem,
                "surrogate normal equations are not positive definite");
  }
  const Eigen::MatrixXd beta = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !beta.allFinite()) {
    throw Error(ErrorCode::kSingularSystem,
                "surrogate normal equations could not be solved");
  }
  // Rank deficiency beyond what the damping repairs shows up as a gram
  // pivot at the level of the damping itself.
  const auto pivots = ldlt.vectorD();
  const double largest = pivots.cwiseAbs().maxCoeff();
  if (pivots.minCoeff() <= largest * 1e-15) {
    throw Error(ErrorCode::kSingularSystem,
                "surrogate design matrix is rank deficient");
  }

  SurrogateFit fit;
  const Eigen::Index offset = intercept ? 1 : 0;
  fit.coefficients = beta.bottomRows(beta.rows() - offset);
  fit.intercepts = intercept ? Eigen::RowVectorXd(beta.row(0))
                             : Eigen::RowVectorXd::Zero(targets.cols());
  return fit;
}

Eigen::MatrixXd surrogate_gradient(std::span<const Mask> masks,
                                   const Eigen::MatrixXd& targets,
                                   std::span<const double> weights, double ridge,
                                   bool intercept, const SurrogateFit& fit) {
  const Eigen::MatrixXd z = design_matrix(masks, intercept);
  const Eigen::VectorXd w = weight_vector(weights, z.rows());
  Eigen::MatrixXd beta(z.cols(), targets.cols());
  if (intercept) {
    beta.row(0) = fit.intercepts;
    beta.bottomRows(fit.coefficients.rows()) = fit.coefficients;
  } else {
    beta = fit.coefficients;
  }
  const Eigen::MatrixXd residual = z * beta - targets;
  return z.transpose() * w.asDiagonal() * residual / w.sum() +
         ridge_matrix(z.cols(), ridge, intercept) * beta;
}

}  // namespace lerg
