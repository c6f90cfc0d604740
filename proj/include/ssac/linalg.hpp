#pragma once

#include <Eigen/Dense>

#include "ssac/core.hpp"

namespace ssac {
inline namespace SSAC_ABI {

struct ThinSvd {
  Eigen::MatrixXd u;  // m x r, orthonormal columns
  Eigen::VectorXd s;  // r, non-increasing
  Eigen::MatrixXd v;  // p x r, orthonormal columns
  int sweeps = 0;
};

inline constexpr int kJacobiMaxSweeps = 100;
inline constexpr double kJacobiTolerance = 1e-10;

/// One-sided (Hestenes) Jacobi SVD, r = min(m, p). Converged when the
/// off-diagonal Frobenius norm of the column Gram matrix drops below
/// tol * ||M||_F^2. Throws NumericalError after max_sweeps.
ThinSvd jacobi_svd(const Eigen::MatrixXd& m, int max_sweeps = kJacobiMaxSweeps,
                   double tol = kJacobiTolerance);

/// Orthonormalizes `candidate` against the columns of `basis` (modified
/// Gram-Schmidt, two passes). Returns false if nothing independent is left.
bool orthonormalize_against(const Eigen::MatrixXd& basis, Eigen::Index used_columns, Eigen::VectorXd& candidate);

}  // namespace SSAC_ABI
}  // namespace ssac
