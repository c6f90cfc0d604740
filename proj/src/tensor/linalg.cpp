#include "ssac/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ssac/errors.hpp"

namespace ssac {
inline namespace SSAC_ABI {

namespace {

// Works on a tall matrix (rows >= cols); `a` is overwritten with U * S.
ThinSvd jacobi_tall(Eigen::MatrixXd a, int max_sweeps, double tol) {
  const Eigen::Index n = a.cols();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double norm2 = a.squaredNorm();

  ThinSvd out;
  bool converged = norm2 == 0.0 || n < 2;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    double off2 = 0.0;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = a.col(p).squaredNorm();
        const double beta = a.col(q).squaredNorm();
        const double gamma = a.col(p).dot(a.col(q));
        off2 += gamma * gamma;
        if (gamma == 0.0 || std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
          const double ap = a(i, p), aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    out.sweeps = sweep + 1;
    converged = std::sqrt(off2) < tol * norm2;
  }
  if (!converged) throw NumericalError("Jacobi SVD did not converge in " + std::to_string(max_sweeps) + " sweeps");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Eigen::VectorXd norms(n);
  for (Eigen::Index j = 0; j < n; ++j) norms(j) = a.col(j).norm();
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return norms(x) > norms(y); });

  out.u.resize(a.rows(), n);
  out.s.resize(n);
  out.v.resize(n, n);
  // Null singular values sort last; complete their U columns with
  // canonical directions orthogonal to the ones already placed.
  const double floor = 1e-14 * std::max(1.0, norms.maxCoeff());
  Eigen::Index e = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    out.v.col(j) = v.col(src);
    if (norms(src) > floor) {
      out.s(j) = norms(src);
      out.u.col(j) = a.col(src) / norms(src);
      continue;
    }
    out.s(j) = 0.0;
    for (; e < a.rows(); ++e) {
      Eigen::VectorXd cand = Eigen::VectorXd::Unit(a.rows(), e);
      if (orthonormalize_against(out.u, j, cand)) {
        out.u.col(j) = cand;
        ++e;
        break;
      }
    }
  }
  return out;
}

}  // namespace

bool orthonormalize_against(const Eigen::MatrixXd& basis, Eigen::Index used_columns, Eigen::VectorXd& candidate) {
  const double original = candidate.norm();
  if (original == 0.0) return false;
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index j = 0; j < used_columns; ++j) candidate -= basis.col(j).dot(candidate) * basis.col(j);
  }
  const double remaining = candidate.norm();
  if (remaining <= 1e-8 * original) return false;
  candidate /= remaining;
  return true;
}

ThinSvd jacobi_svd(const Eigen::MatrixXd& m, int max_sweeps, double tol) {
  if (!m.allFinite()) throw NumericalError("svd: non-finite input");
  if (m.rows() >= m.cols()) return jacobi_tall(m, max_sweeps, tol);
  ThinSvd t = jacobi_tall(m.transpose(), max_sweeps, tol);
  std::swap(t.u, t.v);
  return t;
}

}  // namespace SSAC_ABI
}  // namespace ssac
