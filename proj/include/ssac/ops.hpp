#pragma once

#include <span>
#include <vector>

#include "ssac/tensor.hpp"

namespace ssac {
inline namespace SSAC_ABI {

// Elementwise (identical shapes; no broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor add_scalar(const Tensor& x, Real s);
Tensor mul_scalar(const Tensor& x, Real s);
Tensor exp(const Tensor& x);
/// Natural log; inputs must be strictly positive.
Tensor log(const Tensor& x);
/// max(x, 0); the subgradient at 0 is 0.
Tensor relu(const Tensor& x);

/// x[..., c] + bias[c], bias repeated along every leading index.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);
/// Concatenation along `axis`; all other extents must agree.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

// Reductions. "last" variants reduce the trailing axis of a 2-D tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_last(const Tensor& x);
Tensor l2norm_last(const Tensor& x);
Tensor min_last(const Tensor& x);
/// Global extremum as a scalar; ties route the gradient to the first index.
Tensor max_all(const Tensor& x);
Tensor min_all(const Tensor& x);
/// Row-wise log-softmax of a 2-D tensor, max-shift stabilized.
Tensor log_softmax_last(const Tensor& x);

/// a[m x n] . b[n x q]
Tensor matmul(const Tensor& a, const Tensor& b);

/// Pointwise affine map over x[B x N x c_in]: the same weight[c_in x c_out]
/// and bias[c_out] applied to every point (a 1x1 convolution).
Tensor shared_mlp(const Tensor& x, const Tensor& weight, const Tensor& bias);

enum class Mode { Train, Eval };

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  Real momentum = Real(0.1);
  Real epsilon = Real(1e-5);
};

/// Per-channel normalization of x[B x N x c] (or x[R x c]) over all leading
/// positions. Train mode uses batch statistics and updates the running
/// statistics in `state` (unbiased variance); eval mode uses the running
/// statistics.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode);

/// Channel-wise max over the point axis of x[B x N x c] -> [B x c].
Tensor maxpool_points(const Tensor& x);

/// Solves sym(A) X = B by Cholesky, where sym(A) = (A + A^T)/2.
/// Differentiable through both arguments.
Tensor linear_solve_spd(const Tensor& a, const Tensor& b);

/// Rows of z[B x p] projected onto span(W), W[p x k]:
/// (W (W^T W + ridge I)^-1 W^T z_i^T)^T. Evaluated in double precision as one
/// fused op; differentiable through z and W.
Tensor gram_projection(const Tensor& z, const Tensor& w, Real ridge);

struct SvdResult {
  Tensor u;  // m x r
  Tensor s;  // r, non-increasing
  Tensor v;  // p x r
};

/// Thin SVD by one-sided Jacobi (computed in double). Not differentiable.
SvdResult svd(const Tensor& m);

}  // namespace SSAC_ABI
}  // namespace ssac
