#pragma once

#include <span>
#include <vector>

#include "ssac/tensor.hpp"

namespace ssac {
inline namespace SSAC_ABI {

enum class Reduction { Sum, Mean };

struct LossConfig {
  Real lambda = Real(1);
  Real m_near = Real(0);
  Real m_far = Real(1);
  Reduction ce_reduction = Reduction::Sum;

  void validate() const;
};

/// Batch distance matrix d[B x C] with class-index labels (the one-hot rows
/// are implied).
struct BatchDistances {
  Tensor d;
  std::vector<int> labels;

  void validate() const;
};

struct LossParts {
  Tensor total;
  Tensor ce;
  Tensor pos;   // undefined when the deviation terms are skipped
  Tensor neg;
  Tensor ineq;
};

/// -sum_i log softmax(-d_i)[y_i] (or the batch mean).
Tensor cross_entropy(const Tensor& d, std::span<const int> labels, Reduction reduction = Reduction::Sum);

struct SplitDistances {
  Tensor own;      // d-bar: distance to the labeled subspace, [B]
  Tensor nearest;  // d-tilde: minimum distance to any other subspace, [B]
};
SplitDistances split_distances(const BatchDistances& batch);

/// max(max_i own_i - m_near, 0)
Tensor pos_loss(const Tensor& own, Real m_near);
/// max(m_far - min_i nearest_i, 0)
Tensor neg_loss(const Tensor& nearest, Real m_far);
/// max(max_i own_i - min_i nearest_i, 0)
Tensor ineq_loss(const Tensor& own, const Tensor& nearest);

/// ce + lambda*pos + lambda*neg + lambda*ineq, summed in that order. With
/// lambda == 0 the deviation terms are not evaluated at all.
LossParts total_loss(const BatchDistances& batch, const LossConfig& cfg);

}  // namespace SSAC_ABI
}  // namespace ssac
