#pragma once

#include <span>
#include <vector>

#include "ssac/ops.hpp"

namespace ssac {
inline namespace SSAC_ABI {

/// Ridge added to W^T W before the Gram solve.
inline constexpr Real kGramRidge = Real(1e-6);

enum class DistanceForm {
  /// ||(f - b) - P(f - b)||: distance to the affine subspace b + span(W).
  Centered,
  /// ||f - P(f - b)||, the uncentered variant, kept for comparison runs.
  Literal,
};

/// Affine class subspace b + span(W). k = 0 leaves `basis` undefined and the
/// subspace is the single point b.
struct Subspace {
  Tensor basis;  // p x k
  Tensor bias;   // p
  int class_id = 0;

  std::size_t k() const { return basis.defined() ? basis.dim(1) : 0; }
  std::size_t p() const { return bias.dim(0); }
  Subspace clone() const;
};

struct SubspaceSet {
  std::vector<Subspace> subspaces;  // indexed by class_id
  DistanceForm form = DistanceForm::Centered;

  std::size_t classes() const { return subspaces.size(); }
  std::size_t p() const;
  std::size_t k() const;
  void validate() const;
  std::vector<Tensor> learnable() const;
  std::size_t learnable_count() const;
  SubspaceSet clone() const;

  /// Gaussian bases (variance 1/p) and biases; used when no SVD warm start runs.
  static SubspaceSet random(std::size_t classes, std::size_t p, std::size_t k, std::uint64_t seed);
};

/// P(f - b) with P = W (W^T W + ridge I)^-1 W^T. `f` is [p] or [B x p]; the
/// result has the same shape.
Tensor project(const Tensor& f, const Subspace& s);

/// Residual norm per representation: a scalar [1] for f[p], [B] for f[B x p].
Tensor distance(const Tensor& f, const Subspace& s, DistanceForm form = DistanceForm::Centered);

/// d[i, c] for F[B x p]; columns follow class_id order.
Tensor distances(const Tensor& features, const SubspaceSet& set);

/// Minimum distance over classes.
Real anomaly_score(std::span<const Real> d);
/// softmax(-d), max-shift stabilized.
std::vector<Real> class_probabilities(std::span<const Real> d);
/// Nearest subspace; ties go to the lowest class id.
int classify(std::span<const Real> d);

/// Per class: b = mean representation, W = leading right singular vectors of
/// the centered stack. Missing directions (rank < k) are filled with random
/// Gaussian vectors orthonormalized against the ones found.
SubspaceSet svd_initialize(const std::vector<Tensor>& representations_by_class, std::size_t k,
                           std::uint64_t seed);

}  // namespace SSAC_ABI
}  // namespace ssac
