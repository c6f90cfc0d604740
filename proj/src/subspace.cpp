#include "ssac/subspace.hpp"

#include <algorithm>
#include <cmath>

#include "ssac/errors.hpp"
#include "ssac/linalg.hpp"
#include "ssac/random.hpp"

namespace ssac {
inline namespace SSAC_ABI {

Subspace Subspace::clone() const {
  Subspace c;
  if (basis.defined()) c.basis = basis.detach(true);
  c.bias = bias.detach(true);
  c.class_id = class_id;
  return c;
}

std::size_t SubspaceSet::p() const {
  if (subspaces.empty()) throw ContractError("empty subspace set");
  return subspaces.front().p();
}

std::size_t SubspaceSet::k() const {
  if (subspaces.empty()) throw ContractError("empty subspace set");
  return subspaces.front().k();
}

void SubspaceSet::validate() const {
  if (subspaces.empty()) throw ContractError("subspace set has no classes");
  const std::size_t pp = p(), kk = k();
  for (std::size_t c = 0; c < subspaces.size(); ++c) {
    const auto& s = subspaces[c];
    if (s.class_id != int(c)) throw ContractError("subspace set: class ids must be 0..C-1 in order");
    if (s.bias.rank() != 1 || s.p() != pp || s.k() != kk) throw DimensionError("subspace set: inconsistent p or k");
    if (s.basis.defined() && (s.basis.rank() != 2 || s.basis.dim(0) != pp)) {
      throw DimensionError("subspace set: basis shape " + shape_str(s.basis.shape()));
    }
  }
}

std::vector<Tensor> SubspaceSet::learnable() const {
  std::vector<Tensor> out;
  for (const auto& s : subspaces) {
    if (s.basis.defined()) out.push_back(s.basis);
    out.push_back(s.bias);
  }
  return out;
}

std::size_t SubspaceSet::learnable_count() const {
  std::size_t n = 0;
  for (const auto& t : learnable()) n += t.numel();
  return n;
}

SubspaceSet SubspaceSet::clone() const {
  SubspaceSet c;
  c.form = form;
  for (const auto& s : subspaces) c.subspaces.push_back(s.clone());
  return c;
}

SubspaceSet SubspaceSet::random(std::size_t classes, std::size_t p, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  const double sd = 1.0 / std::sqrt(double(p));
  SubspaceSet set;
  for (std::size_t c = 0; c < classes; ++c) {
    Subspace s;
    s.class_id = int(c);
    if (k > 0) {
      std::vector<Real> w(p * k);
      for (auto& v : w) v = static_cast<Real>(sd * normal(rng));
      s.basis = Tensor::from_data({p, k}, std::move(w), true);
    }
    std::vector<Real> b(p);
    for (auto& v : b) v = static_cast<Real>(sd * normal(rng));
    s.bias = Tensor::from_data({p}, std::move(b), true);
    set.subspaces.push_back(std::move(s));
  }
  return set;
}

namespace {

Tensor as_matrix(const Tensor& f, std::size_t p) {
  if (f.rank() == 1 && f.dim(0) == p) return reshape(f, {1, p});
  if (f.rank() == 2 && f.dim(1) == p) return f;
  throw DimensionError("subspace: representation " + shape_str(f.shape()) + " vs p = " + std::to_string(p));
}

// Projection of the centered rows z[B x p] onto span(W), as [B x p].
Tensor project_centered(const Tensor& z, const Tensor& basis) { return gram_projection(z, basis, kGramRidge); }

}  // namespace

Tensor project(const Tensor& f, const Subspace& s) {
  const std::size_t p = s.p();
  const Tensor fm = as_matrix(f, p);
  Tensor out;
  if (s.k() == 0) {
    out = Tensor::zeros(fm.shape());
  } else {
    out = project_centered(add_bias(fm, neg(s.bias)), s.basis);
  }
  return f.rank() == 1 ? reshape(out, {p}) : out;
}

Tensor distance(const Tensor& f, const Subspace& s, DistanceForm form) {
  const std::size_t p = s.p();
  const Tensor fm = as_matrix(f, p);
  const Tensor z = add_bias(fm, neg(s.bias));
  Tensor residual;
  if (s.k() == 0) {
    residual = form == DistanceForm::Centered ? z : fm;
  } else {
    const Tensor proj = project_centered(z, s.basis);
    residual = sub(form == DistanceForm::Centered ? z : fm, proj);
  }
  return l2norm_last(residual);
}

Tensor distances(const Tensor& features, const SubspaceSet& set) {
  set.validate();
  const Tensor fm = as_matrix(features, set.p());
  const std::size_t batch = fm.dim(0);
  std::vector<Tensor> columns;
  columns.reserve(set.classes());
  for (const auto& s : set.subspaces) columns.push_back(reshape(distance(fm, s, set.form), {batch, 1}));
  return concat(columns, 1);
}

Real anomaly_score(std::span<const Real> d) {
  if (d.empty()) throw ContractError("anomaly_score: empty distance vector");
  return *std::min_element(d.begin(), d.end());
}

std::vector<Real> class_probabilities(std::span<const Real> d) {
  if (d.empty()) throw ContractError("class_probabilities: empty distance vector");
  const double shift = *std::min_element(d.begin(), d.end());
  std::vector<double> e(d.size());
  double total = 0.0;
  for (std::size_t c = 0; c < d.size(); ++c) total += e[c] = std::exp(-(double(d[c]) - shift));
  std::vector<Real> out(d.size());
  for (std::size_t c = 0; c < d.size(); ++c) out[c] = static_cast<Real>(e[c] / total);
  return out;
}

int classify(std::span<const Real> d) {
  if (d.empty()) throw ContractError("classify: empty distance vector");
  return int(std::min_element(d.begin(), d.end()) - d.begin());
}

SubspaceSet svd_initialize(const std::vector<Tensor>& representations_by_class, std::size_t k, std::uint64_t seed) {
  if (representations_by_class.empty()) throw ContractError("svd_initialize: no classes");
  const std::size_t p = representations_by_class.front().dim(1);
  if (k > p) throw ContractError("svd_initialize: k exceeds p");

  SubspaceSet set;
  for (std::size_t c = 0; c < representations_by_class.size(); ++c) {
    const Tensor& reps = representations_by_class[c];
    if (!reps.defined()) throw ContractError("svd_initialize: class " + std::to_string(c) + " has no samples");
    if (reps.rank() != 2 || reps.dim(1) != p) {
      throw DimensionError("svd_initialize: class " + std::to_string(c) + " representations " + shape_str(reps.shape()));
    }
    const std::size_t m = reps.dim(0);
    Eigen::MatrixXd f(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < p; ++j) f(Eigen::Index(i), Eigen::Index(j)) = reps.data()[i * p + j];
    const Eigen::VectorXd center = f.colwise().mean().transpose();
    f.rowwise() -= center.transpose();

    Subspace s;
    s.class_id = int(c);
    std::vector<Real> b(p);
    for (std::size_t j = 0; j < p; ++j) b[j] = static_cast<Real>(center(Eigen::Index(j)));
    s.bias = Tensor::from_data({p}, std::move(b), true);

    if (k > 0) {
      const ThinSvd t = jacobi_svd(f);
      Eigen::Index rank = 0;
      const double top = t.s.size() ? t.s(0) : 0.0;
      while (rank < t.s.size() && t.s(rank) > 0.0 && t.s(rank) > 1e-6 * top) ++rank;

      Eigen::MatrixXd w(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k));
      const Eigen::Index keep = std::min<Eigen::Index>(rank, Eigen::Index(k));
      w.leftCols(keep) = t.v.leftCols(keep);
      Rng rng(derive_seed(seed, c));
      for (Eigen::Index j = keep; j < Eigen::Index(k);) {
        Eigen::VectorXd cand(static_cast<Eigen::Index>(p));
        for (auto& v : cand) v = normal(rng);
        if (orthonormalize_against(w, j, cand)) w.col(j++) = cand;
      }
      std::vector<Real> wd(p * k);
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < k; ++j) wd[i * k + j] = static_cast<Real>(w(Eigen::Index(i), Eigen::Index(j)));
      s.basis = Tensor::from_data({p, k}, std::move(wd), true);
    }
    set.subspaces.push_back(std::move(s));
  }
  return set;
}

}  // namespace SSAC_ABI
}  // namespace ssac
