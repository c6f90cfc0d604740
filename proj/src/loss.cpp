#include "ssac/loss.hpp"

#include <algorithm>

#include "ssac/errors.hpp"
#include "ssac/ops.hpp"

namespace ssac {
inline namespace SSAC_ABI {

void LossConfig::validate() const {
  if (!(lambda >= 0)) throw ContractError("loss: lambda must be >= 0");
  if (!(m_near >= 0) || !(m_far > m_near)) throw ContractError("loss: margins must satisfy m_far > m_near >= 0");
}

void BatchDistances::validate() const {
  if (d.rank() != 2) throw DimensionError("loss: distances must be B x C, got " + shape_str(d.shape()));
  if (labels.size() != d.dim(0)) throw DimensionError("loss: label count does not match batch size");
  for (int y : labels) {
    if (y < 0 || std::size_t(y) >= d.dim(1)) throw ContractError("loss: label " + std::to_string(y) + " out of range");
  }
}

namespace {

Tensor one_hot(std::span<const int> labels, std::size_t classes, Real on, Real off) {
  std::vector<Real> data(labels.size() * classes, off);
  for (std::size_t i = 0; i < labels.size(); ++i) data[i * classes + std::size_t(labels[i])] = on;
  return Tensor::from_data({labels.size(), classes}, std::move(data));
}

}  // namespace

Tensor cross_entropy(const Tensor& d, std::span<const int> labels, Reduction reduction) {
  BatchDistances check{d, {labels.begin(), labels.end()}};
  check.validate();
  const Tensor logp = log_softmax_last(neg(d));
  const Tensor picked = sum_last(mul(logp, one_hot(labels, d.dim(1), Real(1), Real(0))));
  const Tensor total = neg(sum(picked));
  return reduction == Reduction::Sum ? total : mul_scalar(total, Real(1) / Real(labels.size()));
}

SplitDistances split_distances(const BatchDistances& batch) {
  batch.validate();
  const std::size_t classes = batch.d.dim(1);
  if (classes < 2) throw ContractError("split_distances: needs at least two classes");
  SplitDistances out;
  out.own = sum_last(mul(batch.d, one_hot(batch.labels, classes, Real(1), Real(0))));
  // Push the labeled column out of contention before the row minimum. The
  // offset is added, so the own column never receives gradient.
  Real big = Real(1);
  for (Real v : batch.d.data()) big = std::max(big, v);
  out.nearest = min_last(add(batch.d, one_hot(batch.labels, classes, Real(4) * big + Real(1), Real(0))));
  return out;
}

Tensor pos_loss(const Tensor& own, Real m_near) { return relu(add_scalar(max_all(own), -m_near)); }

Tensor neg_loss(const Tensor& nearest, Real m_far) { return relu(add_scalar(neg(min_all(nearest)), m_far)); }

Tensor ineq_loss(const Tensor& own, const Tensor& nearest) { return relu(sub(max_all(own), min_all(nearest))); }

LossParts total_loss(const BatchDistances& batch, const LossConfig& cfg) {
  cfg.validate();
  LossParts parts;
  parts.ce = cross_entropy(batch.d, batch.labels, cfg.ce_reduction);
  if (cfg.lambda == Real(0)) {
    parts.total = parts.ce;
    return parts;
  }
  const auto split = split_distances(batch);
  parts.pos = pos_loss(split.own, cfg.m_near);
  parts.neg = neg_loss(split.nearest, cfg.m_far);
  parts.ineq = ineq_loss(split.own, split.nearest);
  parts.total = add(add(add(parts.ce, mul_scalar(parts.pos, cfg.lambda)), mul_scalar(parts.neg, cfg.lambda)),
                    mul_scalar(parts.ineq, cfg.lambda));
  return parts;
}

}  // namespace SSAC_ABI
}  // namespace ssac
