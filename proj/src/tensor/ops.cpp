#include "ssac/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>

#include "ssac/errors.hpp"
#include "ssac/linalg.hpp"

namespace ssac {
inline namespace SSAC_ABI {

namespace {

using detail::grad_buffer;
using detail::TensorNode;
using Inputs = std::span<TensorNode* const>;

using ColMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMap = Eigen::Map<ColMat>;
using CColMap = Eigen::Map<const ColMat>;
using RowMap = Eigen::Map<RowMat>;
using CRowMap = Eigen::Map<const RowMat>;
using Ix = Eigen::Index;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(x.shape()));
  }
}

template <class F>
Tensor unary(const Tensor& x, F&& f, Tape::BackwardFn fn) {
  auto in = x.data();
  Buffer out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_op_result(x.shape(), std::move(out), {x}, std::move(fn));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto x = a.data(), y = b.data();
  Buffer out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](TensorNode& o, Inputs in) {
    for (auto* node : in) {
      if (Real* g = grad_buffer(*node)) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto x = a.data(), y = b.data();
  Buffer out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](TensorNode& o, Inputs in) {
    if (Real* g = grad_buffer(*in[0])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
    if (Real* g = grad_buffer(*in[1])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto x = a.data(), y = b.data();
  Buffer out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](TensorNode& o, Inputs in) {
    const auto& xv = in[0]->data;
    const auto& yv = in[1]->data;
    if (Real* g = grad_buffer(*in[0])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * yv[i];
    }
    if (Real* g = grad_buffer(*in[1])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * xv[i];
    }
  });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, Real(-1)); }

Tensor add_scalar(const Tensor& x, Real s) {
  return unary(x, [s](Real v) { return v + s; }, [](TensorNode& o, Inputs in) {
    if (Real* g = grad_buffer(*in[0])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor mul_scalar(const Tensor& x, Real s) {
  return unary(x, [s](Real v) { return v * s; }, [s](TensorNode& o, Inputs in) {
    if (Real* g = grad_buffer(*in[0])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * s;
    }
  });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](Real v) { return std::exp(v); }, [](TensorNode& o, Inputs in) {
    if (Real* g = grad_buffer(*in[0])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * o.data[i];
    }
  });
}

Tensor log(const Tensor& x) {
  for (Real v : x.data()) {
    if (!(v > Real(0))) throw NumericalError("log: non-positive input");
  }
  return unary(x, [](Real v) { return std::log(v); }, [](TensorNode& o, Inputs in) {
    if (Real* g = grad_buffer(*in[0])) {
      const auto& xv = in[0]->data;
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] / xv[i];
    }
  });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](Real v) { return v > Real(0) ? v : Real(0); }, [](TensorNode& o, Inputs in) {
    if (Real* g = grad_buffer(*in[0])) {
      Real* __restrict gx = g;
      const Real* __restrict xv = in[0]->data.data();
      const Real* __restrict go = o.grad.data();
      const std::size_t n = o.grad.size();
      for (std::size_t i = 0; i < n; ++i) gx[i] += xv[i] > Real(0) ? go[i] : Real(0);
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  const std::size_t c = bias.dim(0);
  if (x.shape().back() != c) {
    throw DimensionError("add_bias: last extent of " + shape_str(x.shape()) + " vs bias " + shape_str(bias.shape()));
  }
  auto xv = x.data();
  auto bv = bias.data();
  Buffer out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] + bv[i % c];
  return make_op_result(x.shape(), std::move(out), {x, bias}, [c](TensorNode& o, Inputs in) {
    if (Real* g = grad_buffer(*in[0])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
    if (Real* g = grad_buffer(*in[1])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % c] += o.grad[i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Buffer out(x.data().begin(), x.data().end());
  return make_op_result(std::move(shape), std::move(out), {x}, [](TensorNode& o, Inputs in) {
    if (Real* g = grad_buffer(*in[0])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto xv = x.data();
  Buffer out(xv.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  return make_op_result({c, r}, std::move(out), {x}, [r, c](TensorNode& o, Inputs in) {
    if (Real* g = grad_buffer(*in[0])) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range");
  Shape shape = first;
  shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) throw DimensionError("concat: incompatible " + shape_str(s) + " vs " + shape_str(first));
    shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t row = shape[axis] * inner;

  Buffer out(shape_numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t chunk = p.dim(axis) * inner;
    auto pv = p.data();
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(pv.begin() + o * chunk, chunk, out.begin() + o * row + offset);
    offsets.push_back(offset);
    offset += chunk;
  }
  return make_op_result(shape, std::move(out), parts, [offsets, outer, row](TensorNode& o, Inputs in) {
    for (std::size_t k = 0; k < in.size(); ++k) {
      Real* g = grad_buffer(*in[k]);
      if (!g) continue;
      const std::size_t chunk = in[k]->data.size() / outer;
      for (std::size_t r = 0; r < outer; ++r)
        for (std::size_t i = 0; i < chunk; ++i) g[r * chunk + i] += o.grad[r * row + offsets[k] + i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (Real v : x.data()) acc += v;
  return make_op_result({1}, {static_cast<Real>(acc)}, {x}, [](TensorNode& o, Inputs in) {
    if (Real* g = grad_buffer(*in[0])) {
      for (std::size_t i = 0; i < in[0]->data.size(); ++i) g[i] += o.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (Real v : x.data()) acc += v;
  const auto n = static_cast<double>(x.numel());
  return make_op_result({1}, {static_cast<Real>(acc / n)}, {x}, [n](TensorNode& o, Inputs in) {
    if (Real* g = grad_buffer(*in[0])) {
      const Real share = static_cast<Real>(o.grad[0] / n);
      for (std::size_t i = 0; i < in[0]->data.size(); ++i) g[i] += share;
    }
  });
}

Tensor sum_last(const Tensor& x) {
  require_rank(x, 2, "sum_last");
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto xv = x.data();
  Buffer out(r);
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += xv[i * c + j];
    out[i] = static_cast<Real>(acc);
  }
  return make_op_result({r}, std::move(out), {x}, [r, c](TensorNode& o, Inputs in) {
    if (Real* g = grad_buffer(*in[0])) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[i];
    }
  });
}

Tensor l2norm_last(const Tensor& x) {
  require_rank(x, 2, "l2norm_last");
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto xv = x.data();
  Buffer out(r);
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += double(xv[i * c + j]) * double(xv[i * c + j]);
    out[i] = static_cast<Real>(std::sqrt(acc));
  }
  return make_op_result({r}, std::move(out), {x}, [r, c](TensorNode& o, Inputs in) {
    Real* g = grad_buffer(*in[0]);
    if (!g) return;
    const auto& xval = in[0]->data;
    for (std::size_t i = 0; i < r; ++i) {
      if (o.data[i] == Real(0)) continue;
      const Real scale = o.grad[i] / o.data[i];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += scale * xval[i * c + j];
    }
  });
}

Tensor min_last(const Tensor& x) {
  require_rank(x, 2, "min_last");
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto xv = x.data();
  Buffer out(r);
  std::vector<std::size_t> idx(r);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (xv[i * c + j] < xv[i * c + best]) best = j;
    }
    idx[i] = best;
    out[i] = xv[i * c + best];
  }
  return make_op_result({r}, std::move(out), {x}, [idx, c](TensorNode& o, Inputs in) {
    if (Real* g = grad_buffer(*in[0])) {
      for (std::size_t i = 0; i < idx.size(); ++i) g[i * c + idx[i]] += o.grad[i];
    }
  });
}

namespace {

template <class Better>
Tensor extreme_all(const Tensor& x, Better better) {
  auto xv = x.data();
  std::size_t best = 0;
  for (std::size_t i = 1; i < xv.size(); ++i) {
    if (better(xv[i], xv[best])) best = i;
  }
  return make_op_result({1}, {xv[best]}, {x}, [best](TensorNode& o, Inputs in) {
    if (Real* g = grad_buffer(*in[0])) g[best] += o.grad[0];
  });
}

}  // namespace

Tensor max_all(const Tensor& x) { return extreme_all(x, [](Real a, Real b) { return a > b; }); }

Tensor min_all(const Tensor& x) { return extreme_all(x, [](Real a, Real b) { return a < b; }); }

Tensor log_softmax_last(const Tensor& x) {
  require_rank(x, 2, "log_softmax_last");
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto xv = x.data();
  Buffer out(xv.size());
  for (std::size_t i = 0; i < r; ++i) {
    const Real* row = xv.data() + i * c;
    const Real top = *std::max_element(row, row + c);
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += std::exp(double(row[j] - top));
    const double lse = double(top) + std::log(acc);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = static_cast<Real>(double(row[j]) - lse);
  }
  return make_op_result(x.shape(), std::move(out), {x}, [r, c](TensorNode& o, Inputs in) {
    Real* g = grad_buffer(*in[0]);
    if (!g) return;
    for (std::size_t i = 0; i < r; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < c; ++j) gsum += o.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        const double p = std::exp(double(o.data[i * c + j]));
        g[i * c + j] += static_cast<Real>(o.grad[i * c + j] - p * gsum);
      }
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), n = a.dim(1), q = b.dim(1);
  if (b.dim(0) != n) {
    throw DimensionError("matmul: inner extents differ " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
  }
  Buffer out(m * q);
  RowMap(out.data(), Ix(m), Ix(q)).noalias() =
      CRowMap(a.data().data(), Ix(m), Ix(n)) * CRowMap(b.data().data(), Ix(n), Ix(q));
  return make_op_result({m, q}, std::move(out), {a, b}, [m, n, q](TensorNode& o, Inputs in) {
    CRowMap gout(o.grad.data(), Ix(m), Ix(q));
    if (Real* g = grad_buffer(*in[0])) {
      RowMap(g, Ix(m), Ix(n)).noalias() += gout * CRowMap(in[1]->data.data(), Ix(n), Ix(q)).transpose();
    }
    if (Real* g = grad_buffer(*in[1])) {
      RowMap(g, Ix(n), Ix(q)).noalias() += CRowMap(in[0]->data.data(), Ix(m), Ix(n)).transpose() * gout;
    }
  });
}

Tensor shared_mlp(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 3, "shared_mlp");
  require_rank(weight, 2, "shared_mlp");
  require_rank(bias, 1, "shared_mlp");
  const std::size_t bsz = x.dim(0), npts = x.dim(1), cin = x.dim(2);
  const std::size_t cout = weight.dim(1);
  if (weight.dim(0) != cin || bias.dim(0) != cout) {
    throw DimensionError("shared_mlp: channels " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()) +
                         " / bias " + shape_str(bias.shape()));
  }
  const Ix rows = Ix(bsz * npts);
  Buffer out(std::size_t(rows) * cout);
  // Column-major views: out^T = W^T x^T. The output-channel axis is the
  // vectorized one, so every point goes through the same instruction
  // sequence regardless of its position (exact permutation equivariance).
  ColMap ot(out.data(), Ix(cout), rows);
  ot.noalias() = CColMap(weight.data().data(), Ix(cout), Ix(cin)) * CColMap(x.data().data(), Ix(cin), rows);
  ot.colwise() += Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>(bias.data().data(), Ix(cout));

  return make_op_result({bsz, npts, cout}, std::move(out), {x, weight, bias},
                        [rows, cin, cout](TensorNode& o, Inputs in) {
                          CColMap gt(o.grad.data(), Ix(cout), rows);
                          if (Real* g = grad_buffer(*in[0])) {
                            ColMap(g, Ix(cin), rows).noalias() +=
                                CColMap(in[1]->data.data(), Ix(cout), Ix(cin)).transpose() * gt;
                          }
                          if (Real* g = grad_buffer(*in[1])) {
                            ColMap(g, Ix(cout), Ix(cin)).noalias() +=
                                gt * CColMap(in[0]->data.data(), Ix(cin), rows).transpose();
                          }
                          if (Real* g = grad_buffer(*in[2])) {
                            Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>>(g, Ix(cout)) += gt.rowwise().sum();
                          }
                        });
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode) {
  if (x.rank() < 2) throw DimensionError("batchnorm: rank >= 2 required, got " + shape_str(x.shape()));
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.numel() / c;
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &state.running_mean, &state.running_var}) {
    if (t->rank() != 1 || t->dim(0) != c) {
      throw DimensionError("batchnorm: parameter " + shape_str(t->shape()) + " vs channels " + std::to_string(c));
    }
  }
  if (mode == Mode::Train && rows < 2) {
    throw ContractError("batchnorm: degenerate batch (" + std::to_string(rows) + " positions) in train mode");
  }

  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  Buffer mu(c), inv(c);
  const double eps = state.epsilon;

  if (mode == Mode::Train) {
    std::vector<double> s1(c, 0.0), s2(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* row = xv.data() + r * c;
      for (std::size_t j = 0; j < c; ++j) s1[j] += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) s1[j] /= double(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* row = xv.data() + r * c;
      for (std::size_t j = 0; j < c; ++j) {
        const double d = double(row[j]) - s1[j];
        s2[j] += d * d;
      }
    }
    auto rm = state.running_mean.mutable_data();
    auto rv = state.running_var.mutable_data();
    const double mom = state.momentum;
    for (std::size_t j = 0; j < c; ++j) {
      const double var = s2[j] / double(rows);
      mu[j] = static_cast<Real>(s1[j]);
      inv[j] = static_cast<Real>(1.0 / std::sqrt(var + eps));
      rm[j] = static_cast<Real>((1.0 - mom) * rm[j] + mom * s1[j]);
      rv[j] = static_cast<Real>((1.0 - mom) * rv[j] + mom * (s2[j] / double(rows - 1)));
    }
  } else {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::size_t j = 0; j < c; ++j) {
      mu[j] = rm[j];
      inv[j] = static_cast<Real>(1.0 / std::sqrt(double(rv[j]) + eps));
    }
  }

  Buffer out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = xv.data() + r * c;
    Real* dst = out.data() + r * c;
    for (std::size_t j = 0; j < c; ++j) dst[j] = gv[j] * ((row[j] - mu[j]) * inv[j]) + bv[j];
  }

  const bool train = mode == Mode::Train;
  return make_op_result(x.shape(), std::move(out), {x, gamma, beta},
                        [mu = std::move(mu), inv = std::move(inv), rows, c, train](TensorNode& o, Inputs in) {
                          const auto& xval = in[0]->data;
                          const auto& gam = in[1]->data;
                          std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t j = 0; j < c; ++j) {
                              const double g = o.grad[r * c + j];
                              sum_g[j] += g;
                              sum_gx[j] += g * ((xval[r * c + j] - mu[j]) * inv[j]);
                            }
                          }
                          if (Real* gb = grad_buffer(*in[2])) {
                            for (std::size_t j = 0; j < c; ++j) gb[j] += static_cast<Real>(sum_g[j]);
                          }
                          if (Real* gg = grad_buffer(*in[1])) {
                            for (std::size_t j = 0; j < c; ++j) gg[j] += static_cast<Real>(sum_gx[j]);
                          }
                          Real* gx = grad_buffer(*in[0]);
                          if (!gx) return;
                          if (!train) {
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += o.grad[r * c + j] * gam[j] * inv[j];
                            return;
                          }
                          // dx = gamma*inv/R * (R*g - sum(g) - xhat*sum(g*xhat))
                          Buffer a(c), b(c), k(c);
                          for (std::size_t j = 0; j < c; ++j) {
                            k[j] = gam[j] * inv[j];
                            a[j] = static_cast<Real>(sum_g[j] / double(rows));
                            b[j] = static_cast<Real>(sum_gx[j] / double(rows));
                          }
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t j = 0; j < c; ++j) {
                              const Real xhat = (xval[r * c + j] - mu[j]) * inv[j];
                              gx[r * c + j] += k[j] * (o.grad[r * c + j] - a[j] - xhat * b[j]);
                            }
                          }
                        });
}

Tensor maxpool_points(const Tensor& x) {
  require_rank(x, 3, "maxpool_points");
  const std::size_t bsz = x.dim(0), npts = x.dim(1), c = x.dim(2);
  auto xv = x.data();
  Buffer out(bsz * c);
  std::vector<std::uint32_t> arg(bsz * c, 0);
  for (std::size_t b = 0; b < bsz; ++b) {
    const Real* base = xv.data() + b * npts * c;
    Real* dst = out.data() + b * c;
    std::copy_n(base, c, dst);
    std::uint32_t* idx = arg.data() + b * c;
    for (std::size_t n = 1; n < npts; ++n) {
      const Real* row = base + n * c;
      for (std::size_t j = 0; j < c; ++j) {
        if (row[j] > dst[j]) {
          dst[j] = row[j];
          idx[j] = static_cast<std::uint32_t>(n);
        }
      }
    }
  }
  return make_op_result({bsz, c}, std::move(out), {x}, [arg = std::move(arg), npts, c](TensorNode& o, Inputs in) {
    Real* g = grad_buffer(*in[0]);
    if (!g) return;
    for (std::size_t i = 0; i < arg.size(); ++i) {
      const std::size_t b = i / c, j = i % c;
      g[(b * npts + arg[i]) * c + j] += o.grad[i];
    }
  });
}

Tensor linear_solve_spd(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "linear_solve_spd");
  require_rank(b, 2, "linear_solve_spd");
  const std::size_t k = a.dim(0), q = b.dim(1);
  if (a.dim(1) != k || b.dim(0) != k) {
    throw DimensionError("linear_solve_spd: " + shape_str(a.shape()) + " \\ " + shape_str(b.shape()));
  }
  Eigen::MatrixXd am = CRowMap(a.data().data(), Ix(k), Ix(k)).cast<double>();
  const Eigen::MatrixXd sym = 0.5 * (am + am.transpose());
  auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(sym);
  if (llt->info() != Eigen::Success) throw NumericalError("linear_solve_spd: matrix is not positive definite");
  const Eigen::MatrixXd xm = llt->solve(CRowMap(b.data().data(), Ix(k), Ix(q)).cast<double>());
  if (!xm.allFinite()) throw NumericalError("linear_solve_spd: non-finite solution");

  Buffer out(k * q);
  RowMap(out.data(), Ix(k), Ix(q)) = xm.cast<Real>();
  return make_op_result({k, q}, std::move(out), {a, b}, [llt, xm, k, q](TensorNode& o, Inputs in) {
    const Eigen::MatrixXd gx = CRowMap(o.grad.data(), Ix(k), Ix(q)).cast<double>();
    const Eigen::MatrixXd gb = llt->solve(gx);
    if (Real* g = grad_buffer(*in[1])) RowMap(g, Ix(k), Ix(q)) += gb.cast<Real>();
    if (Real* g = grad_buffer(*in[0])) {
      const Eigen::MatrixXd outer = gb * xm.transpose();
      RowMap(g, Ix(k), Ix(k)) += (-0.5 * (outer + outer.transpose())).cast<Real>();
    }
  });
}

Tensor gram_projection(const Tensor& z, const Tensor& w, Real ridge) {
  require_rank(z, 2, "gram_projection");
  require_rank(w, 2, "gram_projection");
  const std::size_t rows = z.dim(0), p = z.dim(1), k = w.dim(1);
  if (w.dim(0) != p) throw DimensionError("gram_projection: " + shape_str(z.shape()) + " onto " + shape_str(w.shape()));
  const Eigen::MatrixXd zt = CRowMap(z.data().data(), Ix(rows), Ix(p)).cast<double>().transpose();  // p x B
  const Eigen::MatrixXd wm = CRowMap(w.data().data(), Ix(p), Ix(k)).cast<double>();
  Eigen::MatrixXd gram = wm.transpose() * wm;
  gram.diagonal().array() += double(ridge);
  auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(gram);
  if (llt->info() != Eigen::Success) throw NumericalError("gram_projection: Gram matrix is not positive definite");
  Eigen::MatrixXd coeffs = llt->solve(wm.transpose() * zt);  // k x B
  if (!coeffs.allFinite()) throw NumericalError("gram_projection: non-finite coefficients");

  Buffer out(rows * p);
  RowMap(out.data(), Ix(rows), Ix(p)) = (wm * coeffs).transpose().cast<Real>();
  return make_op_result({rows, p}, std::move(out), {z, w},
                        [llt, zt, wm, coeffs, rows, p, k](TensorNode& o, Inputs in) {
                          const Eigen::MatrixXd h = CRowMap(o.grad.data(), Ix(rows), Ix(p)).cast<double>().transpose();
                          const Eigen::MatrixXd s = llt->solve(wm.transpose() * h);  // k x B
                          if (Real* g = grad_buffer(*in[0])) {
                            RowMap(g, Ix(rows), Ix(p)) += (wm * s).transpose().cast<Real>();
                          }
                          if (Real* g = grad_buffer(*in[1])) {
                            const Eigen::MatrixXd cs = coeffs * s.transpose();
                            const Eigen::MatrixXd gw =
                                h * coeffs.transpose() + zt * s.transpose() - wm * (cs + cs.transpose());
                            RowMap(g, Ix(p), Ix(k)) += gw.cast<Real>();
                          }
                        });
}

SvdResult svd(const Tensor& m) {
  require_rank(m, 2, "svd");
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  const Eigen::MatrixXd md = CRowMap(m.data().data(), Ix(rows), Ix(cols)).cast<double>();
  const ThinSvd t = jacobi_svd(md);
  const auto r = static_cast<std::size_t>(t.s.size());
  auto to_tensor = [](const Eigen::MatrixXd& src) {
    Buffer data(std::size_t(src.size()));
    RowMap(data.data(), src.rows(), src.cols()) = src.cast<Real>();
    return Tensor::from_data({std::size_t(src.rows()), std::size_t(src.cols())}, std::move(data));
  };
  Buffer s(r);
  for (std::size_t i = 0; i < r; ++i) s[i] = static_cast<Real>(t.s(Ix(i)));
  return {to_tensor(t.u), Tensor::from_data({r}, std::move(s)), to_tensor(t.v)};
}

}  // namespace SSAC_ABI
}  // namespace ssac
