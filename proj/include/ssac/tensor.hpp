#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "ssac/core.hpp"

namespace ssac {
inline namespace SSAC_ABI {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);

/// Allocator with 64-byte alignment. Eigen's vectorized reductions peel
/// leading elements up to the first aligned address, so the summation order
/// (and the rounding) would otherwise depend on where the heap placed a
/// buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<Real, AlignedAllocator<Real>>;
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode {
  Shape shape;
  Buffer data;
  // Persistent for leaves; scratch (released after backward) for taped results.
  Buffer grad;
  bool requires_grad = false;
  bool taped = false;
};

/// Gradient buffer of `node`, zero-allocated on first use. Null when the node
/// does not take gradients.
Real* grad_buffer(TensorNode& node);

}  // namespace detail

/// Dense row-major array of reals with an optional gradient slot.
///
/// A Tensor is a cheap shared handle. Values are treated as immutable once an
/// op has consumed them; the only sanctioned in-place writers are optimizers
/// and batch-norm running statistics, both of which act on leaves.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from_data(Shape shape, Buffer data, bool requires_grad = false);
  static Tensor from_data(Shape shape, const std::vector<Real>& data, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::initializer_list<Real> data, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const Real> data() const;
  std::span<Real> mutable_data();
  Real item() const;
  Real at(std::size_t i) const;
  Real at(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad();
  /// Allocates (or resets) a zero gradient. No effect unless requires_grad.
  void zero_grad();
  void clear_grad();

  /// Value copy detached from any tape.
  Tensor detach(bool requires_grad = false) const;

  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }
  detail::TensorNode& node() const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend class Tape;
  friend Tensor make_op_result(Shape, Buffer, std::vector<Tensor>,
                               std::function<void(detail::TensorNode&,
                                                  std::span<detail::TensorNode* const>)>);
};

/// Define-by-run record of differentiable operations. Entries are appended in
/// execution order, which is a topological order of the computation graph.
class Tape {
 public:
  using BackwardFn =
      std::function<void(detail::TensorNode& output, std::span<detail::TensorNode* const> inputs)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn fn);
  std::size_t size() const noexcept { return entries_.size(); }
  void clear() noexcept { entries_.clear(); }

 private:
  struct Entry {
    std::shared_ptr<detail::TensorNode> output;
    std::vector<std::shared_ptr<detail::TensorNode>> inputs;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;

  friend void backward(const Tensor& loss, Tape& tape);
};

/// Makes `tape` the recording target for the current thread while in scope.
/// Ops executed with no active tape are not recorded.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape() noexcept;

/// Builds an op result and, when any input takes gradients and a tape is
/// active, records `fn` as its backward rule.
Tensor make_op_result(Shape shape, Buffer data, std::vector<Tensor> inputs,
                      Tape::BackwardFn fn);

/// Reverse sweep from a scalar `loss`. Leaf gradients accumulate across calls.
void backward(const Tensor& loss, Tape& tape);

}  // namespace SSAC_ABI
}  // namespace ssac
