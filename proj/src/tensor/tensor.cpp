#include "ssac/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "ssac/errors.hpp"

namespace ssac {
inline namespace SSAC_ABI {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

Real* grad_buffer(TensorNode& node) {
  if (!node.requires_grad) return nullptr;
  if (node.grad.size() != node.data.size()) node.grad.assign(node.data.size(), Real(0));
  return node.grad.data();
}

}  // namespace detail

namespace {

thread_local Tape* g_active_tape = nullptr;

void check_shape(const Shape& shape) {
  for (auto extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), Real(0), requires_grad); }

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  check_shape(shape);
  auto node = std::make_shared<detail::TensorNode>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_data(Shape shape, const std::vector<Real>& data, bool requires_grad) {
  return from_data(std::move(shape), Buffer(data.begin(), data.end()), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::initializer_list<Real> data, bool requires_grad) {
  return from_data(std::move(shape), Buffer(data), requires_grad);
}

Tensor Tensor::from_data(Shape shape, Buffer data, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(Real value, bool requires_grad) { return from_data({1}, {value}, requires_grad); }

detail::TensorNode& Tensor::node() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return node().data.size(); }

std::span<const Real> Tensor::data() const { return node().data; }

std::span<Real> Tensor::mutable_data() { return node().data; }

Real Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node().data[0];
}

Real Tensor::at(std::size_t i) const { return node().data.at(i); }

Real Tensor::at(std::size_t i, std::size_t j) const {
  const auto& s = shape();
  if (s.size() != 2 || i >= s[0] || j >= s[1]) throw DimensionError("bad 2-D index into " + shape_str(s));
  return node().data[i * s[1] + j];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<const Real> Tensor::grad() const { return node().grad; }

std::span<Real> Tensor::mutable_grad() { return node().grad; }

void Tensor::zero_grad() {
  auto& n = node();
  if (n.requires_grad) n.grad.assign(n.data.size(), Real(0));
}

void Tensor::clear_grad() {
  auto& n = node();
  n.grad.clear();
  n.grad.shrink_to_fit();
}

Tensor Tensor::detach(bool requires_grad) const { return from_data(shape(), node().data, requires_grad); }

void Tape::record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn fn) {
  Entry entry;
  entry.output = output.node_;
  entry.inputs.reserve(inputs.size());
  for (auto& in : inputs) entry.inputs.push_back(in.node_);
  entry.backward = std::move(fn);
  output.node_->taped = true;
  entries_.push_back(std::move(entry));
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() noexcept { return g_active_tape; }

Tensor make_op_result(Shape shape, Buffer data, std::vector<Tensor> inputs, Tape::BackwardFn fn) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(data));
  Tape* tape = g_active_tape;
  if (!tape) return out;
  const bool needs_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!needs_grad) return out;
  out.node_->requires_grad = true;
  tape->record(out, std::move(inputs), std::move(fn));
  return out;
}

void backward(const Tensor& loss, Tape& tape) {
  if (loss.numel() != 1) throw ContractError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  auto& loss_node = loss.node();
  if (!loss_node.requires_grad) throw ContractError("backward() on a loss that does not require grad");

  if (!loss_node.taped) {
    // The loss is itself a leaf.
    detail::grad_buffer(loss_node)[0] += Real(1);
    return;
  }

  auto& entries = tape.entries_;
  std::size_t end = entries.size();
  while (end > 0 && entries[end - 1].output.get() != &loss_node) --end;
  if (end == 0) throw ContractError("backward(): loss was not recorded on this tape");

  // Scratch gradients of taped results are allocated on first contribution
  // and released as soon as the producing entry has been processed.
  for (std::size_t i = 0; i < end; ++i) entries[i].output->grad.clear();
  detail::grad_buffer(loss_node)[0] = Real(1);

  std::vector<detail::TensorNode*> inputs;
  for (std::size_t i = end; i-- > 0;) {
    auto& entry = entries[i];
    if (entry.output->grad.empty()) continue;
    inputs.clear();
    for (auto& in : entry.inputs) inputs.push_back(in.get());
    entry.backward(*entry.output, inputs);
    entry.output->grad.clear();
    entry.output->grad.shrink_to_fit();
  }
}

}  // namespace SSAC_ABI
}  // namespace ssac
