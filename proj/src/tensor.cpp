#include "pt/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "pt/errors.hpp"

namespace pt {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  for (std::size_t d : shape)
    if (d == 0) fail(ErrorKind::Dimension, "zero extent in shape " + pt::to_string(shape));
  if (pt::numel(shape) != data.size())
    fail(ErrorKind::Dimension, "shape " + pt::to_string(shape) + " does not match " +
                                   std::to_string(data.size()) + " values");
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = pt::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = pt::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_node(NodePtr node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
std::size_t Tensor<T>::dim(std::ptrdiff_t axis) const {
  const auto r = static_cast<std::ptrdiff_t>(rank());
  const std::ptrdiff_t a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    fail(ErrorKind::Dimension, "axis " + std::to_string(axis) + " out of range for shape " +
                                   to_string(shape()));
  return node_->shape[static_cast<std::size_t>(a)];
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1)
    fail(ErrorKind::Contract, "item() on non-scalar tensor of shape " + to_string(shape()));
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) fail(ErrorKind::Index, "index rank mismatch");
  std::size_t flat = 0;
  std::size_t i = 0;
  for (std::size_t v : index) {
    if (v >= node_->shape[i]) fail(ErrorKind::Index, "index out of range");
    flat = flat * node_->shape[i] + v;
    ++i;
  }
  return node_->data[flat];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
  if (!node_->leaf) fail(ErrorKind::Contract, "requires_grad can only be set on leaf tensors");
  node_->requires_grad = value;
  if (!value) node_->grad.clear();
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_->requires_grad) node_->grad.assign(node_->data.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

template <typename T>
Tape<T>*& Tape<T>::active_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

template <typename T>
Tape<T>* Tape<T>::active() {
  return active_slot();
}

template <typename T>
void Tape<T>::record(std::string_view op, std::vector<NodePtr> inputs, NodePtr output,
                     BackwardFn backward) {
  entries_.push_back(Entry{op, std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1)
    fail(ErrorKind::Contract, "backward requires a scalar loss, got shape " +
                                  (loss.defined() ? to_string(loss.shape()) : "undefined"));
  const auto* target = loss.node().get();
  std::ptrdiff_t last = -1;
  for (std::size_t i = entries_.size(); i-- > 0;) {
    if (entries_[i].output.get() == target) {
      last = static_cast<std::ptrdiff_t>(i);
      break;
    }
  }
  if (last < 0) {
    if (loss.is_leaf() && loss.requires_grad()) {
      loss.node()->ensure_grad();
      loss.node()->grad[0] += T(1);
      return;
    }
    fail(ErrorKind::Contract, "loss tensor is not on the tape");
  }
  for (std::ptrdiff_t i = 0; i <= last; ++i) {
    auto& out = *entries_[static_cast<std::size_t>(i)].output;
    out.grad.assign(out.data.size(), T(0));
  }
  entries_[static_cast<std::size_t>(last)].output->grad[0] = T(1);
  for (std::ptrdiff_t i = last; i >= 0; --i) {
    const Entry& e = entries_[static_cast<std::size_t>(i)];
    const auto& g = e.output->grad;
    if (std::all_of(g.begin(), g.end(), [](T v) { return v == T(0); })) continue;
    for (const auto& in : e.inputs)
      if (in->requires_grad) in->ensure_grad();
    e.backward();
  }
}

template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) fail(ErrorKind::Contract, "backward called without an active tape");
  tape->backward(loss);
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace pt
