#pragma once

// Dense tensors with a reverse-mode tape.
//
// A Tensor is a shared handle onto a node holding shape, values and (when
// requires_grad) a gradient accumulator. Operations record themselves on the
// thread's active Tape, if one is installed with TapeScope; without an active
// tape nothing is recorded and no gradient memory is touched, which is the
// inference path.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pt {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool leaf = true;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  static Tensor from_node(NodePtr node);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  /// Extent of `axis`; negative axes count from the end.
  std::size_t dim(std::ptrdiff_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  /// Empty until a gradient has been accumulated.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad();

  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value);
  bool is_leaf() const { return node_->leaf; }
  void zero_grad();

  /// Value copy with no gradient and no tape history.
  Tensor detach() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Ordered record of differentiable operations. Backward replays the recorded
/// rules in reverse order, seeding the loss with 1. Leaf gradients accumulate
/// across calls; intermediate gradients are reset on every call.
template <typename T>
class Tape {
 public:
  using NodePtr = std::shared_ptr<detail::Node<T>>;
  using BackwardFn = std::function<void()>;

  void record(std::string_view op, std::vector<NodePtr> inputs, NodePtr output,
              BackwardFn backward);
  void backward(const Tensor<T>& loss);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  std::string_view op_name(std::size_t i) const { return entries_[i].op; }

  /// Tape installed on this thread, or nullptr.
  static Tape* active();

 private:
  template <typename>
  friend class TapeScope;
  static Tape*& active_slot();

  struct Entry {
    std::string_view op;
    std::vector<NodePtr> inputs;
    NodePtr output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
};

/// Installs a tape on the current thread for the lifetime of the scope.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(Tape<T>::active_slot()) {
    Tape<T>::active_slot() = &tape;
  }
  ~TapeScope() { Tape<T>::active_slot() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Convenience: backward on the active tape.
template <typename T>
void backward(const Tensor<T>& loss);

/// Builds an op output and, if any input needs a gradient and a tape is active,
/// records `make_backward(out_node)` as its backward rule. This is the
/// extension point every differentiable op goes through.
template <typename T, typename MakeBackward>
Tensor<T> record_op(std::string_view name, std::initializer_list<const Tensor<T>*> inputs,
                    Shape shape, std::vector<T> values, MakeBackward&& make_backward) {
  auto out = std::make_shared<detail::Node<T>>();
  out->shape = std::move(shape);
  out->data = std::move(values);
  Tape<T>* tape = Tape<T>::active();
  bool needs = false;
  if (tape != nullptr)
    for (const Tensor<T>* in : inputs) needs = needs || in->requires_grad();
  if (needs) {
    out->requires_grad = true;
    out->leaf = false;
    std::vector<typename Tape<T>::NodePtr> nodes;
    nodes.reserve(inputs.size());
    for (const Tensor<T>* in : inputs) nodes.push_back(in->node());
    tape->record(name, std::move(nodes), out, make_backward(out.get()));
  }
  return Tensor<T>::from_node(std::move(out));
}

/// Same as record_op for ops with a variable number of inputs.
template <typename T, typename MakeBackward>
Tensor<T> record_op_n(std::string_view name, const std::vector<Tensor<T>>& inputs, Shape shape,
                      std::vector<T> values, MakeBackward&& make_backward) {
  auto out = std::make_shared<detail::Node<T>>();
  out->shape = std::move(shape);
  out->data = std::move(values);
  Tape<T>* tape = Tape<T>::active();
  bool needs = false;
  if (tape != nullptr)
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    out->requires_grad = true;
    out->leaf = false;
    std::vector<typename Tape<T>::NodePtr> nodes;
    for (const auto& in : inputs) nodes.push_back(in.node());
    tape->record(name, std::move(nodes), out, make_backward(out.get()));
  }
  return Tensor<T>::from_node(std::move(out));
}

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t, bool requires_grad = false) {
  std::vector<To> values(t.data().begin(), t.data().end());
  return Tensor<To>(t.shape(), std::move(values), requires_grad);
}

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace pt
