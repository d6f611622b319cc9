#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace slc {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Incompatible tensor shapes passed to an operator.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation requested in a state that does not support it (e.g. eval-mode
/// batchnorm before any statistics were accumulated).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Violated precondition of an operation.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// True while gradient recording is enabled on this thread.
bool grad_enabled();

/// Disables graph recording for its lifetime (inference, optimizer updates).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

template <typename Scalar>
struct Node {
  Shape shape;
  Array<Scalar> value;
  Array<Scalar> grad;  // empty until the first gradient arrives
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Pushes this node's grad into the parents. Empty for leaves.
  std::function<void(const Array<Scalar>&)> backward;

  Array<Scalar>& grad_buffer() {
    if (grad.size() != value.size()) grad = Array<Scalar>::Zero(value.size());
    return grad;
  }
};

}  // namespace detail

/// Dense row-major n-d array participating in a reverse-mode graph.
///
/// Tensors are shared handles: copies refer to the same storage and graph
/// node. Use `clone()` for an independent copy.
template <typename Scalar>
class Tensor {
 public:
  using NodeType = detail::Node<Scalar>;
  using ArrayType = Array<Scalar>;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, ArrayType values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
  static Tensor from(Shape shape, std::initializer_list<Scalar> values,
                     bool requires_grad = false);
  static Tensor scalar(Scalar value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  Index dim(int axis) const;
  Index size() const { return node_->value.size(); }

  ArrayType& value() { return node_->value; }
  const ArrayType& value() const { return node_->value; }
  Scalar* data() { return node_->value.data(); }
  const Scalar* data() const { return node_->value.data(); }
  Scalar item() const;

  /// Element of a rank-4 tensor.
  Scalar& at(Index n, Index c, Index h, Index w);
  Scalar at(Index n, Index c, Index h, Index w) const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const ArrayType& grad() const;
  void zero_grad() { node_->grad.resize(0); }

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  /// calls; intermediate gradients are recomputed each sweep.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;
  Tensor reshape(Shape shape) const;

  const std::shared_ptr<NodeType>& node() const { return node_; }

  /// Builds an op output. `backward` receives the output gradient and
  /// accumulates into the inputs; it is dropped when no input needs a grad.
  static Tensor make_result(Shape shape, ArrayType value,
                            std::vector<Tensor> inputs,
                            std::function<void(const ArrayType&)> backward);

 private:
  std::shared_ptr<NodeType> node_;
};

/// Accumulates `delta` into the gradient of `t` if it tracks one.
template <typename Scalar, typename Expr>
inline void accumulate_grad(const Tensor<Scalar>& t, const Expr& delta) {
  if (t.requires_grad()) t.node()->grad_buffer() += delta;
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace slc
