#include "slc/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace slc {

namespace {
thread_local bool g_grad_enabled = true;
}

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, bool requires_grad)
    : Tensor(shape, ArrayType::Zero(numel(shape)), requires_grad) {}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, ArrayType values, bool requires_grad)
    : node_(std::make_shared<NodeType>()) {
  for (Index d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (values.size() != numel(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     to_string(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::zeros(Shape shape, bool requires_grad) {
  return Tensor(std::move(shape), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::ones(Shape shape, bool requires_grad) {
  return full(std::move(shape), Scalar(1), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::full(Shape shape, Scalar value, bool requires_grad) {
  const Index n = numel(shape);
  return Tensor(std::move(shape), ArrayType::Constant(n, value), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from(Shape shape, std::initializer_list<Scalar> values,
                                    bool requires_grad) {
  ArrayType a(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar v : values) a[i++] = v;
  return Tensor(std::move(shape), std::move(a), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::scalar(Scalar value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

template <typename Scalar>
Index Tensor<Scalar>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range for shape " + to_string(shape()));
  return node_->shape[static_cast<std::size_t>(axis)];
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar tensor " + to_string(shape()));
  return node_->value[0];
}

template <typename Scalar>
Scalar& Tensor<Scalar>::at(Index n, Index c, Index h, Index w) {
  const Shape& s = node_->shape;
  return node_->value[((n * s[1] + c) * s[2] + h) * s[3] + w];
}

template <typename Scalar>
Scalar Tensor<Scalar>::at(Index n, Index c, Index h, Index w) const {
  const Shape& s = node_->shape;
  return node_->value[((n * s[1] + c) * s[2] + h) * s[3] + w];
}

template <typename Scalar>
Tensor<Scalar>& Tensor<Scalar>::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

template <typename Scalar>
const typename Tensor<Scalar>::ArrayType& Tensor<Scalar>::grad() const {
  if (!has_grad()) throw StateError("tensor has no gradient; run backward() first");
  return node_->grad;
}

template <typename Scalar>
void Tensor<Scalar>::backward() const {
  if (!defined() || size() != 1) {
    throw ContractError("backward() requires a scalar loss, got " +
                        (defined() ? to_string(shape()) : std::string("undefined")));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<NodeType*> order;
  std::unordered_set<NodeType*> seen;
  std::vector<std::pair<NodeType*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeType* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeType* n : order) {
    if (n->backward) n->grad.resize(0);
  }
  node_->grad_buffer() += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeType* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(n->grad);
  }
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
  Tensor out;
  out.node_ = std::make_shared<NodeType>();
  out.node_->shape = node_->shape;
  out.node_->value = node_->value;
  return out;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::clone() const {
  Tensor out = detach();
  out.node_->requires_grad = node_->requires_grad;
  return out;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::reshape(Shape shape) const {
  if (numel(shape) != size()) {
    throw ShapeError("cannot reshape " + to_string(this->shape()) + " to " + to_string(shape));
  }
  Tensor self = *this;
  return make_result(std::move(shape), node_->value, {self},
                     [self](const ArrayType& g) { accumulate_grad(self, g); });
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::make_result(Shape shape, ArrayType value,
                                           std::vector<Tensor> inputs,
                                           std::function<void(const ArrayType&)> backward) {
  Tensor out(std::move(shape), std::move(value));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const Tensor& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  for (const Tensor& in : inputs) {
    if (in.requires_grad()) out.node_->parents.push_back(in.node_);
  }
  out.node_->backward = std::move(backward);
  return out;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace slc
