#include "uaopose/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "uaopose/errors.hpp"

namespace uaopose::ad {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {
  for (auto d : shape_)
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_)
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape_));
  if (shape_size(shape_) != data_.size())
    throw ShapeError("shape " + shape_str(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
}

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw ShapeError("empty matrix literal");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(*this);
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size())
    throw ContractError("Var does not belong to this tape");
  return nodes_[v.id()];
}

Tape::Node& Tape::node(Var v) {
  if (v.tape() != this || v.id() >= nodes_.size())
    throw ContractError("Var does not belong to this tape");
  return nodes_[v.id()];
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("non-finite value in leaf tensor");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::vector<Var> inputs, BackwardRule rule) {
  if (!value.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op);
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    const Node& src = node(in);  // validates ownership
    n.inputs.push_back(in.id());
    n.requires_grad = n.requires_grad || src.requires_grad;
  }
  if (n.requires_grad) n.rule = std::move(rule);
  nodes_.push_back(std::move(n));
  ++op_count_;
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

const Tensor* Tape::grad(Var v) const {
  const Node& n = node(v);
  return n.has_grad ? &n.grad : nullptr;
}

void Tape::zero_grad() {
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
}

void Tape::rewind(std::size_t node_count) {
  if (node_count > nodes_.size()) throw ContractError("rewind past the end of the tape");
  nodes_.erase(nodes_.begin() + static_cast<std::ptrdiff_t>(node_count), nodes_.end());
  op_count_ = 0;
  for (const auto& n : nodes_)
    if (!n.inputs.empty() || n.rule) ++op_count_;
  relu_pattern_.clear();
  backward_invocations_ = 0;
}

void Tape::note_relu_signs(std::span<const double> input) {
  for (double v : input) relu_pattern_.push_back(v > 0.0 ? 1 : 0);
}

void Tape::backward(Var loss) {
  Node& root = node(loss);
  if (root.value.size() != 1)
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(root.value.shape()));
  backward_invocations_ = 0;
  if (!root.requires_grad) return;

  // Intermediate gradients are per-sweep; only leaves accumulate across calls.
  for (auto& n : nodes_) {
    if (!n.inputs.empty() || n.rule) {
      n.has_grad = false;
      n.grad = Tensor();
    }
  }

  auto ensure_grad = [](Node& n) -> Tensor& {
    if (!n.has_grad) {
      n.grad = Tensor::zeros(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  };
  ensure_grad(root)[0] += 1.0;

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.rule || !n.has_grad) continue;
    std::vector<const Tensor*> ins;
    std::vector<Tensor*> in_grads;
    ins.reserve(n.inputs.size());
    in_grads.reserve(n.inputs.size());
    for (std::size_t idx : n.inputs) {
      // Operands always precede their consumer.
      if (idx >= i) throw ContractError("tape order violated");
      Node& src = nodes_[idx];
      ins.push_back(&src.value);
      in_grads.push_back(src.requires_grad ? &ensure_grad(src) : nullptr);
    }
    n.rule(BackwardContext(n.grad, n.value, std::move(ins), std::move(in_grads)));
    ++backward_invocations_;
  }
}

}  // namespace uaopose::ad
