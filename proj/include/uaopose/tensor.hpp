#pragma once

// Dense float64 tensors and a reverse-mode tape.
//
// A Tensor is a plain value (shape + row-major data). Differentiable
// computation happens on a Tape: leaves and operation results live in the
// tape's node list and are referred to through lightweight Var handles.
// Nodes are appended in evaluation order, so the node list is always a
// topological order and backward() is a single reverse sweep.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace uaopose::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value) { return Tensor({}, {value}); }
  // 2-D convenience: Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& vec() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_.back() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }
  double item() const;

  bool all_finite() const noexcept;
  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// View handed to a backward rule. Input gradients are null for inputs that do
// not require a gradient; rules must skip those.
class BackwardContext {
 public:
  const Tensor& grad_out;
  const Tensor& output;
  const Tensor& input(std::size_t i) const { return *inputs_[i]; }
  Tensor* input_grad(std::size_t i) const { return input_grads_[i]; }

  BackwardContext(const Tensor& g, const Tensor& out, std::vector<const Tensor*> in,
                  std::vector<Tensor*> in_grads)
      : grad_out(g), output(out), inputs_(std::move(in)), input_grads_(std::move(in_grads)) {}

 private:
  std::vector<const Tensor*> inputs_;
  std::vector<Tensor*> input_grads_;
};

using BackwardRule = std::function<void(const BackwardContext&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Appends an operation result. Throws NumericError if value holds NaN/Inf.
  Var record(const char* op, Tensor value, std::vector<Var> inputs, BackwardRule rule);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  // Accumulated gradient, or nullptr if the node never received one.
  const Tensor* grad(Var v) const;

  // Accumulates d(loss)/d(node) into every requires_grad node reachable from
  // loss. Calling twice without zero_grad() accumulates.
  void backward(Var loss);
  void zero_grad();

  // Drops every node recorded after the first `node_count` ones. Vars that
  // referred to dropped nodes become invalid. Lets a caller bind fixed inputs
  // once and re-record the rest of a graph per iteration.
  void rewind(std::size_t node_count);

  std::size_t node_count() const noexcept { return nodes_.size(); }
  // Number of operation (non-leaf) nodes recorded so far.
  std::size_t op_count() const noexcept { return op_count_; }
  // Backward rules invoked by the most recent backward().
  std::size_t backward_invocations() const noexcept { return backward_invocations_; }

  // Sign pattern (input > 0) of every relu evaluated on this tape, in order.
  // Finite-difference checks compare these to detect kink crossings.
  const std::vector<std::uint8_t>& relu_pattern() const noexcept { return relu_pattern_; }
  void note_relu_signs(std::span<const double> input);

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    bool has_grad = false;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardRule rule;
    const char* op = "leaf";
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::deque<Node> nodes_;  // deque: references from value() survive later appends
  std::size_t op_count_ = 0;
  std::size_t backward_invocations_ = 0;
  std::vector<std::uint8_t> relu_pattern_;
};

// ---------------------------------------------------------------------------
// Operators. All operands must live on the same tape.
//
// Binary elementwise ops accept either equal shapes or a right operand whose
// shape is a suffix of the left operand's shape (e.g. a bias [C] against
// activations [N, C], or a scalar against anything).

// RowInvariant evaluates every output row with the same instruction sequence,
// so permuting the rows of a permutes the result bit for bit. Blocked uses
// the faster cache-blocked product, whose edge rows may round differently.
enum class MatmulKernel { Blocked, RowInvariant };

Var matmul(Var a, Var b, MatmulKernel kernel = MatmulKernel::Blocked);  // [m,k] x [k,n]
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var shift(Var x, double offset);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var gelu(Var x);
Var relu(Var x);
Var exp(Var x);
// Gradient at exactly 0 is taken as 0 (the minimum-norm subgradient of a norm).
Var sqrt(Var x);
Var sum(Var x);
Var mean(Var x);
Var sum_last(Var x);  // reduces the last axis
Var reshape(Var x, Shape shape);
Var transpose(Var x, std::size_t axis_a = 0, std::size_t axis_b = 1);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var concat(const std::vector<Var>& parts, std::size_t axis);

// Value copy with no path back to x.
Var detach(Var x);
// clamp via lo + relu(x - lo) - relu(x - hi); gradient 1 inside, 0 outside.
Var clamp(Var x, double lo, double hi);

double gelu_value(double x);

}  // namespace uaopose::ad
