#pragma once

// Minimal reverse-mode automatic differentiation over dense float64 tensors.
//
// A Tape records operations in insertion order; backward() walks the tape in
// reverse exactly once. Gradients of intermediate nodes are released as soon
// as they have been propagated unless the node was registered with
// Tape::retain_grad(). Leaves bound with Tape::watch() receive their gradient
// in the bound Tensor after backward().

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ostr::ad {

using Shape = std::vector<std::size_t>;
using NodeId = std::size_t;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class TapeError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Dense n-dimensional value with an optional gradient of the same shape.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<double>& data() const noexcept { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  bool has_grad() const noexcept { return grad_.has_value(); }
  std::span<const double> grad() const;
  void set_grad(std::vector<double> g);
  void clear_grad() noexcept { grad_.reset(); }

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool r) noexcept { requires_grad_ = r; }

  std::optional<NodeId> node_id() const noexcept { return node_id_; }
  void set_node_id(std::optional<NodeId> id) noexcept { node_id_ = id; }

  // Same shape and bit-identical values.
  bool same_values(const Tensor& other) const;

private:
  Shape shape_;
  std::vector<double> values_;
  std::optional<std::vector<double>> grad_;
  bool requires_grad_ = false;
  std::optional<NodeId> node_id_;
};

class Tape;

/// Handle to a node on a Tape.
class Var {
public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const;
  NodeId id() const noexcept { return id_; }

  const Shape& shape() const;
  std::size_t size() const;
  std::span<const double> value() const;
  // Throws TapeError if backward() has not populated this node's gradient.
  std::span<const double> grad() const;
  bool has_grad() const;
  double item() const;
  Tensor to_tensor() const;

private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Accessors handed to a node's local-gradient rule.
class BackwardContext {
public:
  BackwardContext(Tape& tape, NodeId node) : tape_(tape), node_(node) {}

  std::span<const double> output() const;
  std::span<const double> output_grad() const;
  std::span<const double> input(std::size_t i) const;
  const Shape& input_shape(std::size_t i) const;
  bool needs_grad(std::size_t i) const;
  // Zero-initialised on first access; rules accumulate into it.
  std::span<double> input_grad(std::size_t i);

private:
  Tape& tape_;
  NodeId node_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Leaf whose gradient is written back into `t` after backward(). `t` must
  // outlive the backward pass.
  Var watch(Tensor& t);

  // Registers an intermediate node so its gradient survives backward().
  void retain_grad(Var v);

  void backward(Var loss);
  bool backward_done() const noexcept { return backward_done_; }
  void reset();

  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by operation implementations.
  Var record(std::string_view op, Shape shape, std::vector<double> value,
             std::vector<NodeId> inputs, BackwardFn rule);

private:
  friend class Var;
  friend class BackwardContext;

  struct Node {
    std::string_view op;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<NodeId> inputs;
    BackwardFn rule;
    bool requires_grad = false;
    bool retain = false;
    bool leaf = false;
    Tensor* bound = nullptr;
  };

  Node& node(NodeId id);
  const Node& node(NodeId id) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Operations. Every operation validates shapes (ShapeError naming the
// operation and operand shapes) and rejects non-finite outputs (NumericError).

// Elementwise sum. `b` may also match a trailing suffix of `a`'s shape, in
// which case it is broadcast over the leading dimensions.
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var matmul(Var a, Var b);
// x: [N, Cin, H, W], kernel: [Cout, Cin, k, k] with odd k; stride 1, zero padding k/2.
Var conv2d(Var x, Var kernel);
// 3x3 window, stride 1, zero padding, divides by 9 including padded zeros.
Var avg_pool3x3(Var x);
Var relu(Var x);
// Per-channel standardisation over (N, H, W) with biased batch variance.
Var batch_standardize(Var x, double eps = 1e-5);
Var softmax(Var x, std::size_t axis);
Var mean(Var x);
Var sum(Var x);
// [N, C, H, W] -> [N, C]
Var global_avg_pool(Var x);
// Mean cross-entropy of logits [N, K] against class indices.
Var cross_entropy(Var logits, std::span<const int> labels);
// sum_i weights[i, column] * features[i]; features share one shape.
Var weighted_sum(std::span<const Var> features, Var weights, std::size_t column);

// Softmax of a plain tensor along `axis`; the same kernel backs softmax().
Tensor softmax_values(const Tensor& x, std::size_t axis);

// Max over coordinates of |analytic - central difference| / (1 + |central difference|).
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps = 1e-5);

} // namespace ostr::ad
