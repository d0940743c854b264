#include "ostr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ostr::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor: empty shape");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_string(shape));
  }
}

} // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  values_.assign(numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_shape(shape_);
  if (values_.size() != numel(shape_)) {
    throw ShapeError("tensor: " + std::to_string(values_.size()) +
                     " values do not fill shape " + shape_string(shape_));
  }
}

std::span<const double> Tensor::grad() const {
  if (!grad_) throw TapeError("tensor: gradient not populated");
  return *grad_;
}

void Tensor::set_grad(std::vector<double> g) {
  if (g.size() != values_.size()) {
    throw ShapeError("tensor: gradient size " + std::to_string(g.size()) +
                     " does not match shape " + shape_string(shape_));
  }
  grad_ = std::move(g);
}

bool Tensor::same_values(const Tensor& other) const {
  return shape_ == other.shape_ && values_ == other.values_;
}

// ---------------------------------------------------------------------------

Tape& Var::tape() const {
  if (!tape_) throw TapeError("var: not attached to a tape");
  return *tape_;
}

const Shape& Var::shape() const { return tape().node(id_).shape; }
std::size_t Var::size() const { return tape().node(id_).value.size(); }
std::span<const double> Var::value() const { return tape().node(id_).value; }

bool Var::has_grad() const { return !tape().node(id_).grad.empty(); }

std::span<const double> Var::grad() const {
  const auto& n = tape().node(id_);
  if (n.grad.empty()) {
    throw TapeError(std::string("var: gradient of '") + std::string(n.op) +
                    "' node not populated (run backward first; intermediates need retain_grad)");
  }
  return n.grad;
}

double Var::item() const {
  const auto& n = tape().node(id_);
  if (n.value.size() != 1) throw ShapeError("item: tensor of shape " + shape_string(n.shape) + " is not scalar");
  return n.value[0];
}

Tensor Var::to_tensor() const {
  const auto& n = tape().node(id_);
  return Tensor(n.shape, n.value);
}

// ---------------------------------------------------------------------------

std::span<const double> BackwardContext::output() const { return tape_.node(node_).value; }
std::span<const double> BackwardContext::output_grad() const { return tape_.node(node_).grad; }

std::span<const double> BackwardContext::input(std::size_t i) const {
  return tape_.node(tape_.node(node_).inputs.at(i)).value;
}

const Shape& BackwardContext::input_shape(std::size_t i) const {
  return tape_.node(tape_.node(node_).inputs.at(i)).shape;
}

bool BackwardContext::needs_grad(std::size_t i) const {
  return tape_.node(tape_.node(node_).inputs.at(i)).requires_grad;
}

std::span<double> BackwardContext::input_grad(std::size_t i) {
  auto& in = tape_.node(tape_.node(node_).inputs.at(i));
  if (in.grad.empty()) in.grad.assign(in.value.size(), 0.0);
  return in.grad;
}

// ---------------------------------------------------------------------------

Tape::Node& Tape::node(NodeId id) {
  if (id >= nodes_.size()) throw TapeError("tape: unknown node " + std::to_string(id));
  return nodes_[id];
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id >= nodes_.size()) throw TapeError("tape: unknown node " + std::to_string(id));
  return nodes_[id];
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.shape = value.shape();
  n.value.assign(value.values().begin(), value.values().end());
  n.leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  Var v = constant(std::move(value));
  auto& n = nodes_.back();
  n.op = "variable";
  n.requires_grad = true;
  return v;
}

Var Tape::watch(Tensor& t) {
  Node n;
  n.op = "parameter";
  n.shape = t.shape();
  n.value.assign(t.values().begin(), t.values().end());
  n.leaf = true;
  n.requires_grad = true;
  n.bound = &t;
  nodes_.push_back(std::move(n));
  t.set_node_id(nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

void Tape::retain_grad(Var v) {
  if (&v.tape() != this) throw TapeError("retain_grad: var belongs to another tape");
  node(v.id()).retain = true;
}

Var Tape::record(std::string_view op, Shape shape, std::vector<double> value,
                 std::vector<NodeId> inputs, BackwardFn rule) {
  if (backward_done_) throw TapeError(std::string(op) + ": tape already consumed by backward; reset first");
  if (value.size() != numel(shape)) {
    throw ShapeError(std::string(op) + ": output size does not match " + shape_string(shape));
  }
  for (double v : value) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite output (numeric instability)");
  }
  Node n;
  n.op = op;
  n.shape = std::move(shape);
  n.value = std::move(value);
  for (auto id : inputs) n.requires_grad = n.requires_grad || node(id).requires_grad;
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.rule = std::move(rule);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw TapeError("backward: loss belongs to another tape");
  if (backward_done_) throw TapeError("backward: called twice without tape reset");
  auto& root = node(loss.id());
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_string(root.shape));
  }
  backward_done_ = true;
  if (root.requires_grad) {
    root.grad.assign(1, 1.0);
    for (NodeId id = loss.id() + 1; id-- > 0;) {
      auto& n = nodes_[id];
      if (n.grad.empty() || !n.requires_grad) continue;
      if (n.rule) {
        BackwardContext ctx(*this, id);
        n.rule(ctx);
      }
      if (!n.leaf && !n.retain) {
        // nodes_ may not be reallocated during backward, so `n` is still valid.
        std::vector<double>().swap(n.grad);
      }
    }
  }
  for (auto& n : nodes_) {
    if (!n.bound) continue;
    if (n.grad.empty()) {
      n.bound->set_grad(std::vector<double>(n.value.size(), 0.0));
    } else {
      n.bound->set_grad(n.grad);
    }
  }
}

void Tape::reset() {
  for (auto& n : nodes_) {
    if (n.bound) n.bound->set_node_id(std::nullopt);
  }
  nodes_.clear();
  backward_done_ = false;
}

} // namespace ostr::ad
