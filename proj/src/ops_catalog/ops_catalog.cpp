#include "ostr/ops_catalog.hpp"

#include "ostr/rng.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ostr {

namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 5> kNames{{
    {OpKind::none, "none"},
    {OpKind::skip_connect, "skip_connect"},
    {OpKind::avg_pool_3x3, "avg_pool_3x3"},
    {OpKind::conv_1x1, "conv_1x1"},
    {OpKind::conv_3x3, "conv_3x3"},
}};

std::size_t kernel_size(OpKind kind) { return kind == OpKind::conv_3x3 ? 3 : 1; }

ad::Var apply_impl(const CandidateOp& op, ad::Var x, ad::Var kernel) {
  switch (op.kind) {
  case OpKind::none:
    return x.tape().constant(ad::Tensor(x.shape(), 0.0));
  case OpKind::skip_connect:
    return x;
  case OpKind::avg_pool_3x3:
    return ad::avg_pool3x3(x);
  case OpKind::conv_1x1:
  case OpKind::conv_3x3:
    return ad::batch_standardize(ad::conv2d(ad::relu(x), kernel));
  }
  throw std::logic_error("apply: unhandled op kind");
}

void check_input(const CandidateOp& op, ad::Var x) {
  const auto& s = x.shape();
  if (s.size() != 4) throw ad::ShapeError("apply(" + std::string(op_name(op.kind)) + "): expected [N, C, H, W], got " + ad::shape_string(s));
  if (s[1] != op.channels) {
    throw ad::ShapeError("apply(" + std::string(op_name(op.kind)) + "): input has " + std::to_string(s[1]) +
                         " channels, op expects " + std::to_string(op.channels));
  }
  if (is_parametric(op.kind)) {
    const std::size_t k = kernel_size(op.kind);
    if (op.weights.size() != 1 || op.weights[0].shape() != ad::Shape{op.channels, op.channels, k, k}) {
      throw ad::ShapeError("apply(" + std::string(op_name(op.kind)) + "): kernel does not match " +
                           std::to_string(op.channels) + " channels");
    }
  }
}

} // namespace

std::string_view op_name(OpKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  throw std::invalid_argument("op_name: invalid op kind");
}

OpKind parse_op_kind(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
  }
  throw std::invalid_argument("unknown operation kind '" + std::string(name) + "'");
}

bool is_parametric(OpKind kind) { return kind == OpKind::conv_1x1 || kind == OpKind::conv_3x3; }

CandidateOp make_op(OpKind kind, std::size_t channels) {
  if (channels == 0) throw std::invalid_argument("make_op: channels must be positive");
  CandidateOp op{kind, channels, {}};
  if (is_parametric(kind)) {
    const std::size_t k = kernel_size(kind);
    op.weights.emplace_back(ad::Shape{channels, channels, k, k}, 0.0);
  }
  return op;
}

double init_bound(std::size_t fan_in) { return std::sqrt(1.0 / static_cast<double>(fan_in)); }

void init_kernel(ad::Tensor& kernel, std::uint64_t seed) {
  const auto& s = kernel.shape();
  std::size_t fan_in = 1;
  for (std::size_t i = 1; i < s.size(); ++i) fan_in *= s[i];
  const double b = init_bound(fan_in);
  Rng rng = make_rng(seed, 0x6b65726eULL);
  std::uniform_real_distribution<double> dist(-b, b);
  for (auto& v : kernel.values()) v = dist(rng);
}

void init_weights(CandidateOp& op, std::uint64_t seed) {
  for (std::size_t i = 0; i < op.weights.size(); ++i) init_kernel(op.weights[i], derive_seed(seed, i));
}

ad::Var apply(CandidateOp& op, ad::Var x, bool trainable) {
  check_input(op, x);
  ad::Var kernel;
  if (is_parametric(op.kind)) {
    kernel = trainable ? x.tape().watch(op.weights[0]) : x.tape().constant(op.weights[0]);
  }
  return apply_impl(op, x, kernel);
}

ad::Var apply(const CandidateOp& op, ad::Var x) {
  check_input(op, x);
  ad::Var kernel;
  if (is_parametric(op.kind)) kernel = x.tape().constant(op.weights[0]);
  return apply_impl(op, x, kernel);
}

} // namespace ostr
