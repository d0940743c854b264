#pragma once

// Candidate operations placed on every cell edge (the NAS-Bench-201 vocabulary).

#include "ostr/autodiff.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace ostr {

enum class OpKind { none, skip_connect, avg_pool_3x3, conv_1x1, conv_3x3 };

std::string_view op_name(OpKind kind);
// Throws std::invalid_argument for unknown names.
OpKind parse_op_kind(std::string_view name);
bool is_parametric(OpKind kind);

struct CandidateOp {
  OpKind kind = OpKind::none;
  std::size_t channels = 0;
  // Convolutions own one [C, C, k, k] kernel; other kinds are empty.
  std::vector<ad::Tensor> weights;
};

CandidateOp make_op(OpKind kind, std::size_t channels);

// Uniform(-b, b) with b = sqrt(1 / fan_in); no-op for parameter-free kinds.
void init_weights(CandidateOp& op, std::uint64_t seed);
void init_kernel(ad::Tensor& kernel, std::uint64_t seed);
double init_bound(std::size_t fan_in);

// Output has x's shape [N, C, H, W]. Convolutions compute ReLU -> conv -> batch
// standardisation. With `trainable` the kernels are watched on x's tape and
// receive gradients on backward; otherwise they enter as constants.
ad::Var apply(CandidateOp& op, ad::Var x, bool trainable);
ad::Var apply(const CandidateOp& op, ad::Var x);

} // namespace ostr
