#pragma once

// Continuous relaxation of a cell search space and its discretisation.
//
// Network layout: stem (3x3 conv + batch standardisation) -> L stacked cells
// -> head (ReLU, global average pool, linear). Inside a cell, node 0 is the
// cell input, node j sums the outputs of its incoming edges, and the last
// node is the cell output. In the supernet every edge computes the mixture
// sum_o beta[o, e] * o(x_from) with beta = softmax(alpha) per column; alpha
// is one P x E matrix shared by all cells while convolution kernels are
// per cell.

#include "ostr/autodiff.hpp"
#include "ostr/matrix.hpp"
#include "ostr/ops_catalog.hpp"
#include "ostr/space.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace ostr {

struct ArchParams {
  ad::Tensor alpha; // [P, E]

  static ArchParams zeros(std::size_t ops, std::size_t edges);
  std::size_t ops() const { return alpha.shape()[0]; }
  std::size_t edges() const { return alpha.shape()[1]; }
  double at(std::size_t o, std::size_t e) const { return alpha[o * edges() + e]; }
  double& at(std::size_t o, std::size_t e) { return alpha[o * edges() + e]; }
};

// Column-wise softmax of alpha.
Matrix beta(const ArchParams& arch);

// Weights shared by the supernet and stand-alone networks.
struct NetworkBody {
  ad::Tensor stem;   // [C, C0, 3, 3]
  std::vector<std::vector<std::vector<CandidateOp>>> cells; // [cell][edge][slot]
  ad::Tensor head_w; // [C, K]
  ad::Tensor head_b; // [K]

  std::vector<ad::Tensor*> parameters();
  std::vector<const ad::Tensor*> parameters() const;
};

// Replaces the mixed output of one edge in one cell by a fixed feature.
struct Substitution {
  std::size_t cell = 0;
  std::size_t edge = 0;
  ad::Tensor feature;
};

struct PassOptions {
  bool backward = true;
  bool alpha_grad = true;   // alpha enters as a variable
  bool weight_grad = false; // kernels / head watched; gradients written into the net
  std::optional<Substitution> substitute;
};

struct EdgeFeatures {
  ad::Var mixed;            // registered: gradient retained after backward
  std::vector<ad::Var> ops; // per-candidate features o(x_from)
};

struct SupernetGraph {
  ad::Var alpha;
  ad::Var beta;
  ad::Var logits;
  ad::Var loss;
  std::vector<std::vector<EdgeFeatures>> edges; // [cell][edge]
};

/// A recorded supernet forward (and optionally backward) pass.
class SupernetPass {
public:
  SupernetPass(std::unique_ptr<ad::Tape> tape, SupernetGraph graph, Matrix beta);

  double loss() const { return graph_.loss.item(); }
  bool has_gradients() const { return tape_->backward_done(); }
  const Matrix& beta() const { return beta_; }
  std::size_t cells() const { return graph_.edges.size(); }
  std::size_t edges() const { return beta_.cols(); }
  std::size_t ops() const { return beta_.rows(); }

  // dL/dalpha; throws if backward was not run with alpha_grad.
  Matrix alpha_grad() const;
  std::span<const double> mixed(std::size_t cell, std::size_t edge) const;
  std::span<const double> mixed_grad(std::size_t cell, std::size_t edge) const;
  std::span<const double> op_feature(std::size_t cell, std::size_t edge, std::size_t op) const;
  const ad::Shape& feature_shape() const;
  std::span<const double> logits() const { return graph_.logits.value(); }

  const SupernetGraph& graph() const { return graph_; }

private:
  std::unique_ptr<ad::Tape> tape_;
  SupernetGraph graph_;
  Matrix beta_;
};

class Supernet {
public:
  // alpha = 0 (uniform beta); weights drawn per the op catalog rule from `seed`.
  static Supernet build(const SearchSpaceConfig& cfg, std::uint64_t seed);

  const SearchSpaceConfig& config() const noexcept { return config_; }
  const ArchParams& arch() const noexcept { return arch_; }
  ArchParams& arch() noexcept { return arch_; }
  const NetworkBody& body() const noexcept { return body_; }
  NetworkBody& body() noexcept { return body_; }

  // Records the forward pass on `tape`; with opts.weight_grad the network's
  // kernels receive gradients when the tape is run backward.
  SupernetGraph forward(ad::Tape& tape, const ad::Tensor& batch, std::span<const int> labels,
                        const PassOptions& opts);
  SupernetGraph forward(ad::Tape& tape, const ad::Tensor& batch, std::span<const int> labels,
                        const PassOptions& opts) const;

  // Read-only pass: weights enter as constants; the supernet is not modified.
  SupernetPass run(const ad::Tensor& batch, std::span<const int> labels, PassOptions opts = {}) const;
  // Pass that writes weight gradients (opts.weight_grad is forced on).
  SupernetPass run_trainable(const ad::Tensor& batch, std::span<const int> labels, PassOptions opts = {});

  double loss(const ad::Tensor& batch, std::span<const int> labels) const;

  bool operator==(const Supernet& other) const;

private:
  Supernet(SearchSpaceConfig cfg, ArchParams arch, NetworkBody body);

  SearchSpaceConfig config_;
  ArchParams arch_;
  NetworkBody body_;
};

/// Network with exactly one operation per edge.
class StandaloneNet {
public:
  StandaloneNet(SearchSpaceConfig cfg, Genotype genotype, NetworkBody body);
  // Freshly initialised network for `genotype`.
  static StandaloneNet create(const SearchSpaceConfig& cfg, const Genotype& genotype, std::uint64_t seed);

  const SearchSpaceConfig& config() const noexcept { return config_; }
  const Genotype& genotype() const noexcept { return genotype_; }
  NetworkBody& body() noexcept { return body_; }
  const NetworkBody& body() const noexcept { return body_; }

  // Returns logits [N, K]; kernels watched when `trainable`.
  ad::Var logits(ad::Tape& tape, const ad::Tensor& batch, bool trainable);
  ad::Var logits(ad::Tape& tape, const ad::Tensor& batch) const;

  double loss(const ad::Tensor& batch, std::span<const int> labels) const;

private:
  SearchSpaceConfig config_;
  Genotype genotype_;
  NetworkBody body_;
};

struct DiscretizeOptions {
  bool reinit = true;      // re-draw all weights (retrain-from-scratch protocol)
  std::uint64_t seed = 0;  // used when reinit
};

StandaloneNet discretize(const Supernet& net, const Genotype& g, const DiscretizeOptions& opts = {});

// Fraction of rows of logits [N, K] whose argmax equals the label.
double accuracy(std::span<const double> logits, std::size_t classes, std::span<const int> labels);

} // namespace ostr
