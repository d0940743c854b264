#pragma once

// Operation-selection criteria and their diagnostics.
//
// For an edge e with mixed feature  m = sum_o beta_o f_o  and loss L:
//   operation strength      s_o  = | beta_o * sum_cells dL/dm . (f_o - m) |   (== |dL/dalpha_o|)
//   operation strength*     s*_o = | sum_cells dL/dm . (m - f_o) |            (== s_o / beta_o)
//   naive pruning saliency  n_o  = | sum_cells dL/dm . (beta_o f_o) |
//   magnitude                     beta_o
// Features and gradients are flattened to vectors before the inner products.
// The gradient identity is exact here because every candidate feature f_o
// reaches the loss only through its own mixed output m.

#include "ostr/matrix.hpp"
#include "ostr/space.hpp"
#include "ostr/supernet.hpp"

#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace ostr {

enum class Criterion { magnitude, ostr, ostr_star, naive_pruning };

std::string_view criterion_name(Criterion c);
Criterion parse_criterion(std::string_view name);

struct ScoreMatrix {
  Matrix values; // [P, E], finite and >= 0
  Criterion tag = Criterion::magnitude;
  std::size_t batches = 1;
};

ScoreMatrix magnitude_scores(const ArchParams& arch);
// Requires a pass run with backward; throws otherwise.
ScoreMatrix ostr_scores_direct(const SupernetPass& pass);
ScoreMatrix ostr_scores_from_grad(const Matrix& arch_grad);
// s / beta; throws when a beta entry is below 1e-300.
ScoreMatrix ostr_star_scores(const ScoreMatrix& s, const ArchParams& arch);
ScoreMatrix ostr_star_scores(const ScoreMatrix& s, const Matrix& beta);
// |dL/dm . (m - f_o)| evaluated directly from the features.
ScoreMatrix ostr_star_scores_direct(const SupernetPass& pass);
ScoreMatrix naive_pruning_scores(const SupernetPass& pass);

// Per-batch scores of `c` from one backward pass (the alpha gradient is read
// from the pass for ostr / ostr_star; magnitude uses the pass's beta).
ScoreMatrix batch_scores(Criterion c, const SupernetPass& pass);

/// Running elementwise mean of per-batch scores sharing one tag and shape.
class ScoreAccumulator {
public:
  void add(const ScoreMatrix& s);
  std::size_t count() const noexcept { return count_; }
  // Throws if nothing was added.
  ScoreMatrix finalize() const;

private:
  Matrix sum_;
  Criterion tag_ = Criterion::magnitude;
  std::size_t count_ = 0;
};

ScoreMatrix accumulate(std::span<const ScoreMatrix> scores);

Genotype select_genotype(const ScoreMatrix& s, const SearchSpaceConfig& cfg);

struct EdgeDiagnostic {
  std::size_t edge = 0;
  std::size_t op = 0;
  double beta = 0.0;
  double rf_norm = 0.0;  // ||f_o - m||_2 over all cells
  double strength = 0.0; // |beta * grad_dot|
  double grad_dot = 0.0; // sum_cells dL/dm . (f_o - m)
};

std::vector<EdgeDiagnostic> edge_diagnostics(const SupernetPass& pass);

struct RfBound {
  std::size_t edge = 0;
  std::size_t op = 0;
  double lhs = 0.0; // ||f_o - m||
  double rhs = 0.0; // sum_{o' != o} beta_o' ||f_o - f_o'||
};

// Needs only a forward pass.
std::vector<RfBound> rf_inequality_check(const SupernetPass& pass);

struct TaylorDiagnostic {
  double actual = 0.0;   // |L(m replaced by f_o) - L(m)|
  double est_ostr = 0.0; // first-order estimate s (this cell's term)
  double est_star = 0.0; // first-order estimate s* (this cell's term)
};

// Replaces the mixed feature of one edge in one cell by f_o and re-runs the
// forward pass with everything else fixed.
TaylorDiagnostic taylor_error_diagnostic(const Supernet& net, const ad::Tensor& images, std::span<const int> labels,
                                         std::size_t cell, std::size_t edge, std::size_t op);

struct InterpolatedTaylor {
  double t = 0.0;
  double actual_change = 0.0; // L(m + t (f_o - m)) - L(m)
  double first_order = 0.0;   // t * dL/dm . (f_o - m)
  double error = 0.0;         // |actual_change - first_order|
};

std::vector<InterpolatedTaylor> taylor_interpolation(const Supernet& net, const ad::Tensor& images,
                                                     std::span<const int> labels, std::size_t cell, std::size_t edge,
                                                     std::size_t op, std::span<const double> ts);

// CSV `edge,op_kind,beta,score,criterion,batches`, one row per (edge, op).
void write_scores_csv(std::ostream& os, const ScoreMatrix& s, const Matrix& beta, const SearchSpaceConfig& cfg,
                      bool header = true);
void write_diagnostics_csv(std::ostream& os, std::span<const EdgeDiagnostic> d, std::span<const RfBound> rf,
                           const SearchSpaceConfig& cfg);

} // namespace ostr
