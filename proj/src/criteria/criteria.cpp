#include "ostr/criteria.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ostr {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// sum_i g_i * (x_i - y_i)
double dot_diff(std::span<const double> g, std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * (x[i] - y[i]);
  return s;
}

double sq_dist(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

void require_gradients(const SupernetPass& pass, const char* who) {
  if (!pass.has_gradients()) {
    throw ad::TapeError(std::string(who) + ": gradients not populated; run the pass with backward first");
  }
}

// Cell-summed dL/dm . (f_o - m) for every (o, e).
Matrix residual_dots(const SupernetPass& pass) {
  Matrix out(pass.ops(), pass.edges());
  for (std::size_t l = 0; l < pass.cells(); ++l) {
    for (std::size_t e = 0; e < pass.edges(); ++e) {
      auto g = pass.mixed_grad(l, e);
      if (g.empty()) continue; // edge does not reach the loss
      auto m = pass.mixed(l, e);
      for (std::size_t o = 0; o < pass.ops(); ++o) out(o, e) += dot_diff(g, pass.op_feature(l, e, o), m);
    }
  }
  return out;
}

void check_scores(const ScoreMatrix& s, const char* who) {
  for (double v : s.values.data()) {
    if (!std::isfinite(v) || v < 0.0) throw ad::NumericError(std::string(who) + ": score is negative or non-finite");
  }
}

} // namespace

std::string_view criterion_name(Criterion c) {
  switch (c) {
  case Criterion::magnitude: return "magnitude";
  case Criterion::ostr: return "ostr";
  case Criterion::ostr_star: return "ostr_star";
  case Criterion::naive_pruning: return "naive_pruning";
  }
  return "?";
}

Criterion parse_criterion(std::string_view name) {
  for (Criterion c : {Criterion::magnitude, Criterion::ostr, Criterion::ostr_star, Criterion::naive_pruning}) {
    if (criterion_name(c) == name) return c;
  }
  throw std::invalid_argument("unknown criterion '" + std::string(name) +
                              "' (expected magnitude, ostr, ostr_star or naive_pruning)");
}

ScoreMatrix magnitude_scores(const ArchParams& arch) {
  for (double a : arch.alpha.data()) {
    if (!std::isfinite(a)) throw ad::NumericError("magnitude_scores: alpha is not finite");
  }
  return {beta(arch), Criterion::magnitude, 1};
}

ScoreMatrix ostr_scores_direct(const SupernetPass& pass) {
  require_gradients(pass, "ostr_scores_direct");
  Matrix d = residual_dots(pass);
  const Matrix& b = pass.beta();
  for (std::size_t i = 0; i < d.data().size(); ++i) d.data()[i] = std::abs(b.data()[i] * d.data()[i]);
  ScoreMatrix s{std::move(d), Criterion::ostr, 1};
  check_scores(s, "ostr_scores_direct");
  return s;
}

ScoreMatrix ostr_scores_from_grad(const Matrix& arch_grad) {
  Matrix v = arch_grad;
  for (double& x : v.data()) {
    if (std::isnan(x)) throw ad::NumericError("ostr_scores_from_grad: gradient contains NaN");
    x = std::abs(x);
  }
  ScoreMatrix s{std::move(v), Criterion::ostr, 1};
  check_scores(s, "ostr_scores_from_grad");
  return s;
}

ScoreMatrix ostr_star_scores(const ScoreMatrix& s, const Matrix& b) {
  if (s.tag != Criterion::ostr) throw std::invalid_argument("ostr_star_scores: input scores must be tagged ostr");
  if (b.rows() != s.values.rows() || b.cols() != s.values.cols()) {
    throw ad::ShapeError("ostr_star_scores: beta and scores differ in shape");
  }
  Matrix v = s.values;
  for (std::size_t i = 0; i < v.data().size(); ++i) {
    if (b.data()[i] < 1e-300) {
      throw ad::NumericError("ostr_star_scores: beta below 1e-300 makes s/beta unstable; "
                             "use ostr_star_scores_direct on the pass instead");
    }
    v.data()[i] /= b.data()[i];
  }
  ScoreMatrix out{std::move(v), Criterion::ostr_star, s.batches};
  check_scores(out, "ostr_star_scores");
  return out;
}

ScoreMatrix ostr_star_scores(const ScoreMatrix& s, const ArchParams& arch) { return ostr_star_scores(s, beta(arch)); }

ScoreMatrix ostr_star_scores_direct(const SupernetPass& pass) {
  require_gradients(pass, "ostr_star_scores_direct");
  Matrix d = residual_dots(pass);
  for (double& x : d.data()) x = std::abs(x);
  ScoreMatrix s{std::move(d), Criterion::ostr_star, 1};
  check_scores(s, "ostr_star_scores_direct");
  return s;
}

ScoreMatrix naive_pruning_scores(const SupernetPass& pass) {
  require_gradients(pass, "naive_pruning_scores");
  Matrix d(pass.ops(), pass.edges());
  for (std::size_t l = 0; l < pass.cells(); ++l) {
    for (std::size_t e = 0; e < pass.edges(); ++e) {
      auto g = pass.mixed_grad(l, e);
      if (g.empty()) continue;
      for (std::size_t o = 0; o < pass.ops(); ++o) d(o, e) += dot(g, pass.op_feature(l, e, o));
    }
  }
  const Matrix& b = pass.beta();
  for (std::size_t i = 0; i < d.data().size(); ++i) d.data()[i] = std::abs(b.data()[i] * d.data()[i]);
  ScoreMatrix s{std::move(d), Criterion::naive_pruning, 1};
  check_scores(s, "naive_pruning_scores");
  return s;
}

ScoreMatrix batch_scores(Criterion c, const SupernetPass& pass) {
  switch (c) {
  case Criterion::magnitude: return {pass.beta(), Criterion::magnitude, 1};
  case Criterion::ostr: return ostr_scores_from_grad(pass.alpha_grad());
  // Direct form: stays finite however small beta gets.
  case Criterion::ostr_star: return ostr_star_scores_direct(pass);
  case Criterion::naive_pruning: return naive_pruning_scores(pass);
  }
  throw std::logic_error("batch_scores: bad criterion");
}

void ScoreAccumulator::add(const ScoreMatrix& s) {
  check_scores(s, "accumulate");
  if (count_ == 0) {
    sum_ = Matrix(s.values.rows(), s.values.cols());
    tag_ = s.tag;
  } else {
    if (s.tag != tag_) {
      throw std::invalid_argument("accumulate: mixed criterion tags (" + std::string(criterion_name(tag_)) + " and " +
                                  std::string(criterion_name(s.tag)) + ")");
    }
    if (s.values.rows() != sum_.rows() || s.values.cols() != sum_.cols()) {
      throw ad::ShapeError("accumulate: score matrices differ in shape");
    }
  }
  // A pre-averaged input counts with its own batch weight.
  const double w = static_cast<double>(s.batches);
  for (std::size_t i = 0; i < sum_.data().size(); ++i) sum_.data()[i] += w * s.values.data()[i];
  count_ += s.batches;
}

ScoreMatrix ScoreAccumulator::finalize() const {
  if (count_ == 0) throw std::invalid_argument("accumulate: no batches");
  Matrix v = sum_;
  for (double& x : v.data()) x /= static_cast<double>(count_);
  return {std::move(v), tag_, count_};
}

ScoreMatrix accumulate(std::span<const ScoreMatrix> scores) {
  ScoreAccumulator acc;
  for (const auto& s : scores) acc.add(s);
  return acc.finalize();
}

Genotype select_genotype(const ScoreMatrix& s, const SearchSpaceConfig& cfg) {
  return genotype_from_scores(s.values, cfg);
}

std::vector<EdgeDiagnostic> edge_diagnostics(const SupernetPass& pass) {
  require_gradients(pass, "edge_diagnostics");
  const Matrix dots = residual_dots(pass);
  std::vector<EdgeDiagnostic> out;
  for (std::size_t e = 0; e < pass.edges(); ++e) {
    for (std::size_t o = 0; o < pass.ops(); ++o) {
      double sq = 0.0;
      for (std::size_t l = 0; l < pass.cells(); ++l) sq += sq_dist(pass.op_feature(l, e, o), pass.mixed(l, e));
      EdgeDiagnostic d;
      d.edge = e;
      d.op = o;
      d.beta = pass.beta()(o, e);
      d.rf_norm = std::sqrt(sq);
      d.grad_dot = dots(o, e);
      d.strength = std::abs(d.beta * d.grad_dot);
      out.push_back(d);
    }
  }
  return out;
}

std::vector<RfBound> rf_inequality_check(const SupernetPass& pass) {
  const std::size_t P = pass.ops(), E = pass.edges();
  std::vector<RfBound> out;
  for (std::size_t e = 0; e < E; ++e) {
    // Pairwise squared distances, summed over cells.
    Matrix pair(P, P);
    std::vector<double> to_mixed(P, 0.0);
    for (std::size_t l = 0; l < pass.cells(); ++l) {
      auto m = pass.mixed(l, e);
      for (std::size_t o = 0; o < P; ++o) {
        to_mixed[o] += sq_dist(pass.op_feature(l, e, o), m);
        for (std::size_t q = o + 1; q < P; ++q) pair(o, q) += sq_dist(pass.op_feature(l, e, o), pass.op_feature(l, e, q));
      }
    }
    for (std::size_t o = 0; o < P; ++o) {
      RfBound r;
      r.edge = e;
      r.op = o;
      r.lhs = std::sqrt(to_mixed[o]);
      for (std::size_t q = 0; q < P; ++q) {
        if (q == o) continue;
        r.rhs += pass.beta()(q, e) * std::sqrt(o < q ? pair(o, q) : pair(q, o));
      }
      out.push_back(r);
    }
  }
  return out;
}

namespace {

void check_target(const Supernet& net, std::size_t cell, std::size_t edge, std::size_t op) {
  const auto& cfg = net.config();
  if (cell >= cfg.cells || edge >= cfg.edge_count() || op >= cfg.op_count()) {
    throw std::out_of_range("taylor diagnostic: cell/edge/op index out of range");
  }
}

double substituted_loss(const Supernet& net, const ad::Tensor& images, std::span<const int> labels, std::size_t cell,
                        std::size_t edge, ad::Tensor feature) {
  PassOptions opts;
  opts.backward = false;
  opts.alpha_grad = false;
  opts.substitute = Substitution{cell, edge, std::move(feature)};
  try {
    return net.run(images, labels, opts).loss();
  } catch (const ad::NumericError& err) {
    throw ad::NumericError(std::string("taylor diagnostic: substitution pass failed: ") + err.what());
  }
}

// alpha enters as a variable so the backward pass reaches the mixed features.
SupernetPass base_pass(const Supernet& net, const ad::Tensor& images, std::span<const int> labels,
                       std::size_t cell, std::size_t edge) {
  PassOptions opts;
  opts.alpha_grad = true;
  SupernetPass pass = net.run(images, labels, opts);
  if (pass.mixed_grad(cell, edge).size() != pass.mixed(cell, edge).size()) {
    throw std::logic_error("taylor diagnostic: mixed-feature gradient missing");
  }
  return pass;
}

} // namespace

TaylorDiagnostic taylor_error_diagnostic(const Supernet& net, const ad::Tensor& images, std::span<const int> labels,
                                         std::size_t cell, std::size_t edge, std::size_t op) {
  check_target(net, cell, edge, op);
  SupernetPass pass = base_pass(net, images, labels, cell, edge);
  auto f = pass.op_feature(cell, edge, op);
  ad::Tensor feature(pass.feature_shape(), std::vector<double>(f.begin(), f.end()));
  const double sub = substituted_loss(net, images, labels, cell, edge, std::move(feature));

  TaylorDiagnostic d;
  d.actual = std::abs(sub - pass.loss());
  // First-order change of L when m -> f_o is  g . (f_o - m).
  const double change = dot_diff(pass.mixed_grad(cell, edge), f, pass.mixed(cell, edge));
  d.est_star = std::abs(change);
  d.est_ostr = std::abs(pass.beta()(op, edge) * change);
  return d;
}

std::vector<InterpolatedTaylor> taylor_interpolation(const Supernet& net, const ad::Tensor& images,
                                                     std::span<const int> labels, std::size_t cell, std::size_t edge,
                                                     std::size_t op, std::span<const double> ts) {
  check_target(net, cell, edge, op);
  SupernetPass pass = base_pass(net, images, labels, cell, edge);
  auto f = pass.op_feature(cell, edge, op);
  auto m = pass.mixed(cell, edge);
  const double slope = dot_diff(pass.mixed_grad(cell, edge), f, m);
  std::vector<InterpolatedTaylor> out;
  for (double t : ts) {
    ad::Tensor feature(pass.feature_shape());
    for (std::size_t i = 0; i < m.size(); ++i) feature[i] = m[i] + t * (f[i] - m[i]);
    InterpolatedTaylor r;
    r.t = t;
    r.actual_change = substituted_loss(net, images, labels, cell, edge, std::move(feature)) - pass.loss();
    r.first_order = t * slope;
    r.error = std::abs(r.actual_change - r.first_order);
    out.push_back(r);
  }
  return out;
}

namespace {

std::string num(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

} // namespace

void write_scores_csv(std::ostream& os, const ScoreMatrix& s, const Matrix& b, const SearchSpaceConfig& cfg,
                      bool header) {
  if (s.values.rows() != cfg.op_count() || s.values.cols() != cfg.edge_count() || b.rows() != cfg.op_count() ||
      b.cols() != cfg.edge_count()) {
    throw ad::ShapeError("write_scores_csv: matrices do not match the search space");
  }
  if (header) os << "edge,op_kind,beta,score,criterion,batches\n";
  for (std::size_t e = 0; e < cfg.edge_count(); ++e) {
    for (std::size_t o = 0; o < cfg.op_count(); ++o) {
      os << e << ',' << op_name(cfg.ops[o]) << ',' << num(b(o, e)) << ',' << num(s.values(o, e)) << ','
         << criterion_name(s.tag) << ',' << s.batches << '\n';
    }
  }
}

void write_diagnostics_csv(std::ostream& os, std::span<const EdgeDiagnostic> d, std::span<const RfBound> rf,
                           const SearchSpaceConfig& cfg) {
  if (d.size() != rf.size()) throw std::invalid_argument("write_diagnostics_csv: row counts differ");
  os << "edge,op_kind,beta,rf_norm,strength,grad_dot,rf_rhs\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    os << d[i].edge << ',' << op_name(cfg.ops.at(d[i].op)) << ',' << num(d[i].beta) << ',' << num(d[i].rf_norm) << ','
       << num(d[i].strength) << ',' << num(d[i].grad_dot) << ',' << num(rf[i].rhs) << '\n';
  }
}

} // namespace ostr
