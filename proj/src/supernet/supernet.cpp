#include "ostr/supernet.hpp"

#include "ostr/rng.hpp"

#include <stdexcept>
#include <string>

namespace ostr {

namespace {

constexpr std::uint64_t kStemStream = 1;
constexpr std::uint64_t kHeadStream = 2;
constexpr std::uint64_t kOpStreamBase = 1000;

ad::Var bind(ad::Tape& tape, ad::Tensor& t, bool trainable) { return trainable ? tape.watch(t) : tape.constant(t); }
ad::Var bind(ad::Tape& tape, const ad::Tensor& t, bool) { return tape.constant(t); }
ad::Var apply_op(CandidateOp& op, ad::Var x, bool trainable) { return apply(op, x, trainable); }
ad::Var apply_op(const CandidateOp& op, ad::Var x, bool) { return apply(op, x); }

void check_batch(const SearchSpaceConfig& cfg, const ad::Tensor& batch) {
  const auto& s = batch.shape();
  if (s.size() != 4 || s[1] != cfg.input_shape[0] || s[2] != cfg.input_shape[1] || s[3] != cfg.input_shape[2]) {
    throw ad::ShapeError("forward: batch shape " + ad::shape_string(s) + " does not match input shape [N, " +
                         std::to_string(cfg.input_shape[0]) + ", " + std::to_string(cfg.input_shape[1]) + ", " +
                         std::to_string(cfg.input_shape[2]) + "]");
  }
}

template <class BodyT>
ad::Var stem(ad::Tape& tape, BodyT& body, const ad::Tensor& batch, bool trainable) {
  ad::Var x = tape.constant(batch);
  return ad::batch_standardize(ad::conv2d(x, bind(tape, body.stem, trainable)));
}

template <class BodyT>
ad::Var head(ad::Tape& tape, BodyT& body, ad::Var features, bool trainable) {
  ad::Var pooled = ad::global_avg_pool(ad::relu(features));
  return ad::add(ad::matmul(pooled, bind(tape, body.head_w, trainable)), bind(tape, body.head_b, trainable));
}

std::uint64_t op_seed(std::uint64_t seed, const SearchSpaceConfig& cfg, std::size_t l, std::size_t e, std::size_t p) {
  return derive_seed(seed, kOpStreamBase + (l * cfg.edge_count() + e) * cfg.op_count() + p);
}

void init_stem_and_head(NetworkBody& body, const SearchSpaceConfig& cfg, std::uint64_t seed) {
  const std::size_t C = cfg.channels, K = cfg.classes;
  body.stem = ad::Tensor({C, cfg.input_shape[0], 3, 3});
  init_kernel(body.stem, derive_seed(seed, kStemStream));
  body.head_w = ad::Tensor({C, K});
  init_kernel(body.head_w, derive_seed(seed, kHeadStream));
  body.head_b = ad::Tensor({K}, 0.0);
}

template <class BodyT>
SupernetGraph build_graph(const SearchSpaceConfig& cfg, const ArchParams& arch, BodyT& body, ad::Tape& tape,
                          const ad::Tensor& batch, std::span<const int> labels, const PassOptions& opts) {
  check_batch(cfg, batch);
  const bool trainable = opts.weight_grad;
  SupernetGraph g;
  g.alpha = opts.alpha_grad ? tape.variable(arch.alpha) : tape.constant(arch.alpha);
  g.beta = ad::softmax(g.alpha, 0);
  g.edges.assign(cfg.cells, std::vector<EdgeFeatures>(cfg.edge_count()));

  if (opts.substitute) {
    if (opts.substitute->cell >= cfg.cells || opts.substitute->edge >= cfg.edge_count()) {
      throw std::out_of_range("forward: substitution targets a missing cell/edge");
    }
  }

  ad::Var x = stem(tape, body, batch, trainable);
  for (std::size_t l = 0; l < cfg.cells; ++l) {
    std::vector<ad::Var> nodes(cfg.nodes);
    nodes[0] = x;
    for (std::size_t j = 1; j < cfg.nodes; ++j) {
      for (std::size_t e = 0; e < cfg.edge_count(); ++e) {
        if (cfg.edges[e].to != j) continue;
        auto& ef = g.edges[l][e];
        ad::Var in = nodes[cfg.edges[e].from];
        for (std::size_t p = 0; p < cfg.op_count(); ++p) ef.ops.push_back(apply_op(body.cells[l][e][p], in, trainable));
        ef.mixed = ad::weighted_sum(ef.ops, g.beta, e);
        if (opts.substitute && opts.substitute->cell == l && opts.substitute->edge == e) {
          if (opts.substitute->feature.shape() != ef.mixed.shape()) {
            throw ad::ShapeError("forward: substituted feature " + ad::shape_string(opts.substitute->feature.shape()) +
                                 " does not match mixed output " + ad::shape_string(ef.mixed.shape()));
          }
          ef.mixed = tape.constant(opts.substitute->feature);
        }
        tape.retain_grad(ef.mixed);
        nodes[j] = nodes[j].valid() ? ad::add(nodes[j], ef.mixed) : ef.mixed;
      }
    }
    x = nodes[cfg.nodes - 1];
  }
  g.logits = head(tape, body, x, trainable);
  g.loss = ad::cross_entropy(g.logits, labels);
  return g;
}

Matrix to_matrix(const ad::Var& v) {
  const auto& s = v.shape();
  auto vals = v.value();
  return Matrix(s[0], s[1], std::vector<double>(vals.begin(), vals.end()));
}

} // namespace

ArchParams ArchParams::zeros(std::size_t ops, std::size_t edges) { return ArchParams{ad::Tensor({ops, edges}, 0.0)}; }

Matrix beta(const ArchParams& arch) {
  ad::Tensor b = ad::softmax_values(arch.alpha, 0);
  return Matrix(arch.ops(), arch.edges(), b.data());
}

std::vector<ad::Tensor*> NetworkBody::parameters() {
  std::vector<ad::Tensor*> out{&stem};
  for (auto& cell : cells)
    for (auto& edge : cell)
      for (auto& op : edge)
        for (auto& w : op.weights) out.push_back(&w);
  out.push_back(&head_w);
  out.push_back(&head_b);
  return out;
}

std::vector<const ad::Tensor*> NetworkBody::parameters() const {
  std::vector<const ad::Tensor*> out;
  for (auto* p : const_cast<NetworkBody*>(this)->parameters()) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------

SupernetPass::SupernetPass(std::unique_ptr<ad::Tape> tape, SupernetGraph graph, Matrix beta)
    : tape_(std::move(tape)), graph_(std::move(graph)), beta_(std::move(beta)) {}

Matrix SupernetPass::alpha_grad() const {
  if (!tape_->backward_done() || !graph_.alpha.has_grad()) {
    throw ad::TapeError("alpha_grad: run the pass with backward and alpha_grad enabled first");
  }
  auto g = graph_.alpha.grad();
  return Matrix(ops(), edges(), std::vector<double>(g.begin(), g.end()));
}

std::span<const double> SupernetPass::mixed(std::size_t cell, std::size_t edge) const {
  return graph_.edges.at(cell).at(edge).mixed.value();
}

std::span<const double> SupernetPass::mixed_grad(std::size_t cell, std::size_t edge) const {
  if (!tape_->backward_done()) throw ad::TapeError("mixed_grad: gradients not populated; run backward first");
  const auto& m = graph_.edges.at(cell).at(edge).mixed;
  if (!m.has_grad()) return {};
  return m.grad();
}

std::span<const double> SupernetPass::op_feature(std::size_t cell, std::size_t edge, std::size_t op) const {
  return graph_.edges.at(cell).at(edge).ops.at(op).value();
}

const ad::Shape& SupernetPass::feature_shape() const { return graph_.edges.at(0).at(0).mixed.shape(); }

// ---------------------------------------------------------------------------

Supernet::Supernet(SearchSpaceConfig cfg, ArchParams arch, NetworkBody body)
    : config_(std::move(cfg)), arch_(std::move(arch)), body_(std::move(body)) {}

Supernet Supernet::build(const SearchSpaceConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  NetworkBody body;
  init_stem_and_head(body, cfg, seed);
  body.cells.resize(cfg.cells);
  for (std::size_t l = 0; l < cfg.cells; ++l) {
    body.cells[l].resize(cfg.edge_count());
    for (std::size_t e = 0; e < cfg.edge_count(); ++e) {
      for (std::size_t p = 0; p < cfg.op_count(); ++p) {
        CandidateOp op = make_op(cfg.ops[p], cfg.channels);
        init_weights(op, op_seed(seed, cfg, l, e, p));
        body.cells[l][e].push_back(std::move(op));
      }
    }
  }
  return Supernet(cfg, ArchParams::zeros(cfg.op_count(), cfg.edge_count()), std::move(body));
}

SupernetGraph Supernet::forward(ad::Tape& tape, const ad::Tensor& batch, std::span<const int> labels,
                                const PassOptions& opts) {
  return build_graph(config_, arch_, body_, tape, batch, labels, opts);
}

SupernetGraph Supernet::forward(ad::Tape& tape, const ad::Tensor& batch, std::span<const int> labels,
                                const PassOptions& opts) const {
  return build_graph(config_, arch_, body_, tape, batch, labels, opts);
}

SupernetPass Supernet::run(const ad::Tensor& batch, std::span<const int> labels, PassOptions opts) const {
  opts.weight_grad = false;
  auto tape = std::make_unique<ad::Tape>();
  SupernetGraph g = forward(*tape, batch, labels, opts);
  if (opts.backward) tape->backward(g.loss);
  Matrix b = to_matrix(g.beta);
  return SupernetPass(std::move(tape), std::move(g), std::move(b));
}

SupernetPass Supernet::run_trainable(const ad::Tensor& batch, std::span<const int> labels, PassOptions opts) {
  opts.weight_grad = true;
  auto tape = std::make_unique<ad::Tape>();
  SupernetGraph g = forward(*tape, batch, labels, opts);
  if (opts.backward) tape->backward(g.loss);
  Matrix b = to_matrix(g.beta);
  return SupernetPass(std::move(tape), std::move(g), std::move(b));
}

double Supernet::loss(const ad::Tensor& batch, std::span<const int> labels) const {
  PassOptions opts;
  opts.backward = false;
  opts.alpha_grad = false;
  return run(batch, labels, opts).loss();
}

bool Supernet::operator==(const Supernet& other) const {
  if (!(config_ == other.config_) || !arch_.alpha.same_values(other.arch_.alpha)) return false;
  auto a = body_.parameters();
  auto b = other.body_.parameters();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i]->same_values(*b[i])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

StandaloneNet::StandaloneNet(SearchSpaceConfig cfg, Genotype genotype, NetworkBody body)
    : config_(std::move(cfg)), genotype_(std::move(genotype)), body_(std::move(body)) {
  validate(genotype_, config_);
}

StandaloneNet StandaloneNet::create(const SearchSpaceConfig& cfg, const Genotype& genotype, std::uint64_t seed) {
  cfg.validate();
  validate(genotype, cfg);
  NetworkBody body;
  init_stem_and_head(body, cfg, seed);
  body.cells.resize(cfg.cells);
  for (std::size_t l = 0; l < cfg.cells; ++l) {
    body.cells[l].resize(cfg.edge_count());
    for (std::size_t e = 0; e < cfg.edge_count(); ++e) {
      const std::size_t p = genotype.choice[e];
      CandidateOp op = make_op(cfg.ops[p], cfg.channels);
      init_weights(op, op_seed(seed, cfg, l, e, p));
      body.cells[l][e].push_back(std::move(op));
    }
  }
  return StandaloneNet(cfg, genotype, std::move(body));
}

namespace {

template <class BodyT>
ad::Var standalone_logits(const SearchSpaceConfig& cfg, BodyT& body, ad::Tape& tape, const ad::Tensor& batch,
                          bool trainable) {
  check_batch(cfg, batch);
  ad::Var x = stem(tape, body, batch, trainable);
  for (std::size_t l = 0; l < cfg.cells; ++l) {
    std::vector<ad::Var> nodes(cfg.nodes);
    nodes[0] = x;
    for (std::size_t j = 1; j < cfg.nodes; ++j) {
      for (std::size_t e = 0; e < cfg.edge_count(); ++e) {
        if (cfg.edges[e].to != j) continue;
        ad::Var out = apply_op(body.cells[l][e][0], nodes[cfg.edges[e].from], trainable);
        nodes[j] = nodes[j].valid() ? ad::add(nodes[j], out) : out;
      }
    }
    x = nodes[cfg.nodes - 1];
  }
  return head(tape, body, x, trainable);
}

} // namespace

ad::Var StandaloneNet::logits(ad::Tape& tape, const ad::Tensor& batch, bool trainable) {
  return standalone_logits(config_, body_, tape, batch, trainable);
}

ad::Var StandaloneNet::logits(ad::Tape& tape, const ad::Tensor& batch) const {
  return standalone_logits(config_, body_, tape, batch, false);
}

double StandaloneNet::loss(const ad::Tensor& batch, std::span<const int> labels) const {
  ad::Tape tape;
  return ad::cross_entropy(logits(tape, batch), labels).item();
}

StandaloneNet discretize(const Supernet& net, const Genotype& g, const DiscretizeOptions& opts) {
  const auto& cfg = net.config();
  validate(g, cfg);
  if (opts.reinit) return StandaloneNet::create(cfg, g, opts.seed);
  NetworkBody body;
  body.stem = net.body().stem;
  body.head_w = net.body().head_w;
  body.head_b = net.body().head_b;
  body.cells.resize(cfg.cells);
  for (std::size_t l = 0; l < cfg.cells; ++l) {
    for (std::size_t e = 0; e < cfg.edge_count(); ++e) {
      body.cells[l].push_back({net.body().cells[l][e][g.choice[e]]});
    }
  }
  for (auto* p : body.parameters()) p->clear_grad();
  return StandaloneNet(cfg, g, std::move(body));
}

double accuracy(std::span<const double> logits, std::size_t classes, std::span<const int> labels) {
  if (classes == 0 || logits.size() != classes * labels.size()) {
    throw std::invalid_argument("accuracy: logits do not match labels");
  }
  std::size_t correct = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < classes; ++k) {
      if (logits[n * classes + k] > logits[n * classes + best]) best = k;
    }
    if (static_cast<int>(best) == labels[n]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

} // namespace ostr
