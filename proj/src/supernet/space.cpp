#include "ostr/space.hpp"

#include "ostr/json_util.hpp"

#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>

namespace ostr {


void SearchSpaceConfig::validate() const {
  if (nodes < 2) throw std::invalid_argument("space: nodes must be >= 2");
  if (edges.empty()) throw std::invalid_argument("space: at least one edge required");
  if (ops.size() < 2) throw std::invalid_argument("space: at least two candidate ops required");
  if (cells < 1) throw std::invalid_argument("space: cells must be >= 1");
  if (channels < 1) throw std::invalid_argument("space: channels must be >= 1");
  if (classes < 2) throw std::invalid_argument("space: classes must be >= 2");
  for (auto d : input_shape) {
    if (d == 0) throw std::invalid_argument("space: input_shape dimensions must be positive");
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<bool> has_input(nodes, false);
  for (const auto& e : edges) {
    if (e.from >= e.to) {
      throw std::invalid_argument("space: edge (" + std::to_string(e.from) + ", " + std::to_string(e.to) +
                                  ") violates from < to (cell must be a DAG)");
    }
    if (e.to >= nodes) throw std::invalid_argument("space: edge target " + std::to_string(e.to) + " >= nodes");
    if (!seen.insert({e.from, e.to}).second) {
      throw std::invalid_argument("space: duplicate edge (" + std::to_string(e.from) + ", " + std::to_string(e.to) + ")");
    }
    has_input[e.to] = true;
  }
  for (std::size_t j = 1; j < nodes; ++j) {
    if (!has_input[j]) throw std::invalid_argument("space: node " + std::to_string(j) + " has no incoming edge");
  }
  std::set<OpKind> kinds(ops.begin(), ops.end());
  if (kinds.size() != ops.size()) throw std::invalid_argument("space: duplicate op kinds");
}

SearchSpaceConfig SearchSpaceConfig::mini() {
  SearchSpaceConfig c;
  c.nodes = 3;
  c.edges = {{0, 1}, {0, 2}, {1, 2}};
  c.ops = {OpKind::none, OpKind::skip_connect, OpKind::conv_3x3};
  return c;
}

SearchSpaceConfig SearchSpaceConfig::nas_bench_201() {
  SearchSpaceConfig c;
  c.nodes = 4;
  c.edges = {{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}};
  c.ops = {OpKind::none, OpKind::skip_connect, OpKind::conv_1x1, OpKind::conv_3x3, OpKind::avg_pool_3x3};
  return c;
}

Json to_json(const SearchSpaceConfig& cfg) {
  Json edges = Json::array();
  for (const auto& e : cfg.edges) edges.push_back(Json::array({e.from, e.to}));
  Json ops = Json::array();
  for (auto k : cfg.ops) ops.push_back(std::string(op_name(k)));
  return Json{{"nodes", cfg.nodes},       {"edges", edges},
              {"ops", ops},               {"cells", cfg.cells},
              {"channels", cfg.channels}, {"classes", cfg.classes},
              {"input_shape", Json::array({cfg.input_shape[0], cfg.input_shape[1], cfg.input_shape[2]})},
              {"none_selectable", cfg.none_selectable}};
}

SearchSpaceConfig space_from_json(const Json& j) {
  check_fields(j, "space", {"nodes", "edges", "ops", "cells", "channels", "classes", "input_shape"},
                 {"none_selectable"});
  SearchSpaceConfig c;
  try {
    c.nodes = j.at("nodes").get<std::size_t>();
    c.edges.clear();
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw std::invalid_argument("space.edges: each edge must be [from, to]");
      c.edges.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>()});
    }
    c.ops.clear();
    for (const auto& o : j.at("ops")) c.ops.push_back(parse_op_kind(o.get<std::string>()));
    c.cells = j.at("cells").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.classes = j.at("classes").get<std::size_t>();
    const auto& s = j.at("input_shape");
    if (!s.is_array() || s.size() != 3) throw std::invalid_argument("space.input_shape: expected [C, H, W]");
    c.input_shape = {s[0].get<std::size_t>(), s[1].get<std::size_t>(), s[2].get<std::size_t>()};
    if (j.contains("none_selectable")) c.none_selectable = j.at("none_selectable").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("space: ") + e.what());
  }
  c.validate();
  return c;
}

std::string fingerprint(const SearchSpaceConfig& cfg) { return hex64(fnv1a64(to_json(cfg).dump())); }

// ---------------------------------------------------------------------------

std::string Genotype::str() const {
  std::string s = "ops[";
  for (std::size_t i = 0; i < choice.size(); ++i) {
    if (i) s += '|';
    s += std::to_string(choice[i]);
  }
  s += ']';
  return s;
}

Genotype Genotype::parse(std::string_view text) {
  auto fail = [&]() -> Genotype {
    throw std::invalid_argument("genotype: malformed string '" + std::string(text) + "', expected ops[i0|i1|...]");
  };
  if (text.size() < 6 || text.substr(0, 4) != "ops[" || text.back() != ']') return fail();
  std::string_view body = text.substr(4, text.size() - 5);
  Genotype g;
  std::size_t pos = 0;
  while (true) {
    const std::size_t bar = body.find('|', pos);
    const std::string_view tok = body.substr(pos, bar == std::string_view::npos ? std::string_view::npos : bar - pos);
    if (tok.empty() || tok.size() > 9) return fail();
    // Canonical form has no leading zeros.
    if (tok.size() > 1 && tok[0] == '0') return fail();
    std::size_t v = 0;
    for (char ch : tok) {
      if (ch < '0' || ch > '9') return fail();
      v = v * 10 + static_cast<std::size_t>(ch - '0');
    }
    g.choice.push_back(v);
    if (bar == std::string_view::npos) break;
    pos = bar + 1;
  }
  return g;
}

void validate(const Genotype& g, const SearchSpaceConfig& cfg) {
  if (g.choice.size() != cfg.edge_count()) {
    throw std::invalid_argument("genotype " + g.str() + ": expected " + std::to_string(cfg.edge_count()) + " edges");
  }
  for (auto c : g.choice) {
    if (c >= cfg.op_count()) {
      throw std::out_of_range("genotype " + g.str() + ": op index " + std::to_string(c) + " out of range [0, " +
                              std::to_string(cfg.op_count()) + ")");
    }
  }
}

Json genotype_to_json(const Genotype& g, const SearchSpaceConfig& cfg) {
  validate(g, cfg);
  Json out = Json::array();
  for (std::size_t e = 0; e < g.choice.size(); ++e) {
    out.push_back(Json{{"from", cfg.edges[e].from},
                       {"to", cfg.edges[e].to},
                       {"op", std::string(op_name(cfg.ops[g.choice[e]]))}});
  }
  return out;
}

Genotype genotype_from_json(const Json& j, const SearchSpaceConfig& cfg) {
  if (!j.is_array() || j.size() != cfg.edge_count()) {
    throw std::invalid_argument("genotype json: expected an array of " + std::to_string(cfg.edge_count()) + " triples");
  }
  Genotype g;
  for (std::size_t e = 0; e < j.size(); ++e) {
    const auto& t = j[e];
    check_fields(t, "genotype json entry", {"from", "to", "op"});
    const Edge edge{t.at("from").get<std::size_t>(), t.at("to").get<std::size_t>()};
    if (!(edge == cfg.edges[e])) throw std::invalid_argument("genotype json: entry " + std::to_string(e) + " names the wrong edge");
    const OpKind k = parse_op_kind(t.at("op").get<std::string>());
    std::size_t idx = cfg.op_count();
    for (std::size_t p = 0; p < cfg.op_count(); ++p) {
      if (cfg.ops[p] == k) idx = p;
    }
    if (idx == cfg.op_count()) throw std::invalid_argument("genotype json: op '" + std::string(op_name(k)) + "' not in space");
    g.choice.push_back(idx);
  }
  return g;
}

namespace {

Genotype argmax_columns(const Matrix& scores, std::size_t skip_row) {
  Genotype g;
  for (std::size_t e = 0; e < scores.cols(); ++e) {
    std::size_t best = scores.rows();
    for (std::size_t o = 0; o < scores.rows(); ++o) {
      const double v = scores(o, e);
      if (std::isnan(v)) {
        throw std::invalid_argument("genotype_from_scores: NaN score at op " + std::to_string(o) + ", edge " + std::to_string(e));
      }
      if (o == skip_row) continue;
      if (best == scores.rows() || v > scores(best, e)) best = o;
    }
    g.choice.push_back(best);
  }
  return g;
}

} // namespace

Genotype genotype_from_scores(const Matrix& scores) {
  if (scores.rows() == 0 || scores.cols() == 0) throw std::invalid_argument("genotype_from_scores: empty matrix");
  return argmax_columns(scores, scores.rows());
}

Genotype genotype_from_scores(const Matrix& scores, const SearchSpaceConfig& cfg) {
  if (scores.rows() != cfg.op_count() || scores.cols() != cfg.edge_count()) {
    throw std::invalid_argument("genotype_from_scores: score matrix does not match the search space");
  }
  std::size_t skip = scores.rows();
  if (!cfg.none_selectable) {
    for (std::size_t o = 0; o < cfg.op_count(); ++o) {
      if (cfg.ops[o] == OpKind::none) skip = o;
    }
  }
  return argmax_columns(scores, skip);
}

} // namespace ostr
