#pragma once

// Search-space description and discrete architectures (genotypes).

#include "ostr/matrix.hpp"
#include "ostr/ops_catalog.hpp"

#include "json.hpp"

#include <array>
#include <compare>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ostr {

using Json = nlohmann::json;

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  bool operator==(const Edge&) const = default;
};

struct SearchSpaceConfig {
  std::size_t nodes = 3;
  std::vector<Edge> edges;
  std::vector<OpKind> ops;
  std::size_t cells = 1;
  std::size_t channels = 4;
  std::size_t classes = 4;
  // [C0, H, W] of one input image.
  std::array<std::size_t, 3> input_shape{1, 8, 8};
  // When false, genotype selection skips the `none` op.
  bool none_selectable = true;

  std::size_t edge_count() const noexcept { return edges.size(); }
  std::size_t op_count() const noexcept { return ops.size(); }

  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  // N=3, E=3, P=3: {none, skip_connect, conv_3x3}.
  static SearchSpaceConfig mini();
  // N=4, E=6, P=5 NAS-Bench-201 cell.
  static SearchSpaceConfig nas_bench_201();

  bool operator==(const SearchSpaceConfig&) const = default;
};

Json to_json(const SearchSpaceConfig& cfg);
// Rejects unknown and missing fields; validates the result.
SearchSpaceConfig space_from_json(const Json& j);
// 16 hex digits of FNV-1a over the canonical JSON form.
std::string fingerprint(const SearchSpaceConfig& cfg);

/// One op index per edge.
struct Genotype {
  std::vector<std::size_t> choice;

  // Canonical text form `ops[i0|i1|...]`.
  std::string str() const;
  static Genotype parse(std::string_view text);

  auto operator<=>(const Genotype&) const = default;
};

void validate(const Genotype& g, const SearchSpaceConfig& cfg);
// List of {"from", "to", "op"} triples in edge order.
Json genotype_to_json(const Genotype& g, const SearchSpaceConfig& cfg);
Genotype genotype_from_json(const Json& j, const SearchSpaceConfig& cfg);

// Per-edge argmax; ties go to the lowest op index. Throws on NaN.
Genotype genotype_from_scores(const Matrix& scores);
// Same, honouring cfg.none_selectable.
Genotype genotype_from_scores(const Matrix& scores, const SearchSpaceConfig& cfg);

} // namespace ostr
