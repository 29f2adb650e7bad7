#pragma once

// Five-relation fund knowledge graph and relation-typed mean convolution.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "mgdl/errors.hpp"
#include "mgdl/numerics.hpp"
#include "mgdl/random.hpp"

namespace mgdl::graph {

enum class EntityKind : std::uint8_t { fund, manager, organization, stock, stock_index, type };
inline constexpr std::size_t kEntityKinds = 6;

enum class RelationKind : std::uint8_t { manage, belong_to_org, heavyweight, track, belong_to_type };
inline constexpr std::size_t kRelations = 5;

inline constexpr std::array<std::string_view, kEntityKinds> kEntityNames = {
    "fund", "manager", "organization", "stock", "stock_index", "type"};
inline constexpr std::array<std::string_view, kRelations> kRelationNames = {
    "manage", "belong_to_org", "heavyweight", "track", "belong_to_type"};

/// Non-fund endpoint of each relation; the other endpoint is always a fund.
inline constexpr std::array<EntityKind, kRelations> kRelationPartner = {
    EntityKind::manager, EntityKind::organization, EntityKind::stock, EntityKind::stock_index,
    EntityKind::type};

inline std::string_view to_string(EntityKind k) { return kEntityNames[static_cast<std::size_t>(k)]; }
inline std::string_view to_string(RelationKind r) { return kRelationNames[static_cast<std::size_t>(r)]; }

inline std::optional<EntityKind> parse_entity_kind(std::string_view s) {
  for (std::size_t i = 0; i < kEntityKinds; ++i)
    if (kEntityNames[i] == s) return static_cast<EntityKind>(i);
  return std::nullopt;
}

inline std::optional<RelationKind> parse_relation(std::string_view s) {
  for (std::size_t i = 0; i < kRelations; ++i)
    if (kRelationNames[i] == s) return static_cast<RelationKind>(i);
  return std::nullopt;
}

struct EntityId {
  EntityKind kind = EntityKind::fund;
  std::uint32_t index = 0;

  friend auto operator<=>(const EntityId&, const EntityId&) = default;
};

inline std::string to_string(const EntityId& e) { return std::string(to_string(e.kind)) + ":" + std::to_string(e.index); }

struct Triple {
  EntityId head;
  RelationKind relation = RelationKind::manage;
  EntityId tail;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

inline std::string to_string(const Triple& t) {
  return to_string(t.head) + "\t" + std::string(to_string(t.relation)) + "\t" + to_string(t.tail);
}

/// Number of entities of each kind, indexed by EntityKind.
using EntityCounts = std::array<std::uint32_t, kEntityKinds>;

/// Immutable after construction. Entities are laid out kind by kind in a
/// single global index space, funds first, so fund f has global index f.
class FundGraph {
 public:
  FundGraph() = default;

  std::uint32_t count(EntityKind k) const { return counts_[static_cast<std::size_t>(k)]; }
  const EntityCounts& counts() const { return counts_; }
  std::uint32_t num_funds() const { return count(EntityKind::fund); }
  std::uint32_t num_entities() const { return offsets_.back(); }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<Triple>& edges() const { return edges_; }

  std::uint32_t global_index(const EntityId& e) const {
    return offsets_[static_cast<std::size_t>(e.kind)] + e.index;
  }
  EntityId entity(std::uint32_t global) const {
    std::size_t k = 0;
    while (global >= offsets_[k + 1]) ++k;
    return {static_cast<EntityKind>(k), global - offsets_[k]};
  }

  /// Neighbors of global entity `v` under relation `r`, as global indices, sorted.
  const std::vector<std::uint32_t>& neighbors(std::uint32_t v, RelationKind r) const {
    return adjacency_[static_cast<std::size_t>(r)][v];
  }
  const std::vector<std::uint32_t>& neighbors(const EntityId& e, RelationKind r) const {
    return neighbors(global_index(e), r);
  }
  const std::vector<std::vector<std::uint32_t>>& relation_adjacency(RelationKind r) const {
    return adjacency_[static_cast<std::size_t>(r)];
  }

  friend FundGraph build_graph(const std::vector<Triple>& triples, const EntityCounts& declared);

 private:
  EntityCounts counts_{};
  std::array<std::uint32_t, kEntityKinds + 1> offsets_{};
  std::vector<Triple> edges_;
  std::array<std::vector<std::vector<std::uint32_t>>, kRelations> adjacency_;
};

/// Schema check for one triple; returns the triple with the fund as head.
inline Triple canonical_triple(const Triple& t) {
  const EntityKind partner = kRelationPartner[static_cast<std::size_t>(t.relation)];
  if (t.head.kind == EntityKind::fund && t.tail.kind == partner) return t;
  if (t.tail.kind == EntityKind::fund && t.head.kind == partner) return {t.tail, t.relation, t.head};
  throw SchemaError("schema violation: relation '" + std::string(to_string(t.relation)) + "' connects fund and " +
                    std::string(to_string(partner)) + ", got triple '" + to_string(t) + "'");
}

/// Builds the graph. Entity counts are the larger of `declared` and what the
/// triples reference. Edges are stored fund-first, deduplicated, and adjacency
/// is symmetric.
inline FundGraph build_graph(const std::vector<Triple>& triples, const EntityCounts& declared = {}) {
  FundGraph g;
  g.counts_ = declared;
  std::set<Triple> unique;
  for (const auto& raw : triples) {
    Triple t = canonical_triple(raw);
    for (const EntityId& e : {t.head, t.tail}) {
      auto& c = g.counts_[static_cast<std::size_t>(e.kind)];
      c = std::max(c, e.index + 1);
    }
    unique.insert(t);
  }
  g.offsets_[0] = 0;
  for (std::size_t k = 0; k < kEntityKinds; ++k) g.offsets_[k + 1] = g.offsets_[k] + g.counts_[k];
  g.edges_.assign(unique.begin(), unique.end());
  for (auto& adj : g.adjacency_) adj.assign(g.num_entities(), {});
  for (const auto& t : g.edges_) {
    auto& adj = g.adjacency_[static_cast<std::size_t>(t.relation)];
    const auto h = g.global_index(t.head), u = g.global_index(t.tail);
    adj[h].push_back(u);
    adj[u].push_back(h);
  }
  for (auto& adj : g.adjacency_)
    for (auto& list : adj) std::sort(list.begin(), list.end());
  return g;
}

// ---------------------------------------------------------------------------
// Triples file: `kind:idx<TAB>relation<TAB>kind:idx`, '#' starts a comment.

inline EntityId parse_entity(std::string_view token, std::size_t line_no) {
  auto colon = token.find(':');
  if (colon == std::string_view::npos)
    throw ParseError("line " + std::to_string(line_no) + ": expected kind:index, got '" + std::string(token) + "'");
  auto kind = parse_entity_kind(token.substr(0, colon));
  if (!kind)
    throw ParseError("line " + std::to_string(line_no) + ": unknown entity kind '" +
                     std::string(token.substr(0, colon)) + "'");
  std::string digits(token.substr(colon + 1));
  if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
    throw ParseError("line " + std::to_string(line_no) + ": bad entity index '" + digits + "'");
  return {*kind, static_cast<std::uint32_t>(std::stoul(digits))};
}

inline std::vector<Triple> read_triples(std::istream& in) {
  std::vector<Triple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find('\t')) != std::string_view::npos; rest.remove_prefix(pos + 1))
      fields.push_back(rest.substr(0, pos));
    fields.push_back(rest);
    if (fields.size() != 3)
      throw ParseError("line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    auto rel = parse_relation(fields[1]);
    if (!rel)
      throw ParseError("line " + std::to_string(line_no) + ": unknown relation '" + std::string(fields[1]) + "'");
    out.push_back({parse_entity(fields[0], line_no), *rel, parse_entity(fields[2], line_no)});
  }
  return out;
}

inline void write_triples(std::ostream& out, const std::vector<Triple>& triples) {
  out << "# head\trelation\ttail\n";
  for (const auto& t : triples) out << to_string(t) << '\n';
}

inline std::vector<Triple> read_triples_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open graph triples file '" + path + "'");
  return read_triples(in);
}

// ---------------------------------------------------------------------------
// Convolution

/// Weights of one layer, row convention: out = ReLU(H·self + Σ_r mean_r(H)·relation[r]).
struct ConvLayer {
  num::Tensor self_weight;                          // d×d
  std::array<num::Tensor, kRelations> relation_weight;  // d×d each
};

struct GraphConvParams {
  num::Tensor base;  // H^(0), |E|×d
  std::vector<ConvLayer> layers;

  std::size_t dim() const { return base.cols(); }

  static GraphConvParams init(std::uint32_t entities, std::size_t dim, std::size_t layers, Rng& rng) {
    GraphConvParams p;
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    auto uniform = [&](std::size_t r, std::size_t c, double b) {
      std::vector<double> v(r * c);
      for (auto& x : v) x = rng.uniform(-b, b);
      return num::Tensor::matrix(r, c, std::move(v), true);
    };
    p.base = uniform(entities, dim, bound);
    // Six d×d maps feed each output; shrink so activations keep their scale.
    const double wb = std::sqrt(6.0 / (2.0 * dim)) / std::sqrt(1.0 + kRelations / 2.0);
    for (std::size_t l = 0; l < layers; ++l) {
      ConvLayer layer;
      layer.self_weight = uniform(dim, dim, wb);
      for (auto& w : layer.relation_weight) w = uniform(dim, dim, wb);
      p.layers.push_back(std::move(layer));
    }
    return p;
  }
};

/// Row v of the result is the mean of H over `adjacency[v]`; empty lists give zero rows.
inline num::Tensor neighbor_mean(const num::Tensor& h, const std::vector<std::vector<std::uint32_t>>& adjacency) {
  if (adjacency.size() != h.rows())
    throw DimensionError("neighbor_mean: " + std::to_string(adjacency.size()) + " adjacency rows for " +
                         num::shape_str(h.shape()));
  const std::size_t n = h.rows(), d = h.cols();
  std::vector<double> out(n * d, 0.0);
  auto src = h.data();
  for (std::size_t v = 0; v < n; ++v) {
    const auto& nb = adjacency[v];
    if (nb.empty()) continue;
    const double inv = 1.0 / static_cast<double>(nb.size());
    double* dst = out.data() + v * d;
    for (auto u : nb)
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[u * d + j];
    for (std::size_t j = 0; j < d; ++j) dst[j] *= inv;
  }
  return num::make_op({n, d}, std::move(out), {h},
                      [&adjacency, n, d](num::detail::Node& self) {
                        auto& p = *self.parents[0];
                        for (std::size_t v = 0; v < n; ++v) {
                          const auto& nb = adjacency[v];
                          if (nb.empty()) continue;
                          const double inv = 1.0 / static_cast<double>(nb.size());
                          const double* g = self.grad.data() + v * d;
                          for (auto u : nb)
                            for (std::size_t j = 0; j < d; ++j) p.grad[u * d + j] += inv * g[j];
                        }
                      },
                      "neighbor_mean");
}

/// One relation-aware mean-aggregation layer. The graph must outlive any
/// backward pass through the result.
inline num::Tensor conv_layer(const num::Tensor& h, const FundGraph& graph, const ConvLayer& layer) {
  if (h.rank() != 2 || h.rows() != graph.num_entities())
    throw DimensionError("conv_layer: embedding table " + num::shape_str(h.shape()) + " for " +
                         std::to_string(graph.num_entities()) + " entities");
  num::Tensor acc = num::matmul(h, layer.self_weight);
  for (std::size_t r = 0; r < kRelations; ++r) {
    const auto& adj = graph.relation_adjacency(static_cast<RelationKind>(r));
    bool any = false;
    for (const auto& nb : adj) any = any || !nb.empty();
    if (!any) continue;
    acc = num::add(acc, num::matmul(neighbor_mean(h, adj), layer.relation_weight[r]));
  }
  return num::relu(acc);
}

/// H^(L): `params.layers.size()` convolutions applied to the base table.
inline num::Tensor encode_funds(const FundGraph& graph, const GraphConvParams& params) {
  if (params.layers.empty()) throw DomainError("encode_funds: at least one layer required");
  num::Tensor h = params.base;
  for (const auto& layer : params.layers) h = conv_layer(h, graph, layer);
  return h;
}

}  // namespace mgdl::graph
