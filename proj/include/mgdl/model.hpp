#pragma once

// Every learnable tensor in one container, the shared forward pieces used by
// training and scoring, and the checkpoint format.

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgdl/config.hpp"
#include "mgdl/datagen.hpp"
#include "mgdl/disentangle.hpp"
#include "mgdl/errors.hpp"
#include "mgdl/fundgraph.hpp"
#include "mgdl/numerics.hpp"
#include "mgdl/objectives.hpp"
#include "mgdl/random.hpp"

namespace mgdl::model {

inline constexpr int kCheckpointSchemaVersion = 1;

/// Sizes that fix every parameter shape.
struct ModelDims {
  graph::EntityCounts entities{};
  std::uint32_t types = 0;
  std::uint32_t profile_width = 0;
  std::uint32_t dim = 0;
  std::uint32_t layers = 0;

  std::uint32_t funds() const { return entities[0]; }
  std::uint32_t num_entities() const {
    std::uint32_t n = 0;
    for (auto c : entities) n += c;
    return n;
  }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

inline ModelDims dims_for(const data::DatasetBundle& d, const TrainConfig& c) {
  return {d.entity_counts, d.num_types, static_cast<std::uint32_t>(d.profile_width()), c.dim, c.layers};
}

inline nlohmann::json dims_to_json(const ModelDims& m) {
  nlohmann::json e;
  for (std::size_t k = 0; k < graph::kEntityKinds; ++k) e[std::string(graph::kEntityNames[k])] = m.entities[k];
  return {{"entities", e}, {"types", m.types}, {"profile_width", m.profile_width}, {"dim", m.dim}, {"layers", m.layers}};
}

inline ModelDims dims_from_json(const nlohmann::json& j) {
  ModelDims m;
  for (std::size_t k = 0; k < graph::kEntityKinds; ++k)
    m.entities[k] = j.at("entities").at(std::string(graph::kEntityNames[k])).get<std::uint32_t>();
  m.types = j.at("types").get<std::uint32_t>();
  m.profile_width = j.at("profile_width").get<std::uint32_t>();
  m.dim = j.at("dim").get<std::uint32_t>();
  m.layers = j.at("layers").get<std::uint32_t>();
  return m;
}

/// Which ablation switch, if any, makes a parameter unused.
enum class ParamGroup { shared, graph, risk, conformity };

struct NamedTensor {
  std::string name;
  num::Tensor tensor;
  ParamGroup group = ParamGroup::shared;
};

struct ModelParams {
  ModelDims dims;
  graph::GraphConvParams graph;  // base table H^(0) over all entities, plus layers
  aspect::DisentangleParams disentangle;
  objectives::RiskSignalParams risk;
  objectives::HeadParams heads;

  static ModelParams init(const ModelDims& dims, double temperature, Rng& rng) {
    if (dims.funds() == 0 || dims.types == 0 || dims.dim == 0 || dims.layers == 0)
      throw DomainError("ModelParams::init: empty catalog or zero-sized model");
    ModelParams p;
    p.dims = dims;
    p.graph = graph::GraphConvParams::init(dims.num_entities(), dims.dim, dims.layers, rng);
    p.disentangle = aspect::DisentangleParams::init(dims.dim, rng);
    p.risk = objectives::RiskSignalParams::init(dims.types, dims.dim, temperature, rng);
    p.heads = objectives::HeadParams::init(dims.profile_width, dims.dim, dims.dim, rng);
    return p;
  }

  /// Calls fn(name, tensor&, group) for every parameter in a fixed order.
  /// Names are stable across runs and used by the checkpoint.
  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    fn(std::string("graph.base"), self.graph.base, ParamGroup::shared);
    for (std::size_t l = 0; l < self.graph.layers.size(); ++l) {
      const std::string prefix = "graph.layer" + std::to_string(l) + ".";
      fn(prefix + "self", self.graph.layers[l].self_weight, ParamGroup::graph);
      for (std::size_t r = 0; r < graph::kRelations; ++r)
        fn(prefix + std::string(graph::kRelationNames[r]), self.graph.layers[l].relation_weight[r], ParamGroup::graph);
    }
    fn(std::string("disentangle.projection"), self.disentangle.projection, ParamGroup::shared);
    fn(std::string("disentangle.interest"), self.disentangle.interest, ParamGroup::shared);
    fn(std::string("disentangle.risk"), self.disentangle.risk, ParamGroup::risk);
    fn(std::string("disentangle.conformity"), self.disentangle.conformity, ParamGroup::conformity);
    fn(std::string("risk.type_embedding"), self.risk.type_embedding, ParamGroup::risk);
    auto ffn = [&](const std::string& prefix, auto& f, ParamGroup g) {
      fn(prefix + ".w1", f.w1, g);
      fn(prefix + ".b1", f.b1, g);
      fn(prefix + ".w2", f.w2, g);
      fn(prefix + ".b2", f.b2, g);
    };
    ffn("risk.ffn", self.risk.ffn, ParamGroup::risk);
    ffn("heads.conformity_user", self.heads.conformity_user, ParamGroup::conformity);
    ffn("heads.conformity_item", self.heads.conformity_item, ParamGroup::conformity);
    ffn("heads.interest_user", self.heads.interest_user, ParamGroup::shared);
    ffn("heads.interest_item", self.heads.interest_item, ParamGroup::shared);
  }

  std::vector<NamedTensor> named_parameters() const {
    std::vector<NamedTensor> out;
    visit(*this, [&](const std::string& name, const num::Tensor& t, ParamGroup g) { out.push_back({name, t, g}); });
    return out;
  }

  /// Deep copy: the clone shares no storage with this model.
  ModelParams clone() const {
    ModelParams c = *this;
    visit(c, [](const std::string&, num::Tensor& t, ParamGroup) { t = t.detach(true); });
    return c;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : named_parameters()) n += p.tensor.size();
    return n;
  }

  void zero_grad() const {
    for (auto& p : named_parameters()) {
      num::Tensor t = p.tensor;
      t.zero_grad();
    }
  }
};

/// True when every parameter tensor has identical shape and bit pattern.
inline bool same_parameters(const ModelParams& a, const ModelParams& b) {
  auto pa = a.named_parameters(), pb = b.named_parameters();
  if (a.dims != b.dims || pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].name != pb[i].name || pa[i].tensor.shape() != pb[i].tensor.shape()) return false;
    auto x = pa[i].tensor.data(), y = pb[i].tensor.data();
    if (std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Forward pieces

/// Fund rows of H^(L), or of H^(0) when the graph is bypassed.
inline num::Tensor fund_table(const ModelParams& p, const graph::FundGraph& g, bool use_graph) {
  if (g.counts() != p.dims.entities) throw SchemaError("fund graph does not match the model's entity counts");
  std::vector<std::uint32_t> funds(p.dims.funds());
  for (std::uint32_t f = 0; f < funds.size(); ++f) funds[f] = f;
  const num::Tensor table = use_graph ? graph::encode_funds(g, p.graph) : p.graph.base;
  return num::gather_rows(table, funds);
}

/// Stacked aspect rows for a list of non-empty sequences.
struct BatchAspects {
  num::Tensor interest;    // B×d
  num::Tensor risk;        // B×d
  num::Tensor conformity;  // B×d
};

inline BatchAspects batch_aspects(const ModelParams& p, const num::Tensor& funds,
                                  const std::vector<const aspect::BehaviorSequence*>& seqs) {
  std::vector<num::Tensor> xi, xr, xc;
  for (const auto* s : seqs) {
    auto out = aspect::disentangle(aspect::gather_behavior(*s, funds), p.disentangle);
    xi.push_back(out.interest);
    xr.push_back(out.risk);
    xc.push_back(out.conformity);
  }
  return {num::concat_rows(xi), num::concat_rows(xr), num::concat_rows(xc)};
}

/// x^T rows for the same sequences.
inline num::Tensor batch_type_signal(const ModelParams& p, const std::vector<const aspect::BehaviorSequence*>& seqs) {
  std::vector<num::Tensor> rows;
  for (const auto* s : seqs) rows.push_back(objectives::type_repr(s->types, p.risk));
  return num::concat_rows(rows);
}

inline num::Tensor profile_rows(const std::vector<data::UserProfile>& profiles, const std::vector<std::uint32_t>& users,
                                std::size_t width) {
  std::vector<double> v;
  v.reserve(users.size() * width);
  for (auto u : users) {
    const auto& f = profiles.at(u).features;
    if (f.size() != width) throw SchemaError("profile width mismatch for user " + std::to_string(u));
    v.insert(v.end(), f.begin(), f.end());
  }
  return num::Tensor::matrix(users.size(), width, std::move(v));
}

/// Head outputs for scoring without gradients. Rows of the user tables follow
/// `users`; item tables cover the whole catalog.
struct ScoreTables {
  std::vector<std::uint32_t> users;
  num::Tensor conformity_user, conformity_item;
  num::Tensor interest_user, interest_item;
  BatchAspects aspects;

  double conformity(std::size_t row, std::uint32_t fund) const { return score(conformity_user, conformity_item, row, fund); }
  double interest(std::size_t row, std::uint32_t fund) const { return score(interest_user, interest_item, row, fund); }

 private:
  static double score(const num::Tensor& u, const num::Tensor& i, std::size_t row, std::uint32_t fund) {
    const std::size_t d = u.cols();
    const double* a = u.data().data() + row * d;
    const double* b = i.data().data() + static_cast<std::size_t>(fund) * d;
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += a[j] * b[j];
    return num::sigmoid(acc);
  }
};

/// `seqs` is indexed by user id; every listed user must have a non-empty sequence.
inline ScoreTables score_tables(const ModelParams& p, const graph::FundGraph& g,
                                const std::vector<aspect::BehaviorSequence>& seqs,
                                const std::vector<data::UserProfile>& profiles, const std::vector<std::uint32_t>& users,
                                bool use_graph) {
  num::NoGradGuard no_grad;
  ScoreTables t;
  t.users = users;
  const num::Tensor funds = fund_table(p, g, use_graph);
  std::vector<const aspect::BehaviorSequence*> batch;
  for (auto u : users) batch.push_back(&seqs.at(u));
  t.conformity_item = p.heads.conformity_item(funds);
  t.interest_item = p.heads.interest_item(funds);
  if (!users.empty()) {
    t.aspects = batch_aspects(p, funds, batch);
    const num::Tensor prof = profile_rows(profiles, users, p.dims.profile_width);
    t.conformity_user = p.heads.conformity_user(num::concat({prof, t.aspects.conformity}));
    t.interest_user = p.heads.interest_user(num::concat({prof, t.aspects.interest}));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Checkpoint

struct Checkpoint {
  ModelParams params;
  TrainConfig config;
  std::vector<std::uint64_t> popularity_counts;  // train-split counts; γ is derived from them
  std::uint32_t epoch = 0;
  nlohmann::json metrics = nlohmann::json::object();

  objectives::PopularityTable popularity() const { return objectives::popularity(popularity_counts); }
};

inline nlohmann::ordered_json checkpoint_to_json(const Checkpoint& c) {
  nlohmann::ordered_json j;
  j["format"] = "mgdl-checkpoint";
  j["schema_version"] = kCheckpointSchemaVersion;
  j["dims"] = dims_to_json(c.params.dims);
  j["config"] = nlohmann::json(c.config);
  j["epoch"] = c.epoch;
  j["metrics"] = c.metrics;
  j["popularity_counts"] = c.popularity_counts;
  nlohmann::ordered_json params;
  for (const auto& p : c.params.named_parameters()) {
    auto d = p.tensor.data();
    params[p.name] = {{"shape", p.tensor.shape()}, {"data", std::vector<double>(d.begin(), d.end())}};
  }
  j["parameters"] = std::move(params);
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "mgdl-checkpoint") throw SchemaError("not a checkpoint file");
    if (j.at("schema_version").get<int>() != kCheckpointSchemaVersion)
      throw SchemaError("unsupported checkpoint schema_version " + j.at("schema_version").dump());
    Checkpoint c;
    c.config = config_from_json(j.at("config"));
    const ModelDims dims = dims_from_json(j.at("dims"));
    Rng scratch(0);
    c.params = ModelParams::init(dims, c.config.temperature, scratch);
    const auto& stored = j.at("parameters");
    auto named = c.params.named_parameters();
    if (stored.size() != named.size())
      throw SchemaError("checkpoint holds " + std::to_string(stored.size()) + " tensors, model expects " +
                        std::to_string(named.size()));
    for (auto& p : named) {
      if (!stored.contains(p.name)) throw SchemaError("checkpoint is missing parameter '" + p.name + "'");
      const auto& e = stored.at(p.name);
      if (e.at("shape").get<num::Shape>() != p.tensor.shape())
        throw SchemaError("parameter '" + p.name + "' has shape " + e.at("shape").dump() + ", expected " +
                          num::shape_str(p.tensor.shape()));
      auto values = e.at("data").get<std::vector<double>>();
      auto dst = p.tensor.mutable_data();
      if (values.size() != dst.size()) throw SchemaError("parameter '" + p.name + "' has the wrong element count");
      std::copy(values.begin(), values.end(), dst.begin());
    }
    c.popularity_counts = j.at("popularity_counts").get<std::vector<std::uint64_t>>();
    if (c.popularity_counts.size() != dims.funds()) throw SchemaError("popularity table does not cover the catalog");
    c.epoch = j.at("epoch").get<std::uint32_t>();
    c.metrics = j.at("metrics");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw SchemaError(std::string("checkpoint config: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write checkpoint '" + path.string() + "'");
  out << checkpoint_to_json(c).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open checkpoint '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint '" + path.string() + "': " + e.what());
  }
  return checkpoint_from_json(j);
}

/// Schema check between a checkpoint and a dataset it is about to score.
inline void require_compatible(const Checkpoint& c, const data::DatasetBundle& d) {
  const auto& m = c.params.dims;
  if (m.entities != d.entity_counts)
    throw SchemaError("catalog mismatch: checkpoint has " + std::to_string(m.funds()) + " funds / " +
                      std::to_string(m.num_entities()) + " entities, dataset has " + std::to_string(d.num_funds()) +
                      " funds");
  if (m.types != d.num_types) throw SchemaError("catalog mismatch: fund type count differs");
  if (m.profile_width != d.profile_width()) throw SchemaError("profile width differs between checkpoint and dataset");
}

}  // namespace mgdl::model
