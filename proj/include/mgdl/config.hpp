#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "mgdl/errors.hpp"

namespace mgdl {

/// Optimization and architecture settings. Every field has a default; a JSON
/// config may override any subset.
struct TrainConfig {
  std::uint32_t epochs = 100;
  std::uint32_t batch_size = 256;
  double learning_rate = 1e-3;
  std::uint32_t negatives = 4;  // k per positive
  double epsilon = 0.1;         // weight of the risk term
  double temperature = 0.2;     // τ of the risk contrast
  std::uint32_t dim = 32;       // d
  std::uint32_t layers = 2;     // L
  std::uint32_t max_sequence = 50;
  std::uint32_t risk_negatives = 0;  // 0: whole batch in the contrast denominator
  std::uint64_t seed = 0;
  bool disable_conformity = false;
  bool disable_risk = false;
  bool disable_graph = false;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning_rate", "must be positive");
    if (negatives < 1) throw ConfigError("negatives", "must be >= 1");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon", "must be >= 0");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature", "must be positive");
    if (dim < 1) throw ConfigError("dim", "must be >= 1");
    if (layers < 1) throw ConfigError("layers", "must be >= 1");
    if (max_sequence < 1) throw ConfigError("max_sequence", "must be >= 1");
  }

  /// Short tag for reports: full, w/o Con, w/o RP, w/o Graph, or a '+' join.
  std::string variant() const {
    std::string v;
    auto add = [&](const char* s) { v += (v.empty() ? "" : "+") + std::string(s); };
    if (disable_conformity) add("w/o Con");
    if (disable_risk) add("w/o RP");
    if (disable_graph) add("w/o Graph");
    return v.empty() ? "full" : v;
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"negatives", c.negatives},
       {"epsilon", c.epsilon},
       {"temperature", c.temperature},
       {"dim", c.dim},
       {"layers", c.layers},
       {"max_sequence", c.max_sequence},
       {"risk_negatives", c.risk_negatives},
       {"seed", c.seed},
       {"disable_conformity", c.disable_conformity},
       {"disable_risk", c.disable_risk},
       {"disable_graph", c.disable_graph}};
}

/// Applies the keys of `j` on top of `base` and validates. Unknown keys and
/// wrongly typed values are ConfigErrors naming the field.
inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
  const nlohmann::json defaults = base;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (!defaults.contains(key)) throw ConfigError(key, "unknown field");
    const auto& v = it.value();
    const auto& d = defaults.at(key);
    if (d.is_boolean() && !v.is_boolean()) throw ConfigError(key, "expected true or false");
    if (d.is_number_integer() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw ConfigError(key, "expected a non-negative integer");
    if (d.is_number_float() && !v.is_number()) throw ConfigError(key, "expected a number");
  }
  TrainConfig c = base;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("learning_rate", c.learning_rate);
  get("negatives", c.negatives);
  get("epsilon", c.epsilon);
  get("temperature", c.temperature);
  get("dim", c.dim);
  get("layers", c.layers);
  get("max_sequence", c.max_sequence);
  get("risk_negatives", c.risk_negatives);
  get("seed", c.seed);
  get("disable_conformity", c.disable_conformity);
  get("disable_risk", c.disable_risk);
  get("disable_graph", c.disable_graph);
  c.validate();
  return c;
}

}  // namespace mgdl
