#pragma once

// Synthetic interaction data with planted interest / risk / conformity
// structure, the on-disk formats, the temporal split and sequence building.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgdl/disentangle.hpp"
#include "mgdl/errors.hpp"
#include "mgdl/fundgraph.hpp"
#include "mgdl/random.hpp"

namespace mgdl::data {

inline constexpr int kDatasetSchemaVersion = 1;

struct SyntheticSpec {
  std::uint32_t users = 2000;
  std::uint32_t funds = 500;
  std::uint32_t managers = 100;
  std::uint32_t organizations = 20;
  std::uint32_t stocks = 200;
  std::uint32_t indices = 20;
  std::uint32_t types = 5;
  std::uint32_t risk_levels = 3;
  std::uint32_t archetypes = 8;
  std::uint32_t days = 14;
  double interactions_per_day = 1.25;  // Poisson mean per user-day
  double zipf = 1.0;                  // popularity skew: fund of rank r has weight r^-zipf
  double lambda_min = 0.0;
  double lambda_max = 1.0;
  std::uint32_t profile_width = 8;
  std::uint32_t stocks_per_fund = 4;
  double graph_fidelity = 0.85;  // chance a graph link stays inside the fund's archetype
  std::uint64_t seed = 0;

  void validate() const {
    auto positive = [](const char* field, std::uint64_t v) {
      if (v < 1) throw ConfigError(field, "must be >= 1");
    };
    positive("users", users);
    positive("funds", funds);
    positive("managers", managers);
    positive("organizations", organizations);
    positive("stocks", stocks);
    positive("indices", indices);
    positive("types", types);
    positive("risk_levels", risk_levels);
    positive("archetypes", archetypes);
    positive("days", days);
    positive("profile_width", profile_width);
    if (risk_levels > types) throw ConfigError("risk_levels", "more risk levels than fund types");
    if (!(interactions_per_day > 0.0) || !std::isfinite(interactions_per_day))
      throw ConfigError("interactions_per_day", "must be positive");
    if (!(zipf >= 0.0) || !std::isfinite(zipf)) throw ConfigError("zipf", "must be >= 0");
    if (!(lambda_min >= 0.0 && lambda_min <= 1.0)) throw ConfigError("lambda_min", "must lie in [0, 1]");
    if (!(lambda_max >= lambda_min && lambda_max <= 1.0))
      throw ConfigError("lambda_max", "must lie in [lambda_min, 1]");
    if (!(graph_fidelity >= 0.0 && graph_fidelity <= 1.0)) throw ConfigError("graph_fidelity", "must lie in [0, 1]");
  }
};

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"users", s.users},
       {"funds", s.funds},
       {"managers", s.managers},
       {"organizations", s.organizations},
       {"stocks", s.stocks},
       {"indices", s.indices},
       {"types", s.types},
       {"risk_levels", s.risk_levels},
       {"archetypes", s.archetypes},
       {"days", s.days},
       {"interactions_per_day", s.interactions_per_day},
       {"zipf", s.zipf},
       {"lambda_min", s.lambda_min},
       {"lambda_max", s.lambda_max},
       {"profile_width", s.profile_width},
       {"stocks_per_fund", s.stocks_per_fund},
       {"graph_fidelity", s.graph_fidelity},
       {"seed", s.seed}};
}

/// Unknown keys are rejected; absent keys keep their defaults.
inline SyntheticSpec spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("spec", "expected a JSON object");
  SyntheticSpec s;
  nlohmann::json defaults = s;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw ConfigError(it.key(), "unknown field");
    const auto& v = it.value();
    if (!v.is_number()) throw ConfigError(it.key(), "expected a number");
    if (defaults[it.key()].is_number_integer() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw ConfigError(it.key(), "expected a non-negative integer");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("users", s.users);
  get("funds", s.funds);
  get("managers", s.managers);
  get("organizations", s.organizations);
  get("stocks", s.stocks);
  get("indices", s.indices);
  get("types", s.types);
  get("risk_levels", s.risk_levels);
  get("archetypes", s.archetypes);
  get("days", s.days);
  get("interactions_per_day", s.interactions_per_day);
  get("zipf", s.zipf);
  get("lambda_min", s.lambda_min);
  get("lambda_max", s.lambda_max);
  get("profile_width", s.profile_width);
  get("stocks_per_fund", s.stocks_per_fund);
  get("graph_fidelity", s.graph_fidelity);
  get("seed", s.seed);
  s.validate();
  return s;
}

struct Interaction {
  std::uint32_t user = 0;
  std::uint32_t fund = 0;
  std::uint32_t day = 0;
  std::uint32_t tick = 0;

  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

struct UserProfile {
  std::uint32_t user = 0;
  std::vector<double> features;

  friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

struct CatalogEntry {
  std::uint32_t fund = 0;
  std::uint32_t type = 0;
  std::uint32_t risk_level = 0;

  friend bool operator==(const CatalogEntry&, const CatalogEntry&) = default;
};

struct UserLatent {
  std::uint32_t user = 0;
  std::uint32_t archetype = 0;
  std::uint32_t risk_level = 0;
  double lambda = 0.0;

  friend bool operator==(const UserLatent&, const UserLatent&) = default;
};

struct Split {
  std::vector<Interaction> train, validation, test;

  friend bool operator==(const Split&, const Split&) = default;
};

struct DatasetBundle {
  std::uint32_t num_users = 0;
  std::uint32_t num_types = 0;
  std::uint32_t num_risk_levels = 0;
  graph::EntityCounts entity_counts{};
  Split split;
  std::vector<UserProfile> profiles;  // indexed by user id
  std::vector<graph::Triple> triples;
  std::vector<CatalogEntry> catalog;  // indexed by fund id
  std::vector<UserLatent> latents;    // empty unless synthetic; probing only
  std::vector<std::uint32_t> popularity_rank;  // planted Zipf rank per fund, synthetic only
  std::vector<std::uint32_t> fund_archetype;   // planted, synthetic only

  std::uint32_t num_funds() const { return entity_counts[0]; }
  std::size_t profile_width() const { return profiles.empty() ? 0 : profiles.front().features.size(); }
  bool has_latents() const { return !latents.empty(); }

  std::vector<Interaction> all_interactions() const {
    std::vector<Interaction> all = split.train;
    all.insert(all.end(), split.validation.begin(), split.validation.end());
    all.insert(all.end(), split.test.begin(), split.test.end());
    return all;
  }

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

// ---------------------------------------------------------------------------
// Split and sequences

/// Test is the last distinct day, validation the one before, train the rest.
/// Each partition is sorted by (user, day, tick, fund) so input order is irrelevant.
inline Split temporal_split(const std::vector<Interaction>& interactions) {
  std::vector<std::uint32_t> days;
  for (const auto& x : interactions) days.push_back(x.day);
  std::sort(days.begin(), days.end());
  days.erase(std::unique(days.begin(), days.end()), days.end());
  if (days.size() < 3)
    throw DomainError("temporal_split: need at least 3 distinct days, got " + std::to_string(days.size()));
  const std::uint32_t last = days.back(), penultimate = days[days.size() - 2];
  Split s;
  for (const auto& x : interactions) {
    if (x.day == last)
      s.test.push_back(x);
    else if (x.day == penultimate)
      s.validation.push_back(x);
    else
      s.train.push_back(x);
  }
  auto key = [](const Interaction& a, const Interaction& b) {
    return std::tie(a.user, a.day, a.tick, a.fund) < std::tie(b.user, b.day, b.tick, b.fund);
  };
  std::sort(s.train.begin(), s.train.end(), key);
  std::sort(s.validation.begin(), s.validation.end(), key);
  std::sort(s.test.begin(), s.test.end(), key);
  return s;
}

/// One sequence per user id in [0, num_users); users without interactions get
/// an empty sequence. Ordered by (day, tick, fund), keeping the newest `max_length`.
inline std::vector<aspect::BehaviorSequence> build_sequences(const std::vector<Interaction>& train,
                                                             const std::vector<CatalogEntry>& catalog,
                                                             std::uint32_t num_users,
                                                             std::size_t max_length = aspect::kDefaultMaxSequence) {
  if (max_length == 0) throw DomainError("build_sequences: max_length must be positive");
  std::vector<std::vector<Interaction>> per_user(num_users);
  for (const auto& x : train) {
    if (x.user >= num_users) throw LookupError("build_sequences: unknown user " + std::to_string(x.user));
    if (x.fund >= catalog.size()) throw LookupError("build_sequences: unknown fund " + std::to_string(x.fund));
    per_user[x.user].push_back(x);
  }
  std::vector<aspect::BehaviorSequence> out(num_users);
  for (std::uint32_t u = 0; u < num_users; ++u) {
    auto& xs = per_user[u];
    std::sort(xs.begin(), xs.end(), [](const Interaction& a, const Interaction& b) {
      return std::tie(a.day, a.tick, a.fund) < std::tie(b.day, b.tick, b.fund);
    });
    const std::size_t skip = xs.size() > max_length ? xs.size() - max_length : 0;
    out[u].user = u;
    for (std::size_t i = skip; i < xs.size(); ++i) {
      out[u].funds.push_back(xs[i].fund);
      out[u].types.push_back(catalog[xs[i].fund].type);
    }
  }
  return out;
}

/// Interaction count per fund.
inline std::vector<std::uint64_t> fund_counts(const std::vector<Interaction>& xs, std::uint32_t num_funds) {
  std::vector<std::uint64_t> c(num_funds, 0);
  for (const auto& x : xs) {
    if (x.fund >= num_funds) throw LookupError("fund_counts: unknown fund " + std::to_string(x.fund));
    ++c[x.fund];
  }
  return c;
}

// ---------------------------------------------------------------------------
// Generation

/// Risk level of fund type `t`: types are split into contiguous, near-equal blocks.
inline std::uint32_t risk_level_of_type(std::uint32_t t, std::uint32_t types, std::uint32_t levels) {
  return static_cast<std::uint32_t>((static_cast<std::uint64_t>(t) * levels) / types);
}

inline DatasetBundle generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::uint32_t A = spec.archetypes, L = spec.risk_levels, F = spec.funds;
  if (static_cast<std::uint64_t>(A) * L > F)
    throw DomainError("generate: " + std::to_string(F) + " funds cannot cover " + std::to_string(A) + " archetypes x " +
                      std::to_string(L) + " risk levels");

  std::vector<std::vector<std::uint32_t>> types_of_level(L);
  for (std::uint32_t t = 0; t < spec.types; ++t) types_of_level[risk_level_of_type(t, spec.types, L)].push_back(t);
  for (std::uint32_t l = 0; l < L; ++l)
    if (types_of_level[l].empty()) throw DomainError("generate: risk level " + std::to_string(l) + " has no fund type");

  DatasetBundle b;
  b.num_users = spec.users;
  b.num_types = spec.types;
  b.num_risk_levels = L;
  b.entity_counts = {F, spec.managers, spec.organizations, spec.stocks, spec.indices, spec.types};

  // Planted popularity: a random rank per fund, weight rank^-s.
  std::vector<std::uint32_t> order(F);
  for (std::uint32_t f = 0; f < F; ++f) order[f] = f;
  rng.shuffle(order);
  b.popularity_rank.assign(F, 0);
  for (std::uint32_t r = 0; r < F; ++r) b.popularity_rank[order[r]] = r + 1;
  std::vector<double> weight(F);
  for (std::uint32_t f = 0; f < F; ++f) weight[f] = std::pow(static_cast<double>(b.popularity_rank[f]), -spec.zipf);

  // Risk levels: in rank order each fund joins the level with the least
  // accumulated weight, so all levels carry near-equal popularity mass.
  std::vector<std::vector<std::uint32_t>> level_funds(L);
  std::vector<double> level_mass(L, 0.0);
  for (auto f : order) {
    const auto l = static_cast<std::uint32_t>(std::min_element(level_mass.begin(), level_mass.end()) - level_mass.begin());
    level_funds[l].push_back(f);
    level_mass[l] += weight[f];
  }
  // Archetypes: dealt round-robin over a shuffled copy of each level.
  std::vector<std::uint32_t> cell(F);
  for (std::uint32_t l = 0; l < L; ++l) {
    if (level_funds[l].size() < A)
      throw DomainError("generate: risk level " + std::to_string(l) + " received " +
                        std::to_string(level_funds[l].size()) + " funds, fewer than " + std::to_string(A) +
                        " archetypes");
    auto shuffled = level_funds[l];
    rng.shuffle(shuffled);
    for (std::size_t i = 0; i < shuffled.size(); ++i) cell[shuffled[i]] = static_cast<std::uint32_t>(i % A) * L + l;
    std::sort(level_funds[l].begin(), level_funds[l].end());
  }
  auto& fund_archetype = b.fund_archetype;
  fund_archetype.resize(F);
  b.catalog.resize(F);
  for (std::uint32_t f = 0; f < F; ++f) {
    fund_archetype[f] = cell[f] / L;
    const std::uint32_t level = cell[f] % L;
    const auto& ts = types_of_level[level];
    b.catalog[f] = {f, ts[rng.uniform_int(ts.size())], level};
  }

  // Candidate pools and their weights.
  std::vector<std::vector<std::uint32_t>> cell_funds(static_cast<std::size_t>(A) * L);
  for (std::uint32_t f = 0; f < F; ++f) cell_funds[cell[f]].push_back(f);
  auto weights_of = [](const std::vector<std::uint32_t>& pool, const std::vector<double>& w) {
    std::vector<double> out;
    for (auto f : pool) out.push_back(w[f]);
    return out;
  };
  std::vector<std::vector<double>> level_w(L), cell_w(cell_funds.size());
  for (std::uint32_t l = 0; l < L; ++l) level_w[l] = weights_of(level_funds[l], weight);
  for (std::size_t c = 0; c < cell_funds.size(); ++c) cell_w[c] = weights_of(cell_funds[c], weight);

  // Graph: managers, stocks and indices belong to archetypes; organizations do not.
  auto pool_pick = [&](std::uint32_t archetype, std::uint32_t total) -> std::uint32_t {
    // Entities e with e mod A == archetype form the archetype's pool.
    if (total < A || rng.uniform() >= spec.graph_fidelity) return static_cast<std::uint32_t>(rng.uniform_int(total));
    const std::uint32_t size = (total - archetype + A - 1) / A;
    return archetype + A * static_cast<std::uint32_t>(rng.uniform_int(size));
  };
  using graph::EntityKind;
  using graph::RelationKind;
  for (std::uint32_t f = 0; f < F; ++f) {
    const graph::EntityId fe{EntityKind::fund, f};
    const std::uint32_t a = fund_archetype[f];
    b.triples.push_back({fe, RelationKind::manage, {EntityKind::manager, pool_pick(a, spec.managers)}});
    b.triples.push_back({fe, RelationKind::belong_to_org,
                         {EntityKind::organization, static_cast<std::uint32_t>(rng.uniform_int(spec.organizations))}});
    for (std::uint32_t k = 0; k < spec.stocks_per_fund; ++k)
      b.triples.push_back({fe, RelationKind::heavyweight, {EntityKind::stock, pool_pick(a, spec.stocks)}});
    if (rng.uniform() < 0.5)
      b.triples.push_back({fe, RelationKind::track, {EntityKind::stock_index, pool_pick(a, spec.indices)}});
    b.triples.push_back({fe, RelationKind::belong_to_type, {EntityKind::type, b.catalog[f].type}});
  }
  b.triples = graph::build_graph(b.triples, b.entity_counts).edges();

  // Users. Risk levels are uniform; the archetype is drawn in proportion to
  // the cell's popularity mass within the level. With near-equal level masses
  // every fund's expected interaction count is then proportional to rank^-s.
  std::vector<std::vector<double>> archetype_mass(L, std::vector<double>(A, 0.0));
  for (std::size_t c = 0; c < cell_funds.size(); ++c)
    for (double w : cell_w[c]) archetype_mass[c % L][c / L] += w;
  b.latents.resize(spec.users);
  b.profiles.resize(spec.users);
  for (std::uint32_t u = 0; u < spec.users; ++u) {
    auto& z = b.latents[u];
    z.user = u;
    z.risk_level = static_cast<std::uint32_t>(rng.uniform_int(L));
    z.archetype = static_cast<std::uint32_t>(rng.categorical(archetype_mass[z.risk_level]));
    z.lambda = rng.uniform(spec.lambda_min, spec.lambda_max);
    auto& p = b.profiles[u];
    p.user = u;
    // Feature 0 is a noisy reading of the crowd-following tendency; the rest is noise.
    p.features.resize(spec.profile_width);
    p.features[0] = 2.0 * z.lambda - 1.0 + rng.normal(0.0, 0.5);
    for (std::uint32_t j = 1; j < spec.profile_width; ++j) p.features[j] = rng.normal(0.0, 1.0);
  }

  std::vector<Interaction> all;
  for (std::uint32_t day = 0; day < spec.days; ++day)
    for (std::uint32_t u = 0; u < spec.users; ++u) {
      const auto& z = b.latents[u];
      const std::uint32_t n = rng.poisson(spec.interactions_per_day);
      for (std::uint32_t tick = 0; tick < n; ++tick) {
        std::uint32_t f;
        if (rng.uniform() < z.lambda) {
          f = level_funds[z.risk_level][rng.categorical(level_w[z.risk_level])];
        } else {
          const std::size_t c = static_cast<std::size_t>(z.archetype) * L + z.risk_level;
          f = cell_funds[c][rng.categorical(cell_w[c])];
        }
        all.push_back({u, f, day, tick});
      }
    }
  b.split = temporal_split(all);
  return b;
}

// ---------------------------------------------------------------------------
// Files

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  for (std::size_t pos; (pos = line.find(sep)) != std::string_view::npos; line.remove_prefix(pos + 1))
    out.push_back(line.substr(0, pos));
  out.push_back(line);
  return out;
}

inline std::uint32_t parse_u32(std::string_view s, const std::string& where) {
  std::uint32_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError(where + ": expected an unsigned integer, got '" + std::string(s) + "'");
  return v;
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    throw ParseError(where + ": expected a finite number, got '" + std::string(s) + "'");
  return v;
}

/// Calls `row(fields, where)` for each non-empty, non-comment line.
template <class Fn>
void for_each_row(std::istream& in, const std::string& name, std::size_t expected_fields, Fn row) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto fields = split_fields(line, '\t');
    const std::string where = name + ":" + std::to_string(line_no);
    if (fields.size() != expected_fields)
      throw ParseError(where + ": expected " + std::to_string(expected_fields) + " tab-separated fields, got " +
                       std::to_string(fields.size()));
    row(fields, where);
  }
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw SchemaError("cannot open '" + p.string() + "'");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + p.string() + "'");
  return out;
}

}  // namespace detail

inline void write_interactions(std::ostream& out, const std::vector<Interaction>& xs) {
  out << "# user_id\tfund_id\tday\ttick\n";
  for (const auto& x : xs) out << x.user << '\t' << x.fund << '\t' << x.day << '\t' << x.tick << '\n';
}

inline std::vector<Interaction> read_interactions(std::istream& in) {
  std::vector<Interaction> xs;
  detail::for_each_row(in, "interactions", 4, [&](const auto& f, const std::string& where) {
    xs.push_back({detail::parse_u32(f[0], where), detail::parse_u32(f[1], where), detail::parse_u32(f[2], where),
                  detail::parse_u32(f[3], where)});
  });
  return xs;
}

inline void write_profiles(std::ostream& out, const std::vector<UserProfile>& ps) {
  out << "# user_id\tfeatures\n";
  for (const auto& p : ps) {
    out << p.user << '\t';
    for (std::size_t j = 0; j < p.features.size(); ++j) out << (j ? "," : "") << detail::format_double(p.features[j]);
    out << '\n';
  }
}

inline std::vector<UserProfile> read_profiles(std::istream& in) {
  std::vector<UserProfile> ps;
  detail::for_each_row(in, "profiles", 2, [&](const auto& f, const std::string& where) {
    UserProfile p{detail::parse_u32(f[0], where), {}};
    for (auto v : detail::split_fields(f[1], ',')) p.features.push_back(detail::parse_double(v, where));
    if (!ps.empty() && ps.front().features.size() != p.features.size())
      throw ParseError(where + ": profile width " + std::to_string(p.features.size()) + " differs from " +
                       std::to_string(ps.front().features.size()));
    ps.push_back(std::move(p));
  });
  return ps;
}

inline void write_catalog(std::ostream& out, const std::vector<CatalogEntry>& cs) {
  out << "# fund_id\ttype_id\trisk_level\n";
  for (const auto& c : cs) out << c.fund << '\t' << c.type << '\t' << c.risk_level << '\n';
}

inline std::vector<CatalogEntry> read_catalog(std::istream& in) {
  std::vector<CatalogEntry> cs;
  detail::for_each_row(in, "catalog", 3, [&](const auto& f, const std::string& where) {
    cs.push_back({detail::parse_u32(f[0], where), detail::parse_u32(f[1], where), detail::parse_u32(f[2], where)});
  });
  return cs;
}

inline void write_latents(std::ostream& out, const std::vector<UserLatent>& ls) {
  out << "# user_id\tarchetype\trisk_level\tlambda\n";
  for (const auto& l : ls)
    out << l.user << '\t' << l.archetype << '\t' << l.risk_level << '\t' << detail::format_double(l.lambda) << '\n';
}

inline std::vector<UserLatent> read_latents(std::istream& in) {
  std::vector<UserLatent> ls;
  detail::for_each_row(in, "latents", 4, [&](const auto& f, const std::string& where) {
    ls.push_back({detail::parse_u32(f[0], where), detail::parse_u32(f[1], where), detail::parse_u32(f[2], where),
                  detail::parse_double(f[3], where)});
  });
  return ls;
}

inline const char* kInteractionsFile = "interactions.tsv";
inline const char* kProfilesFile = "profiles.tsv";
inline const char* kGraphFile = "graph.tsv";
inline const char* kCatalogFile = "catalog.tsv";
inline const char* kLatentsFile = "latents.tsv";
inline const char* kMetaFile = "dataset.json";

/// Writes every file of the bundle into `dir` (created if needed). The latents
/// file is written only when latents exist.
inline void write_dataset(const std::filesystem::path& dir, const DatasetBundle& b,
                          const std::optional<SyntheticSpec>& spec = std::nullopt) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["schema_version"] = kDatasetSchemaVersion;
  meta["users"] = b.num_users;
  meta["types"] = b.num_types;
  meta["risk_levels"] = b.num_risk_levels;
  nlohmann::ordered_json counts;
  for (std::size_t k = 0; k < graph::kEntityKinds; ++k)
    counts[std::string(graph::kEntityNames[k])] = b.entity_counts[k];
  meta["entities"] = counts;
  if (!b.popularity_rank.empty()) meta["popularity_rank"] = b.popularity_rank;
  if (!b.fund_archetype.empty()) meta["fund_archetype"] = b.fund_archetype;
  if (spec) meta["generator"] = nlohmann::json(*spec);
  {
    auto out = detail::open_out(dir / kMetaFile);
    out << meta.dump(2) << '\n';
  }
  {
    auto out = detail::open_out(dir / kInteractionsFile);
    write_interactions(out, b.all_interactions());
  }
  {
    auto out = detail::open_out(dir / kProfilesFile);
    write_profiles(out, b.profiles);
  }
  {
    auto out = detail::open_out(dir / kGraphFile);
    graph::write_triples(out, b.triples);
  }
  {
    auto out = detail::open_out(dir / kCatalogFile);
    write_catalog(out, b.catalog);
  }
  if (b.has_latents()) {
    auto out = detail::open_out(dir / kLatentsFile);
    write_latents(out, b.latents);
  }
}

/// Reads a dataset directory, splits it temporally and checks cross-file consistency.
inline DatasetBundle read_dataset(const std::filesystem::path& dir) {
  DatasetBundle b;
  nlohmann::json meta;
  {
    auto in = detail::open_in(dir / kMetaFile);
    try {
      in >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string(kMetaFile) + ": " + e.what());
    }
  }
  try {
    if (meta.at("schema_version").get<int>() != kDatasetSchemaVersion)
      throw SchemaError(std::string(kMetaFile) + ": unsupported schema_version " + meta.at("schema_version").dump());
    b.num_users = meta.at("users").get<std::uint32_t>();
    b.num_types = meta.at("types").get<std::uint32_t>();
    b.num_risk_levels = meta.at("risk_levels").get<std::uint32_t>();
    for (std::size_t k = 0; k < graph::kEntityKinds; ++k)
      b.entity_counts[k] = meta.at("entities").at(std::string(graph::kEntityNames[k])).get<std::uint32_t>();
    if (meta.contains("popularity_rank")) b.popularity_rank = meta["popularity_rank"].get<std::vector<std::uint32_t>>();
    if (meta.contains("fund_archetype")) b.fund_archetype = meta["fund_archetype"].get<std::vector<std::uint32_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string(kMetaFile) + ": " + e.what());
  }
  std::vector<Interaction> all;
  {
    auto in = detail::open_in(dir / kInteractionsFile);
    all = read_interactions(in);
  }
  {
    auto in = detail::open_in(dir / kProfilesFile);
    b.profiles = read_profiles(in);
  }
  b.triples = graph::read_triples_file((dir / kGraphFile).string());
  {
    auto in = detail::open_in(dir / kCatalogFile);
    b.catalog = read_catalog(in);
  }
  if (std::filesystem::exists(dir / kLatentsFile)) {
    auto in = detail::open_in(dir / kLatentsFile);
    b.latents = read_latents(in);
  }

  const std::uint32_t F = b.num_funds();
  if (b.catalog.size() != F)
    throw SchemaError("catalog lists " + std::to_string(b.catalog.size()) + " funds, metadata declares " +
                      std::to_string(F));
  for (std::uint32_t f = 0; f < F; ++f) {
    const auto& c = b.catalog[f];
    if (c.fund != f) throw SchemaError("catalog: row " + std::to_string(f) + " has fund id " + std::to_string(c.fund));
    if (c.type >= b.num_types) throw SchemaError("catalog: fund " + std::to_string(f) + " has unknown type");
    if (c.risk_level >= b.num_risk_levels)
      throw SchemaError("catalog: fund " + std::to_string(f) + " has unknown risk level");
  }
  if (b.profiles.size() != b.num_users)
    throw SchemaError("profiles: " + std::to_string(b.profiles.size()) + " rows for " + std::to_string(b.num_users) +
                      " users");
  for (std::uint32_t u = 0; u < b.num_users; ++u)
    if (b.profiles[u].user != u) throw SchemaError("profiles: row " + std::to_string(u) + " is out of order");
  if (b.has_latents() && b.latents.size() != b.num_users)
    throw SchemaError("latents: " + std::to_string(b.latents.size()) + " rows for " + std::to_string(b.num_users) +
                      " users");
  for (const auto& x : all) {
    if (x.user >= b.num_users) throw SchemaError("interactions: unknown user " + std::to_string(x.user));
    if (x.fund >= F) throw SchemaError("interactions: unknown fund " + std::to_string(x.fund));
  }
  auto g = graph::build_graph(b.triples, b.entity_counts);
  if (g.counts() != b.entity_counts) throw SchemaError("graph references entities beyond the declared counts");
  b.triples = g.edges();
  b.split = temporal_split(all);
  return b;
}

}  // namespace mgdl::data
