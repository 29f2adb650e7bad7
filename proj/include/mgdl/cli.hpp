#pragma once

// The `mgdl` command line: subcommands over file-based artifacts.
//
// Exit status: 0 success, 1 usage or configuration error, 2 data or schema
// error, 3 numeric failure. Progress goes to the error stream; artifacts are
// written only under --out.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mgdl/config.hpp"
#include "mgdl/datagen.hpp"
#include "mgdl/errors.hpp"
#include "mgdl/evaluator.hpp"
#include "mgdl/fundgraph.hpp"
#include "mgdl/model.hpp"
#include "mgdl/trainer.hpp"

namespace mgdl::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

inline constexpr const char* kModelFile = "model.json";
inline constexpr const char* kMetricsFile = "metrics.json";
inline constexpr const char* kTrainLogFile = "train_log.json";
inline constexpr const char* kAblationFile = "ablation.json";
inline constexpr const char* kProbeFile = "probe.json";
inline constexpr const char* kEmbeddingsFile = "embeddings.tsv";
inline constexpr const char* kGraphStatsFile = "graph_stats.json";

/// Variant name to ablation switches. Accepts the report names ("w/o RP") and
/// dash slugs ("no-rp"), joined with '+'.
inline void apply_variant(TrainConfig& c, const std::string& variant) {
  c.disable_conformity = c.disable_risk = c.disable_graph = false;
  if (variant == "full") return;
  std::stringstream in(variant);
  std::string part;
  while (std::getline(in, part, '+')) {
    if (part == "w/o Con" || part == "no-con") c.disable_conformity = true;
    else if (part == "w/o RP" || part == "no-rp") c.disable_risk = true;
    else if (part == "w/o Graph" || part == "no-graph") c.disable_graph = true;
    else throw UsageError("unknown variant '" + part + "' (expected full, no-con, no-rp, no-graph)");
  }
}

/// File-system friendly variant tag: full, no-con, no-rp, no-graph.
inline std::string variant_slug(const TrainConfig& c) {
  std::string s;
  auto add = [&](const char* p) { s += (s.empty() ? "" : "+") + std::string(p); };
  if (c.disable_conformity) add("no-con");
  if (c.disable_risk) add("no-rp");
  if (c.disable_graph) add("no-graph");
  return s.empty() ? "full" : s;
}

inline std::vector<std::size_t> parse_cutoffs(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    std::size_t k = 0;
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), k);
    if (ec != std::errc() || p != part.data() + part.size() || k == 0)
      throw UsageError("--k expects positive integers separated by commas, got '" + text + "'");
    ks.push_back(k);
  }
  if (ks.empty()) throw UsageError("--k is empty");
  return ks;
}

inline nlohmann::json read_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw UsageError(std::string("cannot open ") + what + " '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string(what) + " '" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path.string() + "'");
  out << text;
}

inline void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

namespace detail {

struct Options {
  std::string spec, config, data, out, checkpoint, k = "5,10,15,20", variant;
  std::optional<std::uint64_t> seed;
};

inline TrainConfig load_config(const Options& o) {
  TrainConfig c;
  if (!o.config.empty()) c = config_from_json(read_json_file(o.config, "config"));
  if (o.seed) c.seed = *o.seed;
  if (!o.variant.empty()) apply_variant(c, o.variant);
  c.validate();
  return c;
}

inline data::DatasetBundle load_data(const Options& o, std::ostream& err) {
  auto d = data::read_dataset(o.data);
  err << "loaded " << o.data << ": " << d.num_users << " users, " << d.num_funds() << " funds, "
      << d.split.train.size() << "/" << d.split.validation.size() << "/" << d.split.test.size()
      << " train/validation/test interactions\n";
  return d;
}

inline nlohmann::ordered_json train_log(const train::FitResult& r, const TrainConfig& c) {
  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (std::size_t e = 0; e < r.history.size(); ++e) {
    const auto& s = r.history[e];
    epochs.push_back({{"epoch", s.epoch},
                      {"total", s.total},
                      {"interest", s.interest},
                      {"conformity", s.conformity},
                      {"risk", s.risk},
                      {"batches", s.batches},
                      {"instances", s.instances},
                      {"skipped_instances", s.skipped_instances},
                      {"validation_recall@10", r.validation_recall.at(e + 1)}});
  }
  nlohmann::ordered_json j;
  j["variant"] = c.variant();
  j["config"] = nlohmann::json(c);
  j["initial_validation_recall@10"] = r.validation_recall.front();
  j["best_epoch"] = r.best.epoch;
  j["epochs"] = std::move(epochs);
  return j;
}

inline int gen_data(const Options& o, std::ostream& err) {
  data::SyntheticSpec spec;
  if (!o.spec.empty()) spec = data::spec_from_json(read_json_file(o.spec, "spec"));
  if (o.seed) spec.seed = *o.seed;
  spec.validate();
  auto bundle = data::generate(spec);
  data::write_dataset(o.out, bundle, spec);
  err << "wrote " << o.out << ": " << bundle.num_users << " users, " << bundle.num_funds() << " funds, "
      << bundle.triples.size() << " triples, " << bundle.all_interactions().size() << " interactions\n";
  return kOk;
}

inline int build_graph(const Options& o, std::ostream& err) {
  auto d = data::read_dataset(o.data);
  const auto g = graph::build_graph(d.triples, d.entity_counts);
  {
    std::ostringstream tsv;
    graph::write_triples(tsv, g.edges());
    write_text(fs::path(o.out) / data::kGraphFile, tsv.str());
  }
  nlohmann::ordered_json entities, relations;
  for (std::size_t k = 0; k < graph::kEntityKinds; ++k) entities[std::string(graph::kEntityNames[k])] = g.counts()[k];
  std::array<std::size_t, graph::kRelations> per_relation{};
  for (const auto& t : g.edges()) ++per_relation[static_cast<std::size_t>(t.relation)];
  for (std::size_t r = 0; r < graph::kRelations; ++r) relations[std::string(graph::kRelationNames[r])] = per_relation[r];
  std::size_t isolated = 0;
  for (std::uint32_t f = 0; f < g.num_funds(); ++f) {
    bool any = false;
    for (std::size_t r = 0; r < graph::kRelations; ++r) any |= !g.neighbors(f, static_cast<graph::RelationKind>(r)).empty();
    isolated += !any;
  }
  nlohmann::ordered_json stats;
  stats["entities"] = entities;
  stats["edges"] = g.num_edges();
  stats["edges_per_relation"] = relations;
  stats["isolated_funds"] = isolated;
  write_json(fs::path(o.out) / kGraphStatsFile, stats);
  err << "graph: " << g.num_entities() << " entities, " << g.num_edges() << " edges, " << isolated
      << " isolated funds\n";
  return kOk;
}

inline int train_cmd(const Options& o, std::ostream& err) {
  const auto c = load_config(o);
  const auto d = load_data(o, err);
  auto r = train::fit_with_history(d, c, &err);
  model::save_checkpoint(fs::path(o.out) / kModelFile, r.best);
  write_json(fs::path(o.out) / kTrainLogFile, train_log(r, c));
  err << "best epoch " << r.best.epoch << ", validation recall@10 "
      << r.best.metrics.at("validation_recall@10").get<double>() << "\n";
  return kOk;
}

inline int eval_cmd(const Options& o, std::ostream& err) {
  const auto ks = parse_cutoffs(o.k);
  const auto d = load_data(o, err);
  const auto c = model::load_checkpoint(o.checkpoint);
  const auto report = eval::evaluate(c, d, ks);
  write_json(fs::path(o.out) / kMetricsFile, report.to_json());
  err << report.to_json().dump() << "\n";
  return kOk;
}

inline int ablate_cmd(const Options& o, std::ostream& err) {
  const auto ks = parse_cutoffs(o.k);
  const auto base = load_config(o);
  const auto d = load_data(o, err);
  nlohmann::ordered_json summary;
  summary["seed"] = base.seed;
  summary["reports"] = nlohmann::ordered_json::array();
  std::vector<eval::MetricReport> reports;
  for (const char* v : {"full", "no-con", "no-rp", "no-graph"}) {
    TrainConfig c = base;
    apply_variant(c, v);
    auto r = train::fit_with_history(d, c, &err);
    const auto dir = fs::path(o.out) / variant_slug(c);
    model::save_checkpoint(dir / kModelFile, r.best);
    write_json(dir / kTrainLogFile, train_log(r, c));
    auto report = eval::evaluate(r.best, d, ks);
    write_json(dir / kMetricsFile, report.to_json());
    err << report.to_json().dump() << "\n";
    summary["reports"].push_back(report.to_json());
    reports.push_back(std::move(report));
  }
  // Relative gain of the full model over each ablation, per metric.
  nlohmann::ordered_json gains;
  for (std::size_t i = 1; i < reports.size(); ++i) {
    nlohmann::ordered_json g;
    for (std::size_t c = 0; c < ks.size(); ++c) {
      auto rel = [](double full, double other) { return other > 0 ? full / other - 1.0 : 0.0; };
      g["recall@" + std::to_string(ks[c])] = rel(reports[0].recall[c], reports[i].recall[c]);
      g["ndcg@" + std::to_string(ks[c])] = rel(reports[0].ndcg[c], reports[i].ndcg[c]);
    }
    gains[reports[i].variant] = g;
  }
  summary["full_relative_gain"] = gains;
  write_json(fs::path(o.out) / kAblationFile, summary);
  return kOk;
}

inline int probe_cmd(const Options& o, std::ostream& err) {
  const auto d = load_data(o, err);
  const auto c = model::load_checkpoint(o.checkpoint);
  const auto r = eval::probe_disentanglement(c, d, o.seed.value_or(0));
  write_json(fs::path(o.out) / kProbeFile, r.to_json());
  err << r.to_json().dump() << "\n";
  return kOk;
}

inline int export_cmd(const Options& o, std::ostream& err) {
  const auto d = load_data(o, err);
  const auto c = model::load_checkpoint(o.checkpoint);
  std::vector<std::uint32_t> users(d.num_users);
  for (std::uint32_t u = 0; u < d.num_users; ++u) users[u] = u;
  std::ostringstream out;
  const auto n = eval::export_embeddings(out, c, d, users);
  write_text(fs::path(o.out) / kEmbeddingsFile, out.str());
  err << "exported " << n << " users (" << d.num_users - n << " without history skipped)\n";
  return kOk;
}

}  // namespace detail

/// Parses argv and runs one subcommand; never throws.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  detail::Options o;
  CLI::App app{"Fund recommendation with graph-based disentangled representations", "mgdl"};
  app.require_subcommand(1, 1);

  auto seed = [&](CLI::App* s) {
    s->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { o.seed = v; },
                                          "Seed for every stochastic step");
  };
  auto output = [&](CLI::App* s) { s->add_option("--out", o.out, "Output directory")->required(); };
  auto data_dir = [&](CLI::App* s) { s->add_option("--data", o.data, "Dataset directory")->required(); };
  auto checkpoint = [&](CLI::App* s) {
    s->add_option("--checkpoint", o.checkpoint, "Model checkpoint (model.json)")->required();
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset with planted latents");
  gen->add_option("--spec", o.spec, "Generator spec (JSON)");
  seed(gen), output(gen);

  auto* bg = app.add_subcommand("build-graph", "Validate the fund graph and write its canonical edge list");
  data_dir(bg), seed(bg), output(bg);

  auto* tr = app.add_subcommand("train", "Train one model and keep the best validation checkpoint");
  data_dir(tr);
  tr->add_option("--config", o.config, "Training config (JSON)");
  tr->add_option("--variant", o.variant, "full, no-con, no-rp or no-graph");
  seed(tr), output(tr);

  auto* ev = app.add_subcommand("eval", "Recall@K and NDCG@K on the test partition");
  data_dir(ev), checkpoint(ev);
  ev->add_option("--k", o.k, "Metric cutoffs, comma separated");
  seed(ev), output(ev);

  auto* ab = app.add_subcommand("ablate", "Train and evaluate full, w/o Con, w/o RP and w/o Graph");
  data_dir(ab);
  ab->add_option("--config", o.config, "Training config (JSON)");
  ab->add_option("--k", o.k, "Metric cutoffs, comma separated");
  seed(ab), output(ab);

  auto* pr = app.add_subcommand("probe", "Linear probes on user aspects against planted risk levels");
  data_dir(pr), checkpoint(pr), seed(pr), output(pr);

  auto* ex = app.add_subcommand("export-emb", "Write per-user aspect vectors as TSV");
  data_dir(ex), checkpoint(ex), seed(ex), output(ex);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return detail::gen_data(o, err);
    if (*bg) return detail::build_graph(o, err);
    if (*tr) return detail::train_cmd(o, err);
    if (*ev) return detail::eval_cmd(o, err);
    if (*ab) return detail::ablate_cmd(o, err);
    if (*pr) return detail::probe_cmd(o, err);
    if (*ex) return detail::export_cmd(o, err);
  } catch (const ConfigError& e) {
    err << "error: invalid configuration: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    // Schema, parse, lookup and domain problems in the inputs.
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace mgdl::cli
