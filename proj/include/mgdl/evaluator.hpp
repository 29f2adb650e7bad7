#pragma once

// Top-K ranking metrics, model evaluation on a held-out partition, the
// disentanglement probe and embedding export.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgdl/datagen.hpp"
#include "mgdl/errors.hpp"
#include "mgdl/model.hpp"
#include "mgdl/numerics.hpp"
#include "mgdl/random.hpp"

namespace mgdl::eval {

inline const std::vector<std::size_t> kDefaultCutoffs{5, 10, 15, 20};

namespace detail {
inline void check_inputs(std::span<const std::uint32_t> relevant, std::size_t k, const char* what) {
  if (k == 0) throw DomainError(std::string(what) + ": K must be positive");
  if (relevant.empty()) throw DomainError(std::string(what) + ": empty relevant set");
}
}  // namespace detail

/// |top-K ∩ relevant| / |relevant|. `relevant` must be sorted and unique.
inline double recall_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> relevant,
                          std::size_t k) {
  detail::check_inputs(relevant, k, "recall_at_k");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i)
    hits += std::binary_search(relevant.begin(), relevant.end(), ranked[i]);
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

/// Binary-relevance NDCG with 1/log2(rank+1) discounts.
inline double ndcg_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> relevant, std::size_t k) {
  detail::check_inputs(relevant, k, "ndcg_at_k");
  double dcg = 0.0, idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i)
    if (std::binary_search(relevant.begin(), relevant.end(), ranked[i]))
      dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  for (std::size_t i = 0; i < std::min(k, relevant.size()); ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

struct RankedList {
  std::uint32_t user = 0;
  std::vector<std::uint32_t> funds;
  std::vector<double> scores;
};

/// Orders every fund not in `exclude` (sorted) by (score desc, id asc). With
/// `limit` > 0 only the first `limit` entries are materialized.
inline RankedList rank_funds(std::uint32_t user, std::span<const double> scores, std::span<const std::uint32_t> exclude,
                             std::size_t limit = 0) {
  RankedList r;
  r.user = user;
  std::vector<std::uint32_t> ids;
  ids.reserve(scores.size());
  for (std::uint32_t f = 0; f < scores.size(); ++f)
    if (!std::binary_search(exclude.begin(), exclude.end(), f)) ids.push_back(f);
  auto better = [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };
  const std::size_t n = limit == 0 ? ids.size() : std::min(limit, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(), better);
  ids.resize(n);
  r.funds = std::move(ids);
  for (auto f : r.funds) r.scores.push_back(scores[f]);
  return r;
}

struct MetricReport {
  std::string variant;
  std::size_t users_evaluated = 0;
  std::size_t users_skipped = 0;
  std::vector<std::size_t> cutoffs;
  std::vector<double> recall, ndcg;           // per-user means, one per cutoff
  std::vector<double> recall_se, ndcg_se;     // standard errors of those means

  double recall_at(std::size_t k) const { return recall.at(index_of(k)); }
  double ndcg_at(std::size_t k) const { return ndcg.at(index_of(k)); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["variant"] = variant;
    j["users_evaluated"] = users_evaluated;
    j["users_skipped"] = users_skipped;
    j["averaging"] = "per_user";
    nlohmann::ordered_json m, se;
    for (std::size_t i = 0; i < cutoffs.size(); ++i) m["recall@" + std::to_string(cutoffs[i])] = recall[i];
    for (std::size_t i = 0; i < cutoffs.size(); ++i) m["ndcg@" + std::to_string(cutoffs[i])] = ndcg[i];
    for (std::size_t i = 0; i < cutoffs.size(); ++i) se["recall@" + std::to_string(cutoffs[i])] = recall_se[i];
    for (std::size_t i = 0; i < cutoffs.size(); ++i) se["ndcg@" + std::to_string(cutoffs[i])] = ndcg_se[i];
    j["metrics"] = m;
    j["standard_errors"] = se;
    return j;
  }

 private:
  std::size_t index_of(std::size_t k) const {
    auto it = std::find(cutoffs.begin(), cutoffs.end(), k);
    if (it == cutoffs.end()) throw LookupError("no metric at cutoff " + std::to_string(k));
    return static_cast<std::size_t>(it - cutoffs.begin());
  }
};

/// Who is ranked against what: per target user, the training history to
/// exclude and the relevant funds (target funds outside that history).
struct EvalTask {
  std::vector<std::uint32_t> users;                      // evaluable users, ascending
  std::vector<std::vector<std::uint32_t>> history;       // parallel to users, sorted unique
  std::vector<std::vector<std::uint32_t>> relevant;      // parallel to users, sorted unique
  std::size_t skipped = 0;
};

inline EvalTask make_task(const std::vector<data::Interaction>& train, const std::vector<data::Interaction>& target) {
  std::map<std::uint32_t, std::vector<std::uint32_t>> hist, rel;
  for (const auto& x : train) hist[x.user].push_back(x.fund);
  for (const auto& x : target) rel[x.user].push_back(x.fund);
  auto unique_sorted = [](std::vector<std::uint32_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  EvalTask t;
  for (auto& [u, funds] : rel) {
    auto h = hist.find(u);
    if (h == hist.end()) {
      ++t.skipped;
      continue;
    }
    unique_sorted(h->second);
    unique_sorted(funds);
    std::vector<std::uint32_t> fresh;
    std::set_difference(funds.begin(), funds.end(), h->second.begin(), h->second.end(), std::back_inserter(fresh));
    if (fresh.empty()) {
      ++t.skipped;
      continue;
    }
    t.users.push_back(u);
    t.history.push_back(h->second);
    t.relevant.push_back(std::move(fresh));
  }
  return t;
}

/// Scores for row `i` of the task (user task.users[i]) over the whole catalog.
using Scorer = std::function<void(std::size_t row, std::vector<double>& scores)>;

inline MetricReport evaluate_ranking(const EvalTask& task, std::uint32_t num_funds, const Scorer& scorer,
                                     const std::vector<std::size_t>& cutoffs = kDefaultCutoffs,
                                     const std::string& variant = "full") {
  if (cutoffs.empty()) throw DomainError("evaluate: no cutoffs");
  for (auto k : cutoffs)
    if (k == 0) throw DomainError("evaluate: cutoffs must be positive");
  const std::size_t kmax = *std::max_element(cutoffs.begin(), cutoffs.end());
  MetricReport r;
  r.variant = variant;
  r.cutoffs = cutoffs;
  r.users_skipped = task.skipped;
  r.users_evaluated = task.users.size();
  const std::size_t m = cutoffs.size();
  std::vector<double> rs(m, 0.0), rs2(m, 0.0), ns(m, 0.0), ns2(m, 0.0);
  std::vector<double> scores(num_funds);
  for (std::size_t i = 0; i < task.users.size(); ++i) {
    std::fill(scores.begin(), scores.end(), 0.0);
    scorer(i, scores);
    auto ranked = rank_funds(task.users[i], scores, task.history[i], kmax);
    for (std::size_t c = 0; c < m; ++c) {
      const double rv = recall_at_k(ranked.funds, task.relevant[i], cutoffs[c]);
      const double nv = ndcg_at_k(ranked.funds, task.relevant[i], cutoffs[c]);
      rs[c] += rv, rs2[c] += rv * rv, ns[c] += nv, ns2[c] += nv * nv;
    }
  }
  const double n = static_cast<double>(task.users.size());
  auto se = [n](double s, double s2) {
    if (n < 2) return 0.0;
    const double mean = s / n;
    return std::sqrt(std::max(0.0, (s2 - n * mean * mean) / (n - 1)) / n);
  };
  for (std::size_t c = 0; c < m; ++c) {
    r.recall.push_back(n > 0 ? rs[c] / n : 0.0);
    r.ndcg.push_back(n > 0 ? ns[c] / n : 0.0);
    r.recall_se.push_back(se(rs[c], rs2[c]));
    r.ndcg_se.push_back(se(ns[c], ns2[c]));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Model scoring

/// Everything needed to score a checkpoint against a dataset.
struct ScoringContext {
  graph::FundGraph graph;
  std::vector<aspect::BehaviorSequence> sequences;  // from the train split, indexed by user
  objectives::PopularityTable popularity;
};

inline ScoringContext scoring_context(const model::Checkpoint& c, const data::DatasetBundle& d) {
  model::require_compatible(c, d);
  return {graph::build_graph(d.triples, d.entity_counts),
          data::build_sequences(d.split.train, d.catalog, d.num_users, c.config.max_sequence), c.popularity()};
}

/// y = γ_f·y^C + (1−γ_f)·y^I, or y^I alone when the conformity side is ablated.
inline Scorer blended_scorer(const model::Checkpoint& c, const model::ScoreTables& tables,
                             const objectives::PopularityTable& pop) {
  const bool interest_only = c.config.disable_conformity;
  return [&tables, &pop, interest_only](std::size_t row, std::vector<double>& scores) {
    for (std::uint32_t f = 0; f < scores.size(); ++f) {
      const double yi = tables.interest(row, f);
      scores[f] = interest_only ? yi : objectives::predict(tables.conformity(row, f), yi, pop[f]);
    }
  };
}

inline MetricReport evaluate(const model::Checkpoint& c, const data::DatasetBundle& d,
                             const std::vector<data::Interaction>& target,
                             const std::vector<std::size_t>& cutoffs = kDefaultCutoffs) {
  auto ctx = scoring_context(c, d);
  auto task = make_task(d.split.train, target);
  auto tables = model::score_tables(c.params, ctx.graph, ctx.sequences, d.profiles, task.users, !c.config.disable_graph);
  return evaluate_ranking(task, d.num_funds(), blended_scorer(c, tables, ctx.popularity), cutoffs, c.config.variant());
}

/// Test-partition evaluation.
inline MetricReport evaluate(const model::Checkpoint& c, const data::DatasetBundle& d,
                             const std::vector<std::size_t>& cutoffs = kDefaultCutoffs) {
  return evaluate(c, d, d.split.test, cutoffs);
}

// ---------------------------------------------------------------------------
// Probe

struct ProbeReport {
  std::size_t users = 0, train_users = 0, test_users = 0;
  std::uint32_t classes = 0;
  double risk_accuracy = 0.0;              // probe on x^R
  double risk_shuffled_accuracy = 0.0;     // same features, permuted labels
  double interest_accuracy = 0.0;          // probe on x^I
  double conformity_head_top_gamma = 0.0;  // mean γ of the top-10 by y^C
  double interest_head_top_gamma = 0.0;    // mean γ of the top-10 by y^I

  nlohmann::ordered_json to_json() const {
    return {{"users", users},
            {"train_users", train_users},
            {"test_users", test_users},
            {"classes", classes},
            {"risk_probe", {{"x_R", risk_accuracy}, {"x_R_shuffled_labels", risk_shuffled_accuracy}, {"x_I", interest_accuracy}}},
            {"top10_popularity", {{"conformity_head", conformity_head_top_gamma}, {"interest_head", interest_head_top_gamma}}}};
  }
};

/// Multinomial logistic regression on standardized features, trained by
/// full-batch Adam with the numerics module; returns held-out accuracy.
inline double linear_probe_accuracy(const std::vector<std::vector<double>>& features,
                                    const std::vector<std::uint32_t>& labels, std::uint32_t classes,
                                    const std::vector<std::size_t>& train_rows, const std::vector<std::size_t>& test_rows,
                                    std::size_t iterations = 300, double learning_rate = 0.05, double l2 = 1e-3) {
  if (train_rows.empty() || test_rows.empty()) throw DomainError("linear_probe_accuracy: empty split");
  const std::size_t d = features.front().size();
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (auto r : train_rows)
    for (std::size_t j = 0; j < d; ++j) mean[j] += features[r][j] / static_cast<double>(train_rows.size());
  for (auto r : train_rows)
    for (std::size_t j = 0; j < d; ++j)
      sd[j] += (features[r][j] - mean[j]) * (features[r][j] - mean[j]) / static_cast<double>(train_rows.size());
  for (auto& s : sd) s = std::sqrt(s) + 1e-8;
  auto design = [&](const std::vector<std::size_t>& rows) {
    std::vector<double> v;
    for (auto r : rows)
      for (std::size_t j = 0; j < d; ++j) v.push_back((features[r][j] - mean[j]) / sd[j]);
    return num::Tensor::matrix(rows.size(), d, std::move(v));
  };
  const num::Tensor x_train = design(train_rows), x_test = design(test_rows);
  std::vector<double> onehot(train_rows.size() * classes, 0.0);
  for (std::size_t i = 0; i < train_rows.size(); ++i) onehot[i * classes + labels[train_rows[i]]] = 1.0;
  const num::Tensor y = num::Tensor::matrix(train_rows.size(), classes, std::move(onehot));
  num::Tensor w = num::Tensor::zeros({d, classes}, true), b = num::Tensor::zeros({classes}, true);
  std::vector<double> m(d * classes + classes, 0.0), v(m.size(), 0.0);
  const double n = static_cast<double>(train_rows.size());
  for (std::size_t it = 1; it <= iterations; ++it) {
    w.zero_grad();
    b.zero_grad();
    auto logits = num::add_bias(num::matmul(x_train, w), b);
    auto nll = num::scale(num::sum(num::mul(num::log_softmax(logits), y)), -1.0 / n);
    auto loss = num::add(nll, num::scale(num::sum(num::mul(w, w)), l2));
    num::backward(loss);
    // Adam on the concatenated parameter vector.
    std::size_t k = 0;
    const double c1 = 1.0 - std::pow(0.9, static_cast<double>(it)), c2 = 1.0 - std::pow(0.999, static_cast<double>(it));
    for (num::Tensor* t : {&w, &b}) {
      auto data = t->mutable_data();
      auto g = t->grad();
      for (std::size_t i = 0; i < data.size(); ++i, ++k) {
        m[k] = 0.9 * m[k] + 0.1 * g[i];
        v[k] = 0.999 * v[k] + 0.001 * g[i] * g[i];
        data[i] -= learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + 1e-8);
      }
    }
  }
  num::NoGradGuard no_grad;
  auto logits = num::add_bias(num::matmul(x_test, w), b);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_rows.size(); ++i) {
    std::uint32_t best = 0;
    for (std::uint32_t c = 1; c < classes; ++c)
      if (logits.at(i, c) > logits.at(i, best)) best = c;
    correct += best == labels[test_rows[i]];
  }
  return static_cast<double>(correct) / static_cast<double>(test_rows.size());
}

/// Mean popularity of the top-10 (candidates exclude the training history).
inline double mean_top_gamma(const std::vector<double>& scores, std::span<const std::uint32_t> history,
                             const objectives::PopularityTable& pop, std::size_t k = 10) {
  auto ranked = rank_funds(0, scores, history, k);
  if (ranked.funds.empty()) return 0.0;
  double s = 0.0;
  for (auto f : ranked.funds) s += pop[f];
  return s / static_cast<double>(ranked.funds.size());
}

inline ProbeReport probe_disentanglement(const model::Checkpoint& c, const data::DatasetBundle& d,
                                         std::uint64_t seed = 0) {
  if (!d.has_latents()) throw SchemaError("probe: dataset has no planted latents (synthetic data only)");
  auto ctx = scoring_context(c, d);
  std::vector<std::uint32_t> users;
  for (std::uint32_t u = 0; u < d.num_users; ++u)
    if (!ctx.sequences[u].funds.empty()) users.push_back(u);
  if (users.size() < 4) throw DomainError("probe: too few users with history");
  auto tables = model::score_tables(c.params, ctx.graph, ctx.sequences, d.profiles, users, !c.config.disable_graph);

  ProbeReport r;
  r.users = users.size();
  r.classes = d.num_risk_levels;
  std::vector<std::vector<double>> xr(users.size()), xi(users.size());
  std::vector<std::uint32_t> labels(users.size());
  for (std::size_t i = 0; i < users.size(); ++i) {
    for (std::size_t j = 0; j < c.params.dims.dim; ++j) {
      xr[i].push_back(tables.aspects.risk.at(i, j));
      xi[i].push_back(tables.aspects.interest.at(i, j));
    }
    labels[i] = d.latents[users[i]].risk_level;
  }
  Rng rng(seed);
  std::vector<std::size_t> rows(users.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  rng.shuffle(rows);
  const std::size_t n_train = (rows.size() * 7) / 10;
  std::vector<std::size_t> train_rows(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_rows(rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
  r.train_users = train_rows.size();
  r.test_users = test_rows.size();
  r.risk_accuracy = linear_probe_accuracy(xr, labels, r.classes, train_rows, test_rows);
  r.interest_accuracy = linear_probe_accuracy(xi, labels, r.classes, train_rows, test_rows);
  auto shuffled = labels;
  rng.shuffle(shuffled);
  r.risk_shuffled_accuracy = linear_probe_accuracy(xr, shuffled, r.classes, train_rows, test_rows);

  std::vector<double> yc(d.num_funds()), yi(d.num_funds());
  double sc = 0.0, si = 0.0;
  for (std::size_t i = 0; i < users.size(); ++i) {
    for (std::uint32_t f = 0; f < d.num_funds(); ++f) {
      yc[f] = tables.conformity(i, f);
      yi[f] = tables.interest(i, f);
    }
    auto hist = ctx.sequences[users[i]].funds;
    std::sort(hist.begin(), hist.end());
    hist.erase(std::unique(hist.begin(), hist.end()), hist.end());
    sc += mean_top_gamma(yc, hist, ctx.popularity);
    si += mean_top_gamma(yi, hist, ctx.popularity);
  }
  r.conformity_head_top_gamma = sc / static_cast<double>(users.size());
  r.interest_head_top_gamma = si / static_cast<double>(users.size());
  return r;
}

// ---------------------------------------------------------------------------
// Embedding export

/// `user<TAB>aspect<TAB>v1,...,vd<TAB>label`, aspects in I, R, C order. The
/// label is the planted risk level when latents exist, otherwise a holding
/// bucket floor(log2(1 + history length)). Users without history are skipped.
inline std::size_t export_embeddings(std::ostream& out, const model::Checkpoint& c, const data::DatasetBundle& d,
                                     const std::vector<std::uint32_t>& users) {
  auto ctx = scoring_context(c, d);
  std::vector<std::uint32_t> kept;
  for (auto u : users) {
    if (u >= d.num_users) throw LookupError("export_embeddings: unknown user " + std::to_string(u));
    if (!ctx.sequences[u].funds.empty()) kept.push_back(u);
  }
  out << "# user_id\taspect\tvector\tlabel\n";
  if (kept.empty()) return 0;
  auto tables = model::score_tables(c.params, ctx.graph, ctx.sequences, d.profiles, kept, !c.config.disable_graph);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const std::uint32_t u = kept[i];
    const std::uint32_t label =
        d.has_latents() ? d.latents[u].risk_level
                        : static_cast<std::uint32_t>(std::log2(1.0 + static_cast<double>(ctx.sequences[u].funds.size())));
    const std::pair<char, const num::Tensor*> rows[] = {
        {'I', &tables.aspects.interest}, {'R', &tables.aspects.risk}, {'C', &tables.aspects.conformity}};
    for (const auto& [tag, t] : rows) {
      out << u << '\t' << tag << '\t';
      for (std::size_t j = 0; j < t->cols(); ++j) out << (j ? "," : "") << data::detail::format_double(t->at(i, j));
      out << '\t' << label << '\n';
    }
  }
  return kept.size();
}

}  // namespace mgdl::eval
