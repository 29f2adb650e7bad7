#pragma once

// Mini-batch optimization of L = L^I + L^C + ε·L^R with sampled negatives,
// Adam, validation-based model selection and the ablation switches.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mgdl/config.hpp"
#include "mgdl/datagen.hpp"
#include "mgdl/errors.hpp"
#include "mgdl/evaluator.hpp"
#include "mgdl/model.hpp"
#include "mgdl/numerics.hpp"
#include "mgdl/objectives.hpp"
#include "mgdl/random.hpp"

namespace mgdl::train {

/// Standard Adam over a fixed parameter list; tensors without a gradient buffer are skipped.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(eps) {
    if (!(learning_rate > 0.0)) throw DomainError("Adam: learning rate must be positive");
  }

  void step(std::vector<num::Tensor>& params) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
      }
    }
    if (m_.size() != params.size()) throw UsageError("Adam: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].has_grad()) continue;
      auto x = params[i].mutable_data();
      auto g = params[i].grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < x.size(); ++j) {
        m[j] = b1_ * m[j] + (1.0 - b1_) * g[j];
        v[j] = b2_ * v[j] + (1.0 - b2_) * g[j] * g[j];
        x[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
      }
    }
  }

  std::uint64_t steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// k distinct funds drawn uniformly from [0, num_funds) minus `history`
/// (sorted). Returns the whole pool in ascending order when k covers it, and
/// nothing when the pool is empty.
inline std::vector<std::uint32_t> sample_negatives(std::span<const std::uint32_t> history, std::uint32_t num_funds,
                                                   std::size_t k, Rng& rng) {
  std::size_t excluded = 0;
  for (auto f : history) excluded += f < num_funds;
  const std::size_t pool = num_funds - excluded;
  std::vector<std::uint32_t> out;
  if (pool == 0 || k == 0) return out;
  auto in_history = [&](std::uint32_t f) { return std::binary_search(history.begin(), history.end(), f); };
  if (k >= pool) {
    for (std::uint32_t f = 0; f < num_funds; ++f)
      if (!in_history(f)) out.push_back(f);
    return out;
  }
  while (out.size() < k) {
    const auto f = static_cast<std::uint32_t>(rng.uniform_int(num_funds));
    if (in_history(f) || std::find(out.begin(), out.end(), f) != out.end()) continue;
    out.push_back(f);
  }
  return out;
}

struct EpochStats {
  std::uint32_t epoch = 0;
  double interest = 0.0;
  double conformity = 0.0;
  double risk = 0.0;
  double total = 0.0;
  std::size_t batches = 0;
  std::size_t instances = 0;
  std::size_t skipped_instances = 0;  // positives whose user has no fund left to sample
};

/// Owns the model and the per-dataset caches used during optimization. The
/// dataset must outlive the trainer.
class Trainer {
 public:
  Trainer(const data::DatasetBundle& dataset, const TrainConfig& config)
      : data_(dataset), config_(config), rng_(config.seed), adam_(config.learning_rate) {
    config_.validate();
    graph_ = graph::build_graph(data_.triples, data_.entity_counts);
    sequences_ = data::build_sequences(data_.split.train, data_.catalog, data_.num_users, config_.max_sequence);
    counts_ = data::fund_counts(data_.split.train, data_.num_funds());
    popularity_ = objectives::popularity(counts_);
    positives_.resize(data_.num_users);
    history_.resize(data_.num_users);
    for (const auto& x : data_.split.train) {
      positives_[x.user].push_back(x.fund);
      history_[x.user].push_back(x.fund);
    }
    for (auto& h : history_) {
      std::sort(h.begin(), h.end());
      h.erase(std::unique(h.begin(), h.end()), h.end());
    }
    for (std::uint32_t u = 0; u < data_.num_users; ++u)
      if (!sequences_[u].funds.empty()) active_.push_back(u);
    Rng init_rng(config_.seed ^ 0x5eedf00dULL);
    params_ = model::ModelParams::init(model::dims_for(data_, config_), config_.temperature, init_rng);
    for (const auto& p : params_.named_parameters()) tensors_.push_back(p.tensor);
  }

  const model::ModelParams& params() const { return params_; }
  model::ModelParams& params() { return params_; }
  const TrainConfig& config() const { return config_; }
  const std::vector<std::uint32_t>& active_users() const { return active_; }
  const graph::FundGraph& graph() const { return graph_; }
  std::uint32_t epochs_done() const { return epoch_; }

  /// The loss of one batch of users, with the graph of operations attached.
  /// Negatives are drawn from the trainer's generator.
  objectives::LossBreakdown batch_loss(const std::vector<std::uint32_t>& users, std::size_t* instances = nullptr,
                                       std::size_t* skipped = nullptr) {
    return batch_loss(users, rng_, instances, skipped);
  }

  /// Same, drawing negatives from `rng`; a fixed seed makes the loss a pure
  /// function of the parameters.
  objectives::LossBreakdown batch_loss(const std::vector<std::uint32_t>& users, Rng& rng,
                                       std::size_t* instances = nullptr, std::size_t* skipped = nullptr) {
    using namespace num;
    std::vector<const aspect::BehaviorSequence*> seqs;
    for (auto u : users) {
      if (sequences_.at(u).funds.empty()) throw DomainError("batch_loss: user " + std::to_string(u) + " has no history");
      seqs.push_back(&sequences_[u]);
    }
    const Tensor funds = model::fund_table(params_, graph_, !config_.disable_graph);
    const auto aspects = model::batch_aspects(params_, funds, seqs);
    const Tensor profiles = model::profile_rows(data_.profiles, users, params_.dims.profile_width);

    std::vector<std::uint32_t> left, right;
    std::vector<double> labels, w_conf, w_int;
    std::size_t skip = 0;
    for (std::size_t row = 0; row < users.size(); ++row) {
      const auto u = users[row];
      for (auto f : positives_[u]) {
        auto negs = sample_negatives(history_[u], data_.num_funds(), config_.negatives, rng);
        if (negs.empty()) {
          ++skip;
          continue;
        }
        auto add = [&](std::uint32_t fund, double label) {
          left.push_back(static_cast<std::uint32_t>(row));
          right.push_back(fund);
          labels.push_back(label);
          w_conf.push_back(popularity_[fund]);
          w_int.push_back(1.0 - popularity_[fund]);
        };
        add(f, 1.0);
        for (auto n : negs) add(n, 0.0);
      }
    }
    if (instances) *instances = labels.size();
    if (skipped) *skipped = skip;
    if (labels.empty()) throw DomainError("batch_loss: no trainable instances in batch");

    const auto& h = params_.heads;
    Tensor y_int = sigmoid(objectives::pair_logits(h.interest_user, h.interest_item, profiles, aspects.interest, funds,
                                                   left, right));
    Tensor l_int = objectives::weighted_bce_mean(y_int, labels, w_int);
    Tensor l_conf = Tensor::scalar(0.0);
    if (!config_.disable_conformity) {
      Tensor y_conf = sigmoid(objectives::pair_logits(h.conformity_user, h.conformity_item, profiles,
                                                      aspects.conformity, funds, left, right));
      l_conf = objectives::weighted_bce_mean(y_conf, labels, w_conf);
    }
    Tensor l_risk = Tensor::scalar(0.0);
    double eps = config_.epsilon;
    if (config_.disable_risk) {
      eps = 0.0;
    } else {
      const Tensor type_signal = model::batch_type_signal(params_, seqs);
      // Mean over the batch's anchors so the term's scale does not grow with B.
      l_risk = scale(objectives::risk_contrastive_loss(aspects.risk, type_signal, config_.temperature,
                                                       config_.risk_negatives, &rng),
                     1.0 / static_cast<double>(users.size()));
    }
    return objectives::total_loss(l_int, l_conf, l_risk, eps);
  }

  /// One optimizer step on the given users.
  objectives::LossBreakdown step(const std::vector<std::uint32_t>& users, std::size_t batch_id = 0,
                                 std::size_t* instances = nullptr, std::size_t* skipped = nullptr) {
    objectives::LossBreakdown loss;
    try {
      loss = batch_loss(users, instances, skipped);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch_ + 1) + " batch " + std::to_string(batch_id) +
                         ": non-finite value in forward pass: " + e.what());
    }
    if (!std::isfinite(loss.total)) {
      std::ostringstream msg;
      msg << "epoch " << epoch_ + 1 << " batch " << batch_id << ": non-finite loss (L^I=" << loss.interest
          << ", L^C=" << loss.conformity << ", L^R=" << loss.risk << ", eps=" << loss.epsilon << ")";
      throw NumericError(msg.str());
    }
    params_.zero_grad();
    num::backward(loss.total_tensor);
    adam_.step(tensors_);
    return loss;
  }

  EpochStats train_epoch() {
    EpochStats s;
    s.epoch = epoch_ + 1;
    std::vector<std::uint32_t> order = active_;
    rng_.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
      const std::size_t end = std::min(order.size(), start + config_.batch_size);
      std::vector<std::uint32_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(end));
      std::size_t inst = 0, skip = 0;
      auto loss = step(batch, s.batches, &inst, &skip);
      s.interest += loss.interest;
      s.conformity += loss.conformity;
      s.risk += loss.risk;
      s.total += loss.total;
      s.instances += inst;
      s.skipped_instances += skip;
      ++s.batches;
    }
    if (s.batches > 0) {
      const double n = static_cast<double>(s.batches);
      s.interest /= n, s.conformity /= n, s.risk /= n, s.total /= n;
    }
    ++epoch_;
    return s;
  }

  /// Snapshot with deep-copied parameters.
  model::Checkpoint checkpoint() const {
    model::Checkpoint c;
    c.params = params_.clone();
    c.config = config_;
    c.popularity_counts = counts_;
    c.epoch = epoch_;
    return c;
  }

 private:
  const data::DatasetBundle& data_;
  TrainConfig config_;
  Rng rng_;
  Adam adam_;
  graph::FundGraph graph_;
  std::vector<aspect::BehaviorSequence> sequences_;
  std::vector<std::uint64_t> counts_;
  objectives::PopularityTable popularity_;
  std::vector<std::vector<std::uint32_t>> positives_, history_;
  std::vector<std::uint32_t> active_;
  model::ModelParams params_;
  std::vector<num::Tensor> tensors_;
  std::uint32_t epoch_ = 0;
};

struct FitResult {
  model::Checkpoint best;
  std::vector<EpochStats> history;
  std::vector<double> validation_recall;  // index 0 is the untrained model
};

inline constexpr std::size_t kSelectionCutoff = 10;

/// Trains for config.epochs epochs and keeps the parameters with the best
/// validation Recall@10 (the untrained model included).
inline FitResult fit_with_history(const data::DatasetBundle& dataset, const TrainConfig& config,
                                  std::ostream* log = nullptr) {
  Trainer trainer(dataset, config);
  FitResult r;
  auto validate = [&](model::Checkpoint& c) {
    auto report = eval::evaluate(c, dataset, dataset.split.validation, {kSelectionCutoff});
    const double recall = report.recall_at(kSelectionCutoff);
    c.metrics = {{"validation_recall@10", recall}, {"validation_users", report.users_evaluated}};
    r.validation_recall.push_back(recall);
    return recall;
  };
  r.best = trainer.checkpoint();
  double best = validate(r.best);
  if (log) *log << "[" << config.variant() << "] epoch 0 val recall@10 " << best << '\n';
  for (std::uint32_t e = 0; e < config.epochs; ++e) {
    auto stats = trainer.train_epoch();
    r.history.push_back(stats);
    auto snapshot = trainer.checkpoint();
    const double recall = validate(snapshot);
    snapshot.metrics["train_loss"] = stats.total;
    if (log)
      *log << "[" << config.variant() << "] epoch " << stats.epoch << " loss " << stats.total << " (I "
           << stats.interest << ", C " << stats.conformity << ", R " << stats.risk << ") val recall@10 " << recall
           << (stats.skipped_instances ? " skipped " + std::to_string(stats.skipped_instances) : std::string())
           << '\n';
    if (recall > best) {
      best = recall;
      r.best = std::move(snapshot);
    }
  }
  return r;
}

inline model::Checkpoint fit(const data::DatasetBundle& dataset, const TrainConfig& config,
                             std::ostream* log = nullptr) {
  return fit_with_history(dataset, config, log).best;
}

}  // namespace mgdl::train
