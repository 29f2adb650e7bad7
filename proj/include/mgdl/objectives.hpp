#pragma once

// Supervision signals: fund-type contrast for risk preference, popularity-weighted
// conformity / interest heads, the combined objective, and the blended score.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mgdl/errors.hpp"
#include "mgdl/numerics.hpp"
#include "mgdl/random.hpp"

namespace mgdl::objectives {

/// Linear → ReLU → linear, applied row-wise.
struct FeedForward {
  num::Tensor w1, b1, w2, b2;

  num::Tensor operator()(const num::Tensor& x) const {
    using namespace num;
    return add_bias(matmul(relu(add_bias(matmul(x, w1), b1)), w2), b2);
  }

  std::size_t in_dim() const { return w1.rows(); }
  std::size_t out_dim() const { return w2.cols(); }

  static FeedForward init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
    auto uniform = [&](std::size_t r, std::size_t c) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(r));
      std::vector<double> v(r * c);
      for (auto& x : v) x = rng.uniform(-bound, bound);
      return num::Tensor::matrix(r, c, std::move(v), true);
    };
    FeedForward f;
    f.w1 = uniform(in, hidden);
    f.b1 = num::Tensor::zeros({hidden}, true);
    f.w2 = uniform(hidden, out);
    f.b2 = num::Tensor::zeros({out}, true);
    return f;
  }
};

// ---------------------------------------------------------------------------
// Risk preference

struct RiskSignalParams {
  num::Tensor type_embedding;  // Φ, |T|×d
  FeedForward ffn;             // d → d
  double temperature = 0.2;

  static RiskSignalParams init(std::size_t types, std::size_t dim, double temperature, Rng& rng) {
    if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
    RiskSignalParams p;
    std::vector<double> phi(types * dim);
    for (auto& x : phi) x = rng.normal(0.0, 0.1);
    p.type_embedding = num::Tensor::matrix(types, dim, std::move(phi), true);
    p.ffn = FeedForward::init(dim, dim, dim, rng);
    p.temperature = temperature;
    return p;
  }
};

/// x^T_u = FFN(mean of Φ over the type sequence), as a 1×d row.
inline num::Tensor type_repr(std::span<const std::uint32_t> type_ids, const RiskSignalParams& params) {
  if (type_ids.empty()) throw DomainError("type_repr: empty type sequence");
  for (auto t : type_ids)
    if (t >= params.type_embedding.rows()) throw LookupError("type_repr: unknown type id " + std::to_string(t));
  return params.ffn(num::mean_axis(num::gather_rows(params.type_embedding, type_ids), 0));
}

/// Symmetric InfoNCE over a batch, summed over anchors in both directions.
/// Row u of `risk` pairs with row u of `type_signal`; similarity is cosine and
/// every row of the batch (the positive included) enters each denominator.
///
/// With `sampled_negatives > 0` each denominator keeps the positive plus that
/// many other rows drawn uniformly without replacement.
inline num::Tensor risk_contrastive_loss(const num::Tensor& risk, const num::Tensor& type_signal, double temperature,
                                         std::size_t sampled_negatives = 0, Rng* rng = nullptr) {
  using namespace num;
  if (!(temperature > 0.0)) throw DomainError("risk_contrastive_loss: temperature must be positive");
  if (risk.shape() != type_signal.shape() || risk.rank() != 2)
    throw DimensionError("risk_contrastive_loss: " + shape_str(risk.shape()) + " vs " +
                         shape_str(type_signal.shape()));
  const std::size_t b = risk.rows();
  Tensor logits = scale(cosine_matrix(risk, type_signal), 1.0 / temperature);  // [u][u'] = sim(R_u, T_u')
  Tensor logits_t = transpose(logits);                                          // [u][u'] = sim(T_u, R_u')
  if (sampled_negatives > 0 && sampled_negatives + 1 < b) {
    if (!rng) throw UsageError("risk_contrastive_loss: sampled negatives need an Rng");
    auto mask = [&] {
      // Excluded entries get a large finite negative offset: exp underflows to 0.
      std::vector<double> m(b * b, -1e6);
      for (std::size_t u = 0; u < b; ++u) {
        m[u * b + u] = 0.0;
        std::vector<std::size_t> others;
        for (std::size_t v = 0; v < b; ++v)
          if (v != u) others.push_back(v);
        rng->shuffle(others);
        for (std::size_t k = 0; k < sampled_negatives; ++k) m[u * b + others[k]] = 0.0;
      }
      return Tensor::matrix(b, b, std::move(m));
    };
    logits = add(logits, mask());
    logits_t = add(logits_t, mask());
  }
  Tensor forward = sum(diagonal(log_softmax(logits)));
  Tensor mirrored = sum(diagonal(log_softmax(logits_t)));
  return scale(add(forward, mirrored), -1.0);
}

// ---------------------------------------------------------------------------
// Popularity

struct PopularityTable {
  std::vector<double> gamma;
  std::vector<std::uint64_t> counts;
  std::uint64_t min_count = 0;
  std::uint64_t max_count = 0;

  double operator[](std::size_t fund) const { return gamma.at(fund); }
  std::size_t size() const { return gamma.size(); }
};

/// γ_f = (ln(C_f+1) − ln(C_min+1)) / (ln(C_max+1) − ln(C_min+1)); 0.5 everywhere when all counts agree.
inline PopularityTable popularity(std::span<const std::uint64_t> counts) {
  if (counts.empty()) throw DomainError("popularity: empty fund catalog");
  PopularityTable t;
  t.counts.assign(counts.begin(), counts.end());
  t.min_count = *std::min_element(counts.begin(), counts.end());
  t.max_count = *std::max_element(counts.begin(), counts.end());
  t.gamma.resize(counts.size());
  if (t.min_count == t.max_count) {
    std::fill(t.gamma.begin(), t.gamma.end(), 0.5);
    return t;
  }
  const double lo = std::log(static_cast<double>(t.min_count) + 1.0);
  const double hi = std::log(static_cast<double>(t.max_count) + 1.0);
  for (std::size_t f = 0; f < counts.size(); ++f)
    t.gamma[f] = std::clamp((std::log(static_cast<double>(counts[f]) + 1.0) - lo) / (hi - lo), 0.0, 1.0);
  return t;
}

// ---------------------------------------------------------------------------
// Conformity and interest heads

struct HeadParams {
  FeedForward conformity_user;  // [x^P ‖ x^C] → d_s
  FeedForward conformity_item;  // x_f → d_s
  FeedForward interest_user;    // [x^P ‖ x^I] → d_s
  FeedForward interest_item;    // x_f → d_s

  static HeadParams init(std::size_t profile_width, std::size_t dim, std::size_t score_dim, Rng& rng) {
    HeadParams h;
    h.conformity_user = FeedForward::init(profile_width + dim, dim, score_dim, rng);
    h.conformity_item = FeedForward::init(dim, dim, score_dim, rng);
    h.interest_user = FeedForward::init(profile_width + dim, dim, score_dim, rng);
    h.interest_item = FeedForward::init(dim, dim, score_dim, rng);
    return h;
  }
};

/// Scoring logits for (user row, fund row) pairs:
/// user_ffn([profiles ‖ aspects])[left[k]] · item_ffn(funds)[right[k]].
inline num::Tensor pair_logits(const FeedForward& user_ffn, const FeedForward& item_ffn, const num::Tensor& profiles,
                               const num::Tensor& aspects, const num::Tensor& funds,
                               std::span<const std::uint32_t> left, std::span<const std::uint32_t> right) {
  using namespace num;
  Tensor user = user_ffn(concat({profiles, aspects}));
  Tensor item = item_ffn(funds);
  return row_dot(user, item, left, right);
}

namespace detail {
inline num::Tensor single_score(const FeedForward& user_ffn, const FeedForward& item_ffn, const num::Tensor& profile,
                                const num::Tensor& aspect, const num::Tensor& fund) {
  using namespace num;
  auto row = [](const Tensor& t) { return t.rank() == 2 ? t : reshape(t, {1, t.size()}); };
  const std::uint32_t zero[1] = {0};
  return reshape(sigmoid(pair_logits(user_ffn, item_ffn, row(profile), row(aspect), row(fund), zero, zero)), {1});
}
}  // namespace detail

/// y^C = σ(FFN^C_user([x^P ‖ x^C]) · FFN^C_item(x_f)).
inline num::Tensor conformity_score(const num::Tensor& profile, const num::Tensor& conformity, const num::Tensor& fund,
                                    const HeadParams& heads) {
  return detail::single_score(heads.conformity_user, heads.conformity_item, profile, conformity, fund);
}

/// y^I = σ(FFN^I_user([x^P ‖ x^I]) · FFN^I_item(x_f)).
inline num::Tensor interest_score(const num::Tensor& profile, const num::Tensor& interest, const num::Tensor& fund,
                                  const HeadParams& heads) {
  return detail::single_score(heads.interest_user, heads.interest_item, profile, interest, fund);
}

struct InstanceLosses {
  num::Tensor conformity;  // γ_f · CE(y^C, ŷ)
  num::Tensor interest;    // (1 − γ_f) · CE(y^I, ŷ)
};

inline InstanceLosses weighted_losses(const num::Tensor& y_conformity, const num::Tensor& y_interest, double label,
                                      double gamma) {
  if (gamma < 0.0 || gamma > 1.0) throw DomainError("weighted_losses: gamma outside [0, 1]");
  return {num::scale(num::binary_cross_entropy(y_conformity, label), gamma),
          num::scale(num::binary_cross_entropy(y_interest, label), 1.0 - gamma)};
}

/// Mean over instances of weight_k · CE(p_k, y_k).
inline num::Tensor weighted_bce_mean(const num::Tensor& probs, std::span<const double> labels,
                                     std::span<const double> weights) {
  if (weights.size() != probs.size()) throw DimensionError("weighted_bce_mean: weight count mismatch");
  num::Tensor w = num::Tensor(probs.shape(), std::vector<double>(weights.begin(), weights.end()));
  return num::mean(num::mul(num::binary_cross_entropy(probs, labels), w));
}

struct LossBreakdown {
  num::Tensor total_tensor;
  num::Tensor interest_tensor, conformity_tensor, risk_tensor;  // unweighted terms, still on the tape
  double interest = 0.0;
  double conformity = 0.0;
  double risk = 0.0;
  double epsilon = 0.0;
  double total = 0.0;
};

/// L = L^I + L^C + ε·L^R.
inline LossBreakdown total_loss(const num::Tensor& interest, const num::Tensor& conformity, const num::Tensor& risk,
                                double epsilon) {
  if (epsilon < 0.0) throw DomainError("total_loss: epsilon must be non-negative");
  LossBreakdown out;
  out.total_tensor = num::add(num::add(interest, conformity), num::scale(risk, epsilon));
  out.interest_tensor = interest;
  out.conformity_tensor = conformity;
  out.risk_tensor = risk;
  out.interest = interest.item();
  out.conformity = conformity.item();
  out.risk = risk.item();
  out.epsilon = epsilon;
  out.total = out.total_tensor.item();
  return out;
}

/// y = γ_f·y^C + (1 − γ_f)·y^I.
inline double predict(double y_conformity, double y_interest, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) throw DomainError("predict: gamma outside [0, 1]");
  return gamma * y_conformity + (1.0 - gamma) * y_interest;
}

}  // namespace mgdl::objectives
