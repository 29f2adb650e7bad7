#pragma once

#include <cstdint>
#include <vector>

#include "mgdl/errors.hpp"
#include "mgdl/numerics.hpp"
#include "mgdl/random.hpp"

namespace mgdl::aspect {

inline constexpr std::size_t kDefaultMaxSequence = 50;

/// A user's training history, oldest first.
struct BehaviorSequence {
  std::uint32_t user = 0;
  std::vector<std::uint32_t> funds;
  std::vector<std::uint32_t> types;  // type of funds[i]
};

struct DisentangleParams {
  num::Tensor projection;  // W^D, d×d
  num::Tensor interest;    // d×1
  num::Tensor risk;        // d×1
  num::Tensor conformity;  // d×1

  static DisentangleParams init(std::size_t dim, Rng& rng) {
    DisentangleParams p;
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    std::vector<double> w(dim * dim);
    for (auto& x : w) x = rng.uniform(-bound, bound);
    p.projection = num::Tensor::matrix(dim, dim, std::move(w), true);
    auto aspect = [&] {
      std::vector<double> v(dim);
      for (auto& x : v) x = rng.normal(0.0, 0.1);
      return num::Tensor::matrix(dim, 1, std::move(v), true);
    };
    p.interest = aspect();
    p.risk = aspect();
    p.conformity = aspect();
    return p;
  }
};

/// Pooled aspect vectors (1×d each) and the attention that produced them.
struct AspectBundle {
  num::Tensor interest;
  num::Tensor risk;
  num::Tensor conformity;
  num::Tensor attention;  // 3×|S|, rows in I, R, C order
};

/// X^S_u: the fund-table rows of the sequence, in order.
inline num::Tensor gather_behavior(const BehaviorSequence& seq, const num::Tensor& fund_table) {
  if (seq.funds.empty()) throw DomainError("gather_behavior: empty behavior sequence");
  for (auto f : seq.funds)
    if (f >= fund_table.rows())
      throw LookupError("gather_behavior: unknown fund id " + std::to_string(f) + " (table has " +
                        std::to_string(fund_table.rows()) + " rows)");
  return num::gather_rows(fund_table, seq.funds);
}

/// scores = tanh(X·W^D); β^a = scores·w^a; x^a = Xᵀ softmax(β^a).
inline AspectBundle disentangle(const num::Tensor& behavior, const DisentangleParams& params) {
  using namespace num;
  Tensor hidden = tanh(matmul(behavior, params.projection));                       // |S|×d
  Tensor logits = matmul(hidden, concat({params.interest, params.risk, params.conformity}));  // |S|×3
  Tensor attention = softmax(transpose(logits));                                   // 3×|S|
  Tensor pooled = matmul(attention, behavior);                                     // 3×d
  static const std::vector<std::uint32_t> kRows[3] = {{0}, {1}, {2}};
  return {gather_rows(pooled, kRows[0]), gather_rows(pooled, kRows[1]), gather_rows(pooled, kRows[2]),
          attention};
}

}  // namespace mgdl::aspect
