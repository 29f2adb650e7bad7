#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mgdl/objectives.hpp"

using namespace mgdl;
using namespace mgdl::objectives;
using num::Tensor;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, bool grad = false) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return Tensor::matrix(r, c, std::move(v), grad);
}

// Feed-forward that ignores its input and emits `out` (zero weights, output bias).
FeedForward constant_ffn(std::size_t in, std::vector<double> out) {
  FeedForward f;
  const std::size_t n = out.size();
  f.w1 = Tensor::zeros({in, 2}, true);
  f.b1 = Tensor::zeros({2}, true);
  f.w2 = Tensor::zeros({2, n}, true);
  f.b2 = Tensor::vector(std::move(out), true);
  return f;
}

// Plain-double InfoNCE, one anchor at a time.
double infonce_oracle(const std::vector<std::vector<double>>& r, const std::vector<std::vector<double>>& t,
                      double tau) {
  auto cos = [](const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ab += a[i] * b[i];
      aa += a[i] * a[i];
      bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
  };
  double loss = 0;
  const std::size_t b = r.size();
  for (std::size_t u = 0; u < b; ++u) {
    double den_r = 0, den_t = 0;
    for (std::size_t v = 0; v < b; ++v) {
      den_r += std::exp(cos(r[u], t[v]) / tau);
      den_t += std::exp(cos(t[u], r[v]) / tau);
    }
    loss -= std::log(std::exp(cos(r[u], t[u]) / tau) / den_r);
    loss -= std::log(std::exp(cos(t[u], r[u]) / tau) / den_t);
  }
  return loss;
}

std::vector<std::vector<double>> rows_of(const Tensor& t) {
  std::vector<std::vector<double>> out(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) out[i].push_back(t.at(i, j));
  return out;
}

}  // namespace

TEST(TypeRepr, SingleTypeIsFfnOfItsEmbedding) {
  Rng rng(1);
  auto p = RiskSignalParams::init(4, 3, 0.2, rng);
  std::vector<std::uint32_t> one{2};
  auto expected = p.ffn(num::gather_rows(p.type_embedding, one));
  EXPECT_EQ(type_repr(one, p).to_vector(), expected.to_vector());
}

TEST(TypeRepr, RepeatedTypeIsInvariantToCount) {
  Rng rng(2);
  auto p = RiskSignalParams::init(4, 3, 0.2, rng);
  std::vector<std::uint32_t> once{1}, many(7, 1);
  auto a = type_repr(once, p), b = type_repr(many, p);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a[j], b[j], 1e-15);
}

TEST(TypeRepr, TwoTypesHandComputed) {
  RiskSignalParams p;
  p.type_embedding = Tensor::matrix({{1.0, -2.0}, {3.0, 0.5}}, true);
  p.ffn.w1 = Tensor::matrix({{1, 0}, {0, 1}}, true);
  p.ffn.b1 = Tensor::vector({0.5, 0.25}, true);
  p.ffn.w2 = Tensor::matrix({{1, 0}, {0, 1}}, true);
  p.ffn.b2 = Tensor::vector({0, 0}, true);
  std::vector<std::uint32_t> seq{0, 1};
  // mean = [2, -0.75]; +b1 = [2.5, -0.5]; relu = [2.5, 0].
  auto out = type_repr(seq, p);
  EXPECT_DOUBLE_EQ(out[0], 2.5);
  EXPECT_DOUBLE_EQ(out[1], 0.0);
}

TEST(TypeRepr, EmptySequenceIsDomainError) {
  Rng rng(3);
  auto p = RiskSignalParams::init(2, 2, 0.2, rng);
  std::vector<std::uint32_t> none;
  EXPECT_THROW(type_repr(none, p), DomainError);
}

TEST(RiskContrastive, SingletonBatchIsZero) {
  Rng rng(4);
  EXPECT_NEAR(risk_contrastive_loss(random_matrix(rng, 1, 5), random_matrix(rng, 1, 5), 0.2).item(), 0.0, 1e-12);
}

TEST(RiskContrastive, UniformSimilarityGivesTwoBLogB) {
  for (std::size_t b : {2u, 4u, 8u}) {
    auto same = Tensor::filled({b, 3}, 0.7);
    const double expected = 2.0 * static_cast<double>(b) * std::log(static_cast<double>(b));
    EXPECT_NEAR(risk_contrastive_loss(same, same, 0.2).item(), expected, 1e-6) << b;
  }
}

TEST(RiskContrastive, OrthogonalPairOfTwo) {
  auto eye = Tensor::matrix({{1, 0}, {0, 1}});
  const double expected = 4.0 * std::log((std::numbers::e + 1.0) / std::numbers::e);
  EXPECT_NEAR(expected, 1.253047, 1e-6);
  EXPECT_NEAR(risk_contrastive_loss(eye, eye, 1.0).item(), expected, 1e-12);
}

TEST(RiskContrastive, MatchesScalarOracleAndIsScaleFree) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto r = random_matrix(rng, 5, 4), t = random_matrix(rng, 5, 4);
    const double loss = risk_contrastive_loss(r, t, 0.3).item();
    EXPECT_NEAR(loss, infonce_oracle(rows_of(r), rows_of(t), 0.3), 1e-10);
    EXPECT_GE(loss, 0.0);
    // Rescale one row of each side by a positive factor.
    auto rv = r.to_vector();
    for (std::size_t j = 0; j < 4; ++j) rv[8 + j] *= 7.5;
    auto tv = t.to_vector();
    for (std::size_t j = 0; j < 4; ++j) tv[j] *= 0.01;
    EXPECT_NEAR(risk_contrastive_loss(Tensor::matrix(5, 4, rv), Tensor::matrix(5, 4, tv), 0.3).item(), loss, 1e-10);
  }
}

TEST(RiskContrastive, NonPositiveTemperatureIsDomainError) {
  auto m = Tensor::filled({2, 2}, 1.0);
  EXPECT_THROW(risk_contrastive_loss(m, m, 0.0), DomainError);
  EXPECT_THROW(risk_contrastive_loss(m, m, -1.0), DomainError);
}

TEST(RiskContrastive, SampledNegativesShrinkTheDenominator) {
  Rng data(6), sampler(7);
  auto r = random_matrix(data, 6, 3), t = random_matrix(data, 6, 3);
  const double full = risk_contrastive_loss(r, t, 0.5).item();
  EXPECT_LE(risk_contrastive_loss(r, t, 0.5, 2, &sampler).item(), full + 1e-12);
  // Asking for every other row is the full batch.
  EXPECT_NEAR(risk_contrastive_loss(r, t, 0.5, 5, &sampler).item(), full, 1e-12);
}

TEST(RiskContrastive, GradientsPassFiniteDifferenceCheck) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    auto r = random_matrix(rng, 4, 3, true), t = random_matrix(rng, 4, 3, true);
    auto loss = [&] { return risk_contrastive_loss(r, t, 0.2); };
    EXPECT_LT(num::grad_check_param(loss, r), 1e-4);
    EXPECT_LT(num::grad_check_param(loss, t), 1e-4);
  }
}

TEST(Popularity, EndpointsAndLogMidpoint) {
  std::vector<std::uint64_t> counts{10, 100, 1000};
  auto p = popularity(counts);
  EXPECT_EQ(p[0], 0.0);
  EXPECT_EQ(p[2], 1.0);
  const double oracle = (std::log(101.0) - std::log(11.0)) / (std::log(1001.0) - std::log(11.0));
  EXPECT_NEAR(oracle, 0.491531, 1e-6);
  EXPECT_NEAR(p[1], oracle, 1e-15);

  std::vector<std::uint64_t> decades{9, 99, 999};  // smoothed to 10, 100, 1000
  EXPECT_NEAR(popularity(decades)[1], 0.5, 1e-12);
}

TEST(Popularity, DegenerateAndEmpty) {
  std::vector<std::uint64_t> equal{4, 4, 4};
  for (double g : popularity(equal).gamma) EXPECT_EQ(g, 0.5);
  std::vector<std::uint64_t> none;
  EXPECT_THROW(popularity(none), DomainError);
}

TEST(Popularity, UnseenFundsGetZeroAndOrderIsMonotone) {
  Rng rng(9);
  std::vector<std::uint64_t> counts(50);
  for (auto& c : counts) c = rng.uniform_int(200);
  counts[7] = 0;
  auto p = popularity(counts);
  EXPECT_EQ(p[7], 0.0);
  for (std::size_t a = 0; a < counts.size(); ++a)
    for (std::size_t b = 0; b < counts.size(); ++b)
      if (counts[a] <= counts[b]) {
        EXPECT_LE(p[a], p[b]);
      }
  for (double g : p.gamma) {
    EXPECT_GE(g, 0.0);
    EXPECT_LE(g, 1.0);
  }
}

TEST(HeadScores, ZeroItemOutputGivesHalf) {
  HeadParams h;
  h.conformity_user = constant_ffn(5, {3.0, -1.0});
  h.conformity_item = constant_ffn(3, {0.0, 0.0});
  h.interest_user = constant_ffn(5, {0.4, 9.0});
  h.interest_item = constant_ffn(3, {0.0, 0.0});
  auto profile = Tensor::vector({1, 2}), aspect = Tensor::vector({0.1, 0.2, 0.3}), fund = Tensor::vector({1, 1, 1});
  EXPECT_EQ(conformity_score(profile, aspect, fund, h).item(), 0.5);
  EXPECT_EQ(interest_score(profile, aspect, fund, h).item(), 0.5);
}

TEST(HeadScores, DotProductLogThreeGivesThreeQuarters) {
  HeadParams h;
  const double half = std::log(3.0) / 2;
  h.conformity_user = constant_ffn(4, {1, 1});
  h.conformity_item = constant_ffn(2, {half, half});
  h.interest_user = constant_ffn(4, {1, 1});
  h.interest_item = constant_ffn(2, {half, half});
  auto profile = Tensor::vector({0.3, 0.1}), aspect = Tensor::vector({2, -1}), fund = Tensor::vector({5, 5});
  EXPECT_NEAR(conformity_score(profile, aspect, fund, h).item(), 0.75, 1e-15);
  EXPECT_NEAR(interest_score(profile, aspect, fund, h).item(), 0.75, 1e-15);
}

TEST(HeadScores, PureFunctionOfInputs) {
  Rng rng(10);
  auto h = HeadParams::init(3, 4, 5, rng);
  auto profile = random_matrix(rng, 1, 3), aspect = random_matrix(rng, 1, 4), fund = random_matrix(rng, 1, 4);
  EXPECT_EQ(conformity_score(profile, aspect, fund, h).item(), conformity_score(profile, aspect, fund, h).item());
  EXPECT_EQ(interest_score(profile, aspect, fund, h).item(), interest_score(profile, aspect, fund, h).item());
}

TEST(HeadScores, GradientsPassFiniteDifferenceCheck) {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto h = HeadParams::init(2, 3, 4, rng);
    auto profile = random_matrix(rng, 1, 2), aspect = random_matrix(rng, 1, 3, true),
         fund = random_matrix(rng, 1, 3, true);
    const double label = trial % 2;
    const double gamma = rng.uniform();
    auto conf = [&] { return weighted_losses(conformity_score(profile, aspect, fund, h), interest_score(profile, aspect, fund, h), label, gamma).conformity; };
    auto intr = [&] { return weighted_losses(conformity_score(profile, aspect, fund, h), interest_score(profile, aspect, fund, h), label, gamma).interest; };
    for (auto* ffn : {&h.conformity_user, &h.conformity_item}) {
      EXPECT_LT(num::grad_check_param(conf, ffn->w1), 1e-4);
      EXPECT_LT(num::grad_check_param(conf, ffn->b2), 1e-4);
    }
    for (auto* ffn : {&h.interest_user, &h.interest_item}) {
      EXPECT_LT(num::grad_check_param(intr, ffn->w2), 1e-4);
      EXPECT_LT(num::grad_check_param(intr, ffn->b1), 1e-4);
    }
    EXPECT_LT(num::grad_check_param(conf, aspect), 1e-4);
    EXPECT_LT(num::grad_check_param(intr, fund), 1e-4);
  }
}

TEST(WeightedLosses, Examples) {
  auto y = [](double v) { return Tensor::scalar(v); };
  auto full = weighted_losses(y(0.3), y(0.9), 1.0, 1.0);
  EXPECT_EQ(full.interest.item(), 0.0);
  auto none = weighted_losses(y(0.3), y(0.9), 0.0, 0.0);
  EXPECT_EQ(none.conformity.item(), 0.0);
  auto half = weighted_losses(y(0.5), y(0.5), 1.0, 0.5);
  EXPECT_NEAR(half.conformity.item(), 0.5 * std::numbers::ln2, 1e-12);
  EXPECT_NEAR(half.conformity.item(), 0.34657, 1e-5);
}

TEST(WeightedLosses, TermsAreBoundedByTheirCrossEntropies) {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const double pc = rng.uniform(), pi = rng.uniform(), g = rng.uniform();
    const double label = static_cast<double>(rng.uniform_int(2));
    auto l = weighted_losses(Tensor::scalar(pc), Tensor::scalar(pi), label, g);
    const double ce_c = num::binary_cross_entropy(pc, label), ce_i = num::binary_cross_entropy(pi, label);
    EXPECT_GE(l.conformity.item(), 0.0);
    EXPECT_GE(l.interest.item(), 0.0);
    EXPECT_LE(l.conformity.item() + l.interest.item(), std::max(ce_c, ce_i) + std::min(ce_c, ce_i) + 1e-12);
  }
}

TEST(TotalLoss, Examples) {
  auto s = [](double v) { return Tensor::scalar(v); };
  auto no_risk = total_loss(s(1), s(2), s(3), 0.0);
  EXPECT_EQ(no_risk.total, 3.0);
  auto mixed = total_loss(s(1), s(2), s(3), 0.1);
  EXPECT_NEAR(mixed.total, 3.3, 1e-15);
  EXPECT_EQ(mixed.total, mixed.interest + mixed.conformity + mixed.epsilon * mixed.risk);
  EXPECT_THROW(total_loss(s(1), s(2), s(3), -0.5), DomainError);
}

TEST(Predict, EndpointsAndConvexity) {
  EXPECT_EQ(predict(0.8, 0.4, 0.0), 0.4);
  EXPECT_EQ(predict(0.8, 0.4, 1.0), 0.8);
  EXPECT_NEAR(predict(0.8, 0.4, 0.5), 0.6, 1e-15);
  Rng rng(13);
  for (int i = 0; i < 500; ++i) {
    const double c = rng.uniform(), n = rng.uniform(), g = rng.uniform();
    const double y = predict(c, n, g);
    EXPECT_GE(y, std::min(c, n) - 1e-15);
    EXPECT_LE(y, std::max(c, n) + 1e-15);
  }
}
