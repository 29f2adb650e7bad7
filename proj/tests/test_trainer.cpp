#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "mgdl/trainer.hpp"

using namespace mgdl;
using namespace mgdl::train;
namespace fs = std::filesystem;

namespace {

data::SyntheticSpec small_spec(std::uint64_t seed = 1) {
  data::SyntheticSpec s;
  s.users = 80;
  s.funds = 40;
  s.managers = 8;
  s.organizations = 4;
  s.stocks = 20;
  s.indices = 4;
  s.archetypes = 3;
  s.days = 5;
  s.interactions_per_day = 1.0;
  s.seed = seed;
  return s;
}

TrainConfig small_config() {
  TrainConfig c;
  c.dim = 6;
  c.layers = 1;
  c.batch_size = 16;
  c.epochs = 2;
  c.max_sequence = 8;
  return c;
}

const data::DatasetBundle& small_data() {
  static const data::DatasetBundle d = data::generate(small_spec());
  return d;
}

std::vector<std::uint32_t> first_users(const Trainer& t, std::size_t n) {
  const auto& a = t.active_users();
  return {a.begin(), a.begin() + static_cast<std::ptrdiff_t>(std::min(n, a.size()))};
}

}  // namespace

TEST(Adam, ConvergesOnQuadraticBowl) {
  // f(x) = Σ a_i (x_i − c_i)², minimum at c.
  const std::vector<double> a{1.0, 4.0, 0.25}, c{0.5, -1.5, 2.0};
  auto x = num::Tensor::vector({-1.0, 1.0, 0.0}, true);
  std::vector<num::Tensor> params{x};
  Adam opt(0.05);
  const auto target = num::Tensor::vector(c);
  const auto weights = num::Tensor::vector(a);
  for (int step = 0; step < 500; ++step) {
    x.zero_grad();
    auto diff = num::sub(x, target);
    num::backward(num::sum(num::mul(weights, num::mul(diff, diff))));
    opt.step(params);
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(x.data()[i], c[i], 1e-3) << "coordinate " << i;
  EXPECT_EQ(opt.steps(), 500u);
}

TEST(Adam, FirstStepMovesEachCoordinateByTheLearningRate) {
  auto x = num::Tensor::vector({1.0, -2.0}, true);
  std::vector<num::Tensor> params{x};
  Adam opt(0.1);
  num::backward(num::sum(num::mul(x, num::Tensor::vector({3.0, -0.5}))));
  opt.step(params);
  EXPECT_NEAR(x.data()[0], 0.9, 1e-7);
  EXPECT_NEAR(x.data()[1], -1.9, 1e-7);
}

TEST(Adam, RejectsNonPositiveRate) { EXPECT_THROW(Adam(0.0), DomainError); }

TEST(SampleNegatives, SingleCandidateIsAlwaysReturned) {
  Rng rng(3);
  const std::vector<std::uint32_t> history{0, 1, 2, 4};
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_negatives(history, 5, 1, rng), std::vector<std::uint32_t>{3});
}

TEST(SampleNegatives, OversizedRequestReturnsWholePool) {
  Rng rng(3);
  const std::vector<std::uint32_t> history{1, 3};
  EXPECT_EQ(sample_negatives(history, 6, 10, rng), (std::vector<std::uint32_t>{0, 2, 4, 5}));
  EXPECT_EQ(sample_negatives(history, 6, 4, rng), (std::vector<std::uint32_t>{0, 2, 4, 5}));
}

TEST(SampleNegatives, EmptyPoolGivesNothing) {
  Rng rng(3);
  const std::vector<std::uint32_t> history{0, 1, 2};
  EXPECT_TRUE(sample_negatives(history, 3, 4, rng).empty());
}

TEST(SampleNegatives, DistinctOutsideHistoryAndSeeded) {
  const std::vector<std::uint32_t> history{2, 5, 7, 11};
  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) {
    auto s = sample_negatives(history, 20, 4, a);
    EXPECT_EQ(s, sample_negatives(history, 20, 4, b));
    ASSERT_EQ(s.size(), 4u);
    EXPECT_EQ(std::set<std::uint32_t>(s.begin(), s.end()).size(), 4u);
    for (auto f : s) {
      EXPECT_LT(f, 20u);
      EXPECT_FALSE(std::binary_search(history.begin(), history.end(), f));
    }
  }
}

TEST(SampleNegatives, RoughlyUniformOverPool) {
  const std::vector<std::uint32_t> history{0, 1};
  Rng rng(4);
  std::vector<int> hits(6, 0);
  const int draws = 20000;
  for (int i = 0; i < draws; ++i)
    for (auto f : sample_negatives(history, 6, 1, rng)) ++hits[f];
  EXPECT_EQ(hits[0] + hits[1], 0);
  for (std::uint32_t f = 2; f < 6; ++f) EXPECT_NEAR(hits[f] / double(draws), 0.25, 0.015);
}

TEST(Checkpoint, SaveLoadIsBitwiseIdentity) {
  auto cfg = small_config();
  cfg.epochs = 1;
  auto c = fit(small_data(), cfg);
  const auto path = fs::temp_directory_path() / "mgdl_trainer_ckpt" / "model.json";
  model::save_checkpoint(path, c);
  auto back = model::load_checkpoint(path);
  EXPECT_TRUE(model::same_parameters(c.params, back.params));
  EXPECT_EQ(back.popularity_counts, c.popularity_counts);
  EXPECT_EQ(back.epoch, c.epoch);
  EXPECT_EQ(back.metrics, c.metrics);
  EXPECT_EQ(nlohmann::json(back.config), nlohmann::json(c.config));
  // Saving the reloaded model reproduces the same bytes.
  EXPECT_EQ(model::checkpoint_to_json(back).dump(), model::checkpoint_to_json(c).dump());
}

TEST(Checkpoint, CorruptionIsSchemaError) {
  auto cfg = small_config();
  cfg.epochs = 0;
  auto j = model::checkpoint_to_json(fit(small_data(), cfg));
  auto missing = j;
  missing["parameters"].erase("graph.base");
  EXPECT_THROW(model::checkpoint_from_json(missing), SchemaError);
  auto reshaped = j;
  reshaped["parameters"]["disentangle.interest"]["shape"] = {7};
  EXPECT_THROW(model::checkpoint_from_json(reshaped), SchemaError);
  auto bad_config = j;
  bad_config["config"]["dim"] = -1;
  EXPECT_THROW(model::checkpoint_from_json(bad_config), SchemaError);
  auto wrong_format = j;
  wrong_format["format"] = "something-else";
  EXPECT_THROW(model::checkpoint_from_json(wrong_format), SchemaError);
  EXPECT_THROW(model::load_checkpoint("/nonexistent/mgdl/model.json"), SchemaError);
}

TEST(Checkpoint, IncompatibleCatalogIsRejected) {
  auto cfg = small_config();
  cfg.epochs = 0;
  auto c = fit(small_data(), cfg);
  auto other_spec = small_spec();
  other_spec.funds = 45;
  auto other = data::generate(other_spec);
  EXPECT_THROW(model::require_compatible(c, other), SchemaError);
  EXPECT_THROW(eval::evaluate(c, other), SchemaError);
}

TEST(TrainConfig, ErrorsNameTheField) {
  auto field_of = [](const nlohmann::json& j) {
    try {
      config_from_json(j);
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(field_of({{"negatives", 0}}), "negatives");
  EXPECT_EQ(field_of({{"learning_rate", -1.0}}), "learning_rate");
  EXPECT_EQ(field_of({{"temperature", 0.0}}), "temperature");
  EXPECT_EQ(field_of({{"dim", "wide"}}), "dim");
  EXPECT_EQ(field_of({{"disable_graph", 1}}), "disable_graph");
  EXPECT_EQ(field_of({{"batchsize", 8}}), "batchsize");
  EXPECT_EQ(field_of({{"epsilon", 0.5}}), "<none>");
}

TEST(TrainConfig, VariantNames) {
  TrainConfig c;
  EXPECT_EQ(c.variant(), "full");
  c.disable_conformity = true;
  EXPECT_EQ(c.variant(), "w/o Con");
  c.disable_conformity = false;
  c.disable_risk = true;
  EXPECT_EQ(c.variant(), "w/o RP");
  c.disable_risk = false;
  c.disable_graph = true;
  EXPECT_EQ(c.variant(), "w/o Graph");
  c.disable_risk = true;
  EXPECT_EQ(c.variant(), "w/o RP+w/o Graph");
}

TEST(ModelParams, NamesAreUniqueAndCoverEverySymbol) {
  Trainer t(small_data(), small_config());
  auto named = t.params().named_parameters();
  std::set<std::string> names;
  for (const auto& p : named) names.insert(p.name);
  EXPECT_EQ(names.size(), named.size());
  for (const char* expected : {"graph.base", "graph.layer0.self", "graph.layer0.manage", "disentangle.projection",
                               "disentangle.interest", "disentangle.risk", "disentangle.conformity",
                               "risk.type_embedding", "risk.ffn.w1", "heads.conformity_user.w1",
                               "heads.interest_item.b2"})
    EXPECT_TRUE(names.count(expected)) << expected;
}

TEST(ModelParams, CloneSharesNoStorage) {
  Trainer t(small_data(), small_config());
  auto copy = t.params().clone();
  ASSERT_TRUE(model::same_parameters(copy, t.params()));
  copy.named_parameters().front().tensor.mutable_data()[0] += 1.0;
  EXPECT_FALSE(model::same_parameters(copy, t.params()));
}

namespace {

// Runs one batch loss + backward and reports whether any parameter of `group`
// received a non-zero gradient.
bool group_gets_gradient(TrainConfig cfg, model::ParamGroup group, objectives::LossBreakdown* out = nullptr) {
  Trainer t(small_data(), cfg);
  t.params().zero_grad();
  Rng rng(5);
  auto loss = t.batch_loss(first_users(t, 12), rng);
  num::backward(loss.total_tensor);
  if (out) *out = loss;
  for (const auto& p : t.params().named_parameters()) {
    if (p.group != group || !p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad())
      if (g != 0.0) return true;
  }
  return false;
}

}  // namespace

TEST(Ablation, FullModelTrainsEveryGroup) {
  auto cfg = small_config();
  for (auto g : {model::ParamGroup::shared, model::ParamGroup::graph, model::ParamGroup::risk,
                 model::ParamGroup::conformity})
    EXPECT_TRUE(group_gets_gradient(cfg, g)) << static_cast<int>(g);
}

TEST(Ablation, DisableRiskZeroesTermAndGradient) {
  auto cfg = small_config();
  cfg.disable_risk = true;
  objectives::LossBreakdown loss;
  EXPECT_FALSE(group_gets_gradient(cfg, model::ParamGroup::risk, &loss));
  EXPECT_EQ(loss.risk, 0.0);
  EXPECT_EQ(loss.epsilon, 0.0);
  EXPECT_EQ(loss.total, loss.interest + loss.conformity);
}

TEST(Ablation, DisableConformityZeroesTermAndGradient) {
  auto cfg = small_config();
  cfg.disable_conformity = true;
  objectives::LossBreakdown loss;
  EXPECT_FALSE(group_gets_gradient(cfg, model::ParamGroup::conformity, &loss));
  EXPECT_EQ(loss.conformity, 0.0);
}

TEST(Ablation, DisableGraphLeavesConvolutionUntouched) {
  auto cfg = small_config();
  cfg.disable_graph = true;
  EXPECT_FALSE(group_gets_gradient(cfg, model::ParamGroup::graph));
}

TEST(Ablation, SwitchesDoNotChangeSharedTermsOfTheLoss) {
  // With the same negatives, L^I does not depend on the conformity or risk switches.
  objectives::LossBreakdown full, no_con, no_rp;
  auto cfg = small_config();
  group_gets_gradient(cfg, model::ParamGroup::shared, &full);
  cfg.disable_conformity = true;
  group_gets_gradient(cfg, model::ParamGroup::shared, &no_con);
  cfg.disable_conformity = false;
  cfg.disable_risk = true;
  group_gets_gradient(cfg, model::ParamGroup::shared, &no_rp);
  EXPECT_EQ(full.interest, no_con.interest);
  EXPECT_EQ(full.interest, no_rp.interest);
  EXPECT_EQ(full.conformity, no_rp.conformity);
}

TEST(BatchLoss, GradientsPassFiniteDifferenceCheck) {
  auto cfg = small_config();
  cfg.dim = 4;
  Trainer t(small_data(), cfg);
  // A random point: zero-initialized biases put ReLUs exactly on their kinks.
  Rng jitter(2);
  for (const auto& p : t.params().named_parameters())
    for (double& v : num::Tensor(p.tensor).mutable_data()) v += jitter.normal(0.0, 0.1);
  const auto users = first_users(t, 5);
  auto loss = [&] {
    Rng rng(11);
    return t.batch_loss(users, rng).total_tensor;
  };
  for (const auto& p : t.params().named_parameters())
    EXPECT_LT(num::grad_check_param(loss, p.tensor), 1e-4) << p.name;
}

TEST(BatchLoss, EmptyHistoryUserIsDomainError) {
  Trainer t(small_data(), small_config());
  std::uint32_t idle = 0;
  const auto& a = t.active_users();
  while (std::binary_search(a.begin(), a.end(), idle)) ++idle;
  if (idle >= small_data().num_users) GTEST_SKIP() << "every user has history";
  EXPECT_THROW(t.batch_loss({idle}), DomainError);
}

TEST(Training, OneBatchOverfits) {
  // A 32-interaction training split fits in a single batch.
  auto d = small_data();
  d.split.train.resize(32);
  auto cfg = small_config();
  cfg.dim = 16;
  cfg.batch_size = 256;
  cfg.learning_rate = 0.01;
  Trainer t(d, cfg);
  double first = 0.0, last = 0.0;
  for (int e = 0; e < 200; ++e) {
    auto s = t.train_epoch();
    ASSERT_EQ(s.batches, 1u);
    if (e == 0) first = s.total;
    last = s.total;
  }
  EXPECT_LT(last, 0.1 * first) << "initial " << first << " final " << last;
}

TEST(Training, SmoothedLossIsNonIncreasing) {
  auto cfg = small_config();
  cfg.epochs = 20;
  auto r = fit_with_history(small_data(), cfg);
  ASSERT_EQ(r.history.size(), 20u);
  std::vector<double> smooth;
  for (std::size_t e = 4; e < r.history.size(); ++e) {
    double s = 0;
    for (std::size_t i = e - 4; i <= e; ++i) s += r.history[i].total;
    smooth.push_back(s / 5.0);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) EXPECT_LE(smooth[i], smooth[i - 1]) << "window ending " << i + 4;
}

TEST(Fit, ZeroEpochsReturnsInitialModel) {
  auto cfg = small_config();
  cfg.epochs = 0;
  auto c = fit(small_data(), cfg);
  Trainer fresh(small_data(), cfg);
  EXPECT_TRUE(model::same_parameters(c.params, fresh.params()));
  EXPECT_EQ(c.epoch, 0u);
  EXPECT_TRUE(c.metrics.contains("validation_recall@10"));
}

TEST(Fit, SameSeedGivesIdenticalCheckpoints) {
  auto cfg = small_config();
  auto a = fit(small_data(), cfg), b = fit(small_data(), cfg);
  EXPECT_TRUE(model::same_parameters(a.params, b.params));
  EXPECT_EQ(model::checkpoint_to_json(a).dump(), model::checkpoint_to_json(b).dump());
  cfg.seed = 99;
  auto c = fit(small_data(), cfg);
  EXPECT_FALSE(model::same_parameters(a.params, c.params));
}

TEST(Fit, KeepsBestValidationEpoch) {
  auto cfg = small_config();
  cfg.epochs = 4;
  auto r = fit_with_history(small_data(), cfg);
  ASSERT_EQ(r.validation_recall.size(), 5u);
  const double best = *std::max_element(r.validation_recall.begin(), r.validation_recall.end());
  EXPECT_EQ(r.best.metrics.at("validation_recall@10").get<double>(), best);
  EXPECT_EQ(r.validation_recall[r.best.epoch], best);
}
