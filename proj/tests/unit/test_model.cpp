#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "l2copy/model.hpp"

using namespace l2copy;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.d = 8;
  c.heads = 2;
  c.filter = 16;
  c.encoder_layers = 1;
  c.decoder_layers = 2;
  c.predictor_layers = 1;
  c.vocab_size = 12;
  c.max_len = 32;
  return c;
}

ModelConfig with_row(ModelConfig c, bool interactive, bool predictor, bool copynet, bool joint) {
  c.interactive = interactive;
  c.predictor = predictor;
  c.copynet = copynet;
  c.joint_training = joint;
  return c;
}

EncodedTriplet example() { return {{4, 5, 6}, {7, 8, 9, 10}, {7, 11, 9}, {1, 0, 1, 0}}; }

void fill(Tensor& t, Real value) {
  for (auto& v : t.mutable_data()) v = value;
}

}  // namespace

TEST(ModelTest, PredictorGivesOneScorePerMtToken) {
  const ApeModel model(tiny_config(), 1);
  const std::vector<int> src = {4, 5}, mt = {6, 7, 8};
  const auto s = model.copy_scores(src, mt);
  ASSERT_EQ(s.size(), 3u);
  for (double v : s) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(ModelTest, ZeroScoreWeightGivesHalf) {
  ApeModel model(tiny_config(), 1);
  fill(model.params().get("predictor.score.w"), 0);
  const std::vector<int> src = {4, 5}, mt = {6, 7, 8};
  for (double v : model.copy_scores(src, mt)) EXPECT_EQ(v, 0.5);
}

TEST(ModelTest, InteractiveMemorySpansSourceAndMt) {
  const ApeModel model(tiny_config(), 2);
  const auto ex = example();
  const auto mem = model.encode(ex.src, ex.mt, std::nullopt);
  ASSERT_EQ(mem.cross.size(), 1u);
  EXPECT_EQ(mem.cross[0].states.rows(), ex.src.size() + ex.mt.size());
  EXPECT_EQ(mem.mt_states.rows(), ex.mt.size());
  EXPECT_EQ(mem.mt_column_offset, ex.src.size());
}

TEST(ModelTest, MtSegmentRestartsPositions) {
  const ApeModel model(tiny_config(), 3);
  const std::vector<int> src = {4, 5, 6}, mt = {7, 8};
  const Tensor x = model.embed_joint(src, mt);
  const auto& e = model.embeddings();
  for (std::size_t k = 0; k < mt.size(); ++k) {
    for (std::size_t c = 0; c < 8; ++c) {
      const Real expected = e.token.at(static_cast<std::size_t>(mt[k]), c) + e.position.at(k, c) + e.language.at(1, c);
      EXPECT_FLOAT_EQ(x.at(src.size() + k, c), expected);
    }
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Real expected = e.token.at(static_cast<std::size_t>(src[i]), 0) + e.position.at(i, 0) + e.language.at(0, 0);
    EXPECT_FLOAT_EQ(x.at(i, 0), expected);
  }
}

TEST(ModelTest, PredictorOffEqualsAllOnesScores) {
  const ApeModel full(tiny_config(), 5);
  const ApeModel plain(with_row(tiny_config(), true, false, true, false), 5);
  const auto ex = example();
  const auto a = full.forward_teacher_forced(ex, {}, Tensor::full({ex.mt.size()}, 1));
  const auto b = plain.forward_teacher_forced(ex);
  EXPECT_EQ(a.decoder.probs.to_vector(), b.decoder.probs.to_vector());
}

TEST(ModelTest, SharedModulesGetIdenticalInitialValues) {
  const ApeModel a(tiny_config(), 9);
  const ApeModel b(with_row(tiny_config(), true, false, true, false), 9);
  for (const auto& [name, t] : b.params().all()) {
    ASSERT_TRUE(a.params().contains(name)) << name;
    EXPECT_EQ(a.params().get(name).to_vector(), t.to_vector()) << name;
  }
}

TEST(ModelTest, BaselineEncodersAgreeOnIdenticalInputs) {
  ApeModel model(with_row(tiny_config(), false, false, true, false), 4);
  for (auto& [name, t] : model.params().all()) {
    if (name.rfind("encoder_mt.", 0) == 0) {
      const auto src_name = "encoder_src." + name.substr(std::string("encoder_mt.").size());
      const auto values = model.params().get(src_name).to_vector();
      std::copy(values.begin(), values.end(), t.mutable_data().begin());
    }
  }
  const std::vector<int> tokens = {4, 5, 6, 7};
  const auto mem = model.encode(tokens, tokens, std::nullopt);
  ASSERT_EQ(mem.cross.size(), 2u);
  EXPECT_EQ(mem.cross[0].states.to_vector(), mem.cross[1].states.to_vector());
  EXPECT_EQ(mem.mt_memory, 1u);
}

TEST(ModelTest, MtFirstSwapsTheCrossAttentionOrder) {
  auto c = with_row(tiny_config(), false, false, true, false);
  c.mt_first = true;
  const ApeModel model(c, 4);
  const std::vector<int> src = {4, 5}, mt = {6, 7, 8};
  const auto mem = model.encode(src, mt, std::nullopt);
  EXPECT_EQ(mem.mt_memory, 0u);
  EXPECT_EQ(mem.cross[0].states.rows(), 3u);
}

TEST(ModelTest, ClosedGateGivesTheGenerationDistribution) {
  ApeModel model(tiny_config(), 6);
  fill(model.params().get("copynet.gate.w"), 0);
  fill(model.params().get("copynet.gate.b"), -200);
  const auto trace = model.forward_teacher_forced(example());
  const auto p = trace.decoder.probs.to_vector();
  const auto g = trace.decoder.gen_probs.to_vector();
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], g[i], 1e-7);
}

TEST(ModelTest, OpenGateRoutesCopyMassToMtTokens) {
  ApeModel model(tiny_config(), 6);
  fill(model.params().get("copynet.gate.w"), 0);
  fill(model.params().get("copynet.gate.b"), 200);
  EncodedTriplet ex = {{4, 5}, {7, 8, 7}, {8, 7}, {1, 1, 1}};
  const auto trace = model.forward_teacher_forced(ex);
  const auto& d = trace.decoder;
  for (std::size_t j = 0; j < d.probs.rows(); ++j) {
    std::vector<double> expected(12, 0.0);
    for (std::size_t k = 0; k < ex.mt.size(); ++k) {
      expected[static_cast<std::size_t>(ex.mt[k])] += d.copy_probs.at(j, k);
    }
    for (std::size_t v = 0; v < 12; ++v) EXPECT_NEAR(d.probs.at(j, v), expected[v], 1e-6);
  }
}

TEST(ModelTest, OutputDistributionsSumToOne) {
  const ApeModel model(tiny_config(), 7);
  const auto trace = model.forward_teacher_forced(example());
  const auto& p = trace.decoder.probs;
  for (std::size_t j = 0; j < p.rows(); ++j) {
    double total = 0;
    for (std::size_t v = 0; v < p.cols(); ++v) total += p.at(j, v);
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(ModelTest, CopyMassMatchesDoubleLoop) {
  const ApeModel model(tiny_config(), 8);
  const auto ex = example();
  const auto trace = model.forward_teacher_forced(ex);
  const auto c = copy_mass(trace).to_vector();
  const auto& d = trace.decoder;
  ASSERT_EQ(c.size(), ex.mt.size());
  for (std::size_t k = 0; k < ex.mt.size(); ++k) {
    double ref = 0;
    for (std::size_t j = 0; j < ex.pe.size(); ++j) ref += d.gate.at(j) * d.copy_probs.at(j, k);
    EXPECT_NEAR(c[k], ref, 1e-6);
  }
}

TEST(ModelTest, CopyMassEndpoints) {
  const Tensor probs = Tensor::from({2, 3}, {0, 1, 0, 0.2f, 0.3f, 0.5f});
  EXPECT_EQ(copy_mass(Tensor::zeros({2}), probs, 2).to_vector(), (std::vector<Real>{0, 0, 0}));
  EXPECT_EQ(copy_mass(Tensor::from({2}, {1, 0.7f}), probs, 1).to_vector(), (std::vector<Real>{0, 1, 0}));
}

TEST(ModelTest, TeacherForcedRowsMatchStepwiseDecoding) {
  const ApeModel model(tiny_config(), 10);
  const auto ex = example();
  NoGradGuard guard;
  const auto trace = model.forward_teacher_forced(ex);
  std::vector<int> prefix = {Vocab::kBos};
  for (std::size_t j = 0; j <= ex.pe.size(); ++j) {
    const auto step = model.decode_step(prefix, trace.memory);
    for (std::size_t v = 0; v < 12; ++v) EXPECT_NEAR(step.probs.at(v), trace.decoder.probs.at(j, v), 1e-6);
    if (j < ex.pe.size()) prefix.push_back(ex.pe[j]);
  }
}

TEST(ModelTest, PlainMultiSourceRowHasOnlyTheApeLoss) {
  const ApeModel model(with_row(tiny_config(), false, false, false, false), 11);
  const auto ex = example();
  const auto trace = model.forward_teacher_forced(ex);
  const auto l = model.losses(trace, ex, LossWeights{});
  EXPECT_TRUE(std::isfinite(l.ape_sum.item()));
  EXPECT_FALSE(l.copy_sum);
  EXPECT_FALSE(l.pred_sum);
  EXPECT_EQ(l.target_tokens, ex.pe.size() + 1);
}

TEST(ModelTest, FullModelLossesAreFinite) {
  const ApeModel model(tiny_config(), 12);
  const auto ex = example();
  const auto l = model.losses(model.forward_teacher_forced(ex), ex, LossWeights{});
  EXPECT_TRUE(std::isfinite(l.ape_sum.item()));
  EXPECT_TRUE(std::isfinite(l.copy_sum.item()));
  EXPECT_TRUE(std::isfinite(l.pred_sum.item()));
}

TEST(ModelTest, JointTrainingWithoutPredictorIsRejected) {
  EXPECT_THROW(ApeModel(with_row(tiny_config(), true, false, true, true), 1), ConfigError);
}

TEST(ModelTest, ScoresWithoutPredictorAreRejected) {
  const ApeModel model(with_row(tiny_config(), true, false, true, false), 1);
  const std::vector<int> src = {4}, mt = {5, 6};
  EXPECT_THROW(model.encode(src, mt, Tensor::full({2}, 1)), ConfigError);
}

TEST(ModelTest, KeepAttentionRecordsEveryLayerAndHead) {
  const ApeModel model(tiny_config(), 13);
  const auto ex = example();
  const auto trace = model.forward_teacher_forced(ex, {}, std::nullopt, true);
  const auto& w = trace.decoder.cross_weights;
  ASSERT_EQ(w.size(), 2u);
  ASSERT_EQ(w[0].size(), 1u);
  ASSERT_EQ(w[0][0].size(), 2u);
  EXPECT_EQ(w[1][0][1].shape(), (Shape{ex.pe.size() + 1, ex.src.size() + ex.mt.size()}));
}
