#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "l2copy/nn.hpp"

using namespace l2copy;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  return Tensor::randn(std::move(shape), 1.0f, rng);
}

// Plain double-precision attention for one head, written without the
// library's ops: softmax((q k^T) / sqrt(d)) v.
std::vector<double> naive_attention(const std::vector<double>& q, const std::vector<double>& k,
                                    const std::vector<double>& v, std::size_t lq, std::size_t lk, std::size_t d) {
  std::vector<double> out(lq * d, 0.0);
  for (std::size_t i = 0; i < lq; ++i) {
    std::vector<double> e(lk);
    double mx = -1e300;
    for (std::size_t j = 0; j < lk; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += q[i * d + c] * k[j * d + c];
      e[j] = dot / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, e[j]);
    }
    double z = 0;
    for (auto& x : e) z += (x = std::exp(x - mx));
    for (std::size_t j = 0; j < lk; ++j) {
      for (std::size_t c = 0; c < d; ++c) out[i * d + c] += e[j] / z * v[j * d + c];
    }
  }
  return out;
}

// x W + b computed in double.
std::vector<double> naive_linear(const Tensor& x, const Linear& lin) {
  const std::size_t m = x.rows(), in = lin.weight.rows(), outw = lin.weight.cols();
  std::vector<double> y(m * outw, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t o = 0; o < outw; ++o) {
      double acc = lin.bias ? lin.bias.at(o) : 0.0;
      for (std::size_t c = 0; c < in; ++c) acc += static_cast<double>(x.at(i, c)) * lin.weight.at(c, o);
      y[i * outw + o] = acc;
    }
  }
  return y;
}

std::vector<double> columns(const std::vector<double>& m, std::size_t width, std::size_t start, std::size_t count) {
  std::vector<double> out;
  for (std::size_t r = 0; r < m.size() / width; ++r) {
    for (std::size_t c = 0; c < count; ++c) out.push_back(m[r * width + start + c]);
  }
  return out;
}

}  // namespace

TEST(AttentionTest, ScaledEnergiesFollowTheHandExample) {
  // d = 1, so the energies are q * k = [-2, 0, 1] before scaling.
  AttentionInputs in{Tensor::from({1, 1}, {1}), Tensor::from({3, 1}, {-2, 0, 1}), Tensor::from({3, 1}, {0, 1, 2}),
                     {}, false, Tensor::from({3}, {1, 1, 0})};
  const auto w = scaled_dot_attention(in).weights.to_vector();
  EXPECT_NEAR(w[0], 0.10650697891920075, 1e-6);
  EXPECT_NEAR(w[1], 0.7869860421615985, 1e-6);
  EXPECT_NEAR(w[2], 0.10650697891920075, 1e-6);
}

TEST(AttentionTest, AllOnesScaleIsBitwiseIdentical) {
  std::mt19937_64 rng(4);
  AttentionInputs in{random_tensor({3, 4}, rng), random_tensor({5, 4}, rng), random_tensor({5, 4}, rng)};
  const auto plain = scaled_dot_attention(in);
  in.scale_vector = Tensor::full({5}, 1);
  const auto scaled = scaled_dot_attention(in);
  EXPECT_EQ(plain.output.to_vector(), scaled.output.to_vector());
  EXPECT_EQ(plain.weights.to_vector(), scaled.weights.to_vector());
}

TEST(AttentionTest, SingleUnmaskedKeyReturnsItsValue) {
  std::mt19937_64 rng(8);
  const Tensor v = random_tensor({3, 2}, rng);
  AttentionInputs in{random_tensor({2, 2}, rng), random_tensor({3, 2}, rng), v, {true, false, true}};
  const auto out = scaled_dot_attention(in).output;
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_FLOAT_EQ(out.at(i, 0), v.at(1, 0));
    EXPECT_FLOAT_EQ(out.at(i, 1), v.at(1, 1));
  }
}

TEST(AttentionTest, PaddedKeysGetZeroWeight) {
  std::mt19937_64 rng(2);
  AttentionInputs in{random_tensor({2, 4}, rng), random_tensor({4, 4}, rng), random_tensor({4, 4}, rng),
                     {false, true, false, true}};
  const auto w = scaled_dot_attention(in).weights;
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(w.at(i, 1), 0.0f);
    EXPECT_EQ(w.at(i, 3), 0.0f);
    EXPECT_NEAR(w.at(i, 0) + w.at(i, 2), 1.0, 1e-6);
  }
}

TEST(AttentionTest, CausalMaskHidesLaterKeys) {
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({4, 4}, rng);
  const auto w = scaled_dot_attention(AttentionInputs{x, x, x, {}, true}).weights;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j) EXPECT_EQ(w.at(i, j), 0.0f);
  }
}

TEST(AttentionTest, ScaleOfWrongLengthIsRejected) {
  std::mt19937_64 rng(1);
  AttentionInputs in{random_tensor({2, 2}, rng), random_tensor({3, 2}, rng), random_tensor({3, 2}, rng), {}, false,
                     Tensor::full({2}, 1)};
  EXPECT_THROW(scaled_dot_attention(in), ShapeError);
}

TEST(AttentionTest, MatchesNaiveSoftmaxAttention) {
  std::mt19937_64 rng(12);
  const Tensor q = random_tensor({3, 4}, rng), k = random_tensor({5, 4}, rng), v = random_tensor({5, 4}, rng);
  const auto out = scaled_dot_attention(AttentionInputs{q, k, v}).output.to_vector();
  auto as_double = [](const Tensor& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
  const auto ref = naive_attention(as_double(q), as_double(k), as_double(v), 3, 5, 4);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-5);
}

TEST(MultiHeadAttentionTest, TwoHeadsMatchPerHeadReplay) {
  std::mt19937_64 rng(21);
  ParamStore store;
  const auto mha = MultiHeadAttention::create(store, "mha", 8, 2, rng);
  const Tensor x = random_tensor({3, 8}, rng);
  const Tensor mem = random_tensor({5, 8}, rng);
  const auto out = mha(AttentionInputs{x, mem, mem}).to_vector();

  const auto q = naive_linear(x, mha.query);
  const auto k = naive_linear(mem, mha.key);
  const auto v = naive_linear(mem, mha.value);
  std::vector<double> concat(3 * 8, 0.0);
  for (std::size_t h = 0; h < 2; ++h) {
    const auto head = naive_attention(columns(q, 8, h * 4, 4), columns(k, 8, h * 4, 4), columns(v, 8, h * 4, 4), 3,
                                      5, 4);
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 4; ++c) concat[r * 8 + h * 4 + c] = head[r * 4 + c];
    }
  }
  const Tensor concat_t = Tensor::from({3, 8}, std::vector<Real>(concat.begin(), concat.end()));
  const auto ref = naive_linear(concat_t, mha.output);
  ASSERT_EQ(out.size(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-4);
}

TEST(MultiHeadAttentionTest, OneHeadIsProjectedSingleAttention) {
  std::mt19937_64 rng(22);
  ParamStore store;
  const auto mha = MultiHeadAttention::create(store, "mha", 4, 1, rng);
  const Tensor x = random_tensor({2, 4}, rng);
  const auto direct = mha(AttentionInputs{x, x, x}).to_vector();
  const auto inner = scaled_dot_attention(AttentionInputs{mha.query(x), mha.key(x), mha.value(x)}).output;
  const auto ref = mha.output(inner).to_vector();
  EXPECT_EQ(direct, ref);
}

TEST(MultiHeadAttentionTest, OutputShapeFollowsQueries) {
  std::mt19937_64 rng(23);
  ParamStore store;
  const auto mha = MultiHeadAttention::create(store, "mha", 6, 3, rng);
  std::vector<Tensor> heads;
  const Tensor out = mha(AttentionInputs{random_tensor({2, 6}, rng), random_tensor({7, 6}, rng),
                                         random_tensor({7, 6}, rng)},
                         &heads);
  EXPECT_EQ(out.shape(), (Shape{2, 6}));
  ASSERT_EQ(heads.size(), 3u);
  EXPECT_EQ(heads[0].shape(), (Shape{2, 7}));
}

TEST(MultiHeadAttentionTest, WidthMustDivideByHeads) {
  std::mt19937_64 rng(24);
  ParamStore store;
  EXPECT_THROW(MultiHeadAttention::create(store, "mha", 6, 4, rng), ConfigError);
}

TEST(ParamStoreTest, DuplicateAndUnknownNamesAreErrors) {
  ParamStore store;
  store.create("w", Tensor::zeros({2}));
  EXPECT_TRUE(store.get("w").requires_grad());
  EXPECT_THROW(store.create("w", Tensor::zeros({2})), ConfigError);
  EXPECT_THROW(store.get("missing"), ConfigError);
}

TEST(EmbeddingTest, ZeroTablesGiveZeroOutput) {
  EmbeddingSet set{Tensor::zeros({5, 3}), Tensor::zeros({8, 3}), Tensor::zeros({2, 3})};
  const std::vector<int> tokens = {1, 4, 2};
  for (Real v : embed_sequence(tokens, 1, set).to_vector()) EXPECT_EQ(v, 0.0f);
}

TEST(EmbeddingTest, SumOfOneHotTablesMatchesHandRows) {
  // token rows: e0..e2 scaled by 1; positions scaled by 10; languages by 100.
  EmbeddingSet set{Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}),
                   Tensor::from({3, 3}, {10, 0, 0, 0, 10, 0, 0, 0, 10}),
                   Tensor::from({2, 3}, {100, 0, 0, 0, 100, 0})};
  const std::vector<int> tokens = {2, 0};
  const auto rows = embed_sequence(tokens, 1, set).to_vector();
  EXPECT_EQ(rows, (std::vector<Real>{10, 100, 1, 1, 110, 0}));
  const auto offset = embed_sequence(tokens, -1, set, 1).to_vector();
  EXPECT_EQ(offset, (std::vector<Real>{0, 10, 1, 1, 0, 10}));
}

TEST(EmbeddingTest, OverflowingThePositionTableIsAnError) {
  std::mt19937_64 rng(1);
  ParamStore store;
  const auto set = EmbeddingSet::create(store, 6, 4, 2, rng);
  const std::vector<int> tokens = {1, 2, 3, 4, 5};
  EXPECT_THROW(embed_sequence(tokens, 0, set), LengthError);
}

TEST(LayerTest, EncoderLayerMatchesSublayerReplay) {
  std::mt19937_64 rng(31);
  ParamStore store;
  const auto layer = EncoderLayer::create(store, "enc", 8, 2, 16, rng);
  const Tensor x = random_tensor({4, 8}, rng);
  const LayerContext ctx;
  const auto out = layer(x, std::nullopt, ctx).to_vector();

  const Tensor n1 = layer.attn_norm(x, ctx.norm_eps);
  const Tensor h = add(x, layer.self_attn(AttentionInputs{n1, n1, n1}));
  const Tensor n2 = layer.ffn_norm(h, ctx.norm_eps);
  const Tensor ffn = layer.ffn.outer(relu(layer.ffn.inner(n2)));
  EXPECT_EQ(out, add(h, ffn).to_vector());
}

TEST(LayerTest, ZeroSublayersLeaveTheResidualStream) {
  std::mt19937_64 rng(32);
  ParamStore store;
  auto layer = EncoderLayer::create(store, "enc", 4, 1, 8, rng);
  for (auto* t : {&layer.self_attn.output.weight, &layer.self_attn.output.bias, &layer.ffn.outer.weight,
                  &layer.ffn.outer.bias}) {
    for (auto& v : t->mutable_data()) v = 0;
  }
  const Tensor x = random_tensor({3, 4}, rng);
  EXPECT_EQ(layer(x, std::nullopt, LayerContext{}).to_vector(), x.to_vector());
}

TEST(LayerTest, DecoderOutputIgnoresLaterPositions) {
  std::mt19937_64 rng(33);
  ParamStore store;
  const auto stack = DecoderStack::create(store, "dec", 2, 8, 2, 16, 1, rng);
  const Tensor mem = random_tensor({3, 8}, rng);
  const CrossMemory memories[] = {CrossMemory{mem, std::nullopt, {}}};
  Tensor y = random_tensor({4, 8}, rng);
  const auto before = stack(y, memories, LayerContext{}).to_vector();
  auto data = y.mutable_data();
  for (std::size_t c = 0; c < 8; ++c) data[3 * 8 + c] += 5.0f;  // change the last row
  const auto after = stack(y, memories, LayerContext{}).to_vector();
  for (std::size_t i = 0; i < 3 * 8; ++i) EXPECT_EQ(before[i], after[i]);
  bool changed = false;
  for (std::size_t i = 3 * 8; i < 4 * 8; ++i) changed |= before[i] != after[i];
  EXPECT_TRUE(changed);
}

TEST(LayerTest, DecoderLayerCreatesOneCrossBlockPerMemory) {
  std::mt19937_64 rng(34);
  ParamStore store;
  const auto layer = DecoderLayer::create(store, "dec.layer0", 4, 1, 8, 2, rng);
  EXPECT_EQ(layer.cross_attn.size(), 2u);
  EXPECT_TRUE(store.contains("dec.layer0.cross1_attn.q.w"));
  EXPECT_TRUE(store.contains("dec.layer0.cross0_norm.gain"));
}
