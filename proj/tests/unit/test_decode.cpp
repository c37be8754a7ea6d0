#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "l2copy/decode.hpp"

using namespace l2copy;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Deterministic pseudo-model: log-softmax of logits drawn from a generator
// seeded by the prefix.
NextTokenScorer random_scorer(std::uint64_t seed, std::size_t vocab, double spread) {
  return [=](const std::vector<int>& prefix) {
    std::uint64_t h = seed * 0x9E3779B97F4A7C15ull + 17;
    for (int t : prefix) h = (h ^ static_cast<std::uint64_t>(t + 1)) * 0x100000001B3ull;
    std::mt19937_64 rng(h);
    std::normal_distribution<double> dist(0.0, spread);
    std::vector<double> logits(vocab);
    double mx = kNegInf;
    for (auto& l : logits) mx = std::max(mx, l = dist(rng));
    double z = 0;
    for (double l : logits) z += std::exp(l - mx);
    for (auto& l : logits) l = l - mx - std::log(z);
    return logits;
  };
}

struct Best {
  double score = kNegInf;
  std::vector<int> tokens;
};

void enumerate(const NextTokenScorer& scorer, const BeamOptions& o, std::vector<int>& prefix, double logp,
               Best& best) {
  const auto lp = scorer(prefix);
  for (std::size_t t = 0; t < lp.size(); ++t) {
    const int tok = static_cast<int>(t);
    if (std::find(o.banned.begin(), o.banned.end(), tok) != o.banned.end()) continue;
    const double next = logp + lp[t];
    prefix.push_back(tok);
    if (tok == o.eos) {
      const double score = next / length_penalty(prefix.size(), o.alpha);
      if (score > best.score) best = {score, prefix};
    } else if (prefix.size() < o.max_len) {
      enumerate(scorer, o, prefix, next, best);
    }
    prefix.pop_back();
  }
}

Best exhaustive(const NextTokenScorer& scorer, const BeamOptions& o) {
  Best best;
  std::vector<int> prefix;
  enumerate(scorer, o, prefix, 0.0, best);
  return best;
}

}  // namespace

TEST(LengthPenaltyTest, Values) {
  EXPECT_EQ(length_penalty(1, 0.6), 1.0);
  EXPECT_EQ(length_penalty(1, 2.0), 1.0);
  EXPECT_EQ(length_penalty(9, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(length_penalty(7, 1.0), 2.0);
}

// With one slot the live hypothesis follows the greedy argmax over non-EOS
// tokens, and the answer is the best-scoring EOS completion along that path.
TEST(BeamSearchTest, BeamOneFollowsTheGreedyPath) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scorer = random_scorer(seed, 7, 2.0);
    BeamOptions o;
    o.beam = 1;
    o.max_len = 6;
    std::vector<int> path;
    double path_logp = 0;
    std::vector<int> best_tokens;
    double best_score = kNegInf, best_logp = 0;
    while (path.size() < o.max_len) {
      const auto lp = scorer(path);
      const double done = path_logp + lp[Vocab::kEos];
      if (done / length_penalty(path.size() + 1, o.alpha) > best_score) {
        best_score = done / length_penalty(path.size() + 1, o.alpha);
        best_logp = done;
        best_tokens = path;
        best_tokens.push_back(Vocab::kEos);
      }
      int best = -1;
      for (int t = 3; t < 7; ++t) {  // PAD and BOS are banned, EOS ends the path
        if (best < 0 || lp[static_cast<std::size_t>(t)] > lp[static_cast<std::size_t>(best)]) best = t;
      }
      path.push_back(best);
      path_logp += lp[static_cast<std::size_t>(best)];
    }
    const auto h = beam_search(scorer, 7, o);
    EXPECT_EQ(h.tokens, best_tokens) << "seed " << seed;
    EXPECT_EQ(h.logprob, best_logp);
  }
}

TEST(BeamSearchTest, ForcedSequenceIsFoundForAnyBeam) {
  const std::vector<int> forced = {5, 4, 6, Vocab::kEos};
  const NextTokenScorer scorer = [&](const std::vector<int>& prefix) {
    std::vector<double> lp(7, kNegInf);
    lp[static_cast<std::size_t>(forced[std::min(prefix.size(), forced.size() - 1)])] = 0.0;
    return lp;
  };
  for (std::size_t beam = 1; beam <= 5; ++beam) {
    BeamOptions o;
    o.beam = beam;
    o.max_len = 10;
    const auto h = beam_search(scorer, 7, o);
    EXPECT_EQ(h.tokens, forced);
    EXPECT_TRUE(h.finished);
    EXPECT_EQ(h.score, 0.0);
  }
}

TEST(BeamSearchTest, WideBeamMatchesExhaustiveSearch) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto scorer = random_scorer(seed, 6, 1.5);
    BeamOptions o;
    o.beam = 128;  // wider than every candidate set, so nothing is pruned
    o.max_len = 4;
    o.alpha = 1.0;
    const auto oracle = exhaustive(scorer, o);
    const auto h = beam_search(scorer, 6, o);
    ASSERT_TRUE(h.finished);
    EXPECT_EQ(h.score, oracle.score) << "seed " << seed;
    EXPECT_EQ(h.tokens, oracle.tokens) << "seed " << seed;
  }
}

TEST(BeamSearchTest, ReturnsLiveHypothesisWhenNothingFinishes) {
  const NextTokenScorer scorer = [](const std::vector<int>&) {
    std::vector<double> lp(5, kNegInf);
    lp[4] = 0.0;
    return lp;
  };
  BeamOptions o;
  o.max_len = 3;
  const auto h = beam_search(scorer, 5, o);
  EXPECT_FALSE(h.finished);
  EXPECT_EQ(h.tokens, (std::vector<int>{4, 4, 4}));
}

TEST(BeamSearchTest, InvalidOptionsAreRejected) {
  const auto scorer = random_scorer(1, 5, 1.0);
  BeamOptions o;
  o.beam = 0;
  EXPECT_THROW(beam_search(scorer, 5, o), ContractError);
  o.beam = 2;
  o.max_len = 0;
  EXPECT_THROW(beam_search(scorer, 5, o), ContractError);
}

TEST(BeamSearchTest, DefaultMaxLenFormula) {
  EXPECT_EQ(default_max_len(4, 6), 20u);
  EXPECT_EQ(default_max_len(1, 2), 9u);
}

TEST(BeamSearchTest, ModelDecodingIsCappedByThePositionTable) {
  ModelConfig c;
  c.d = 8;
  c.heads = 2;
  c.filter = 16;
  c.encoder_layers = c.decoder_layers = c.predictor_layers = 1;
  c.vocab_size = 9;
  c.max_len = 6;
  const ApeModel model(c, 3);
  const std::vector<int> src = {4, 5}, mt = {6, 7};
  BeamOptions o;
  o.max_len = 0;
  o.banned = {Vocab::kPad, Vocab::kBos, Vocab::kEos};  // never finishes
  const auto h = beam_search(model, src, mt, o);
  EXPECT_FALSE(h.finished);
  EXPECT_EQ(h.tokens.size(), 5u);
}

TEST(BeamSearchTest, ModelScorerMatchesDirectDecodeStep) {
  ModelConfig c;
  c.d = 8;
  c.heads = 2;
  c.filter = 16;
  c.encoder_layers = c.decoder_layers = c.predictor_layers = 1;
  c.vocab_size = 9;
  c.max_len = 16;
  const ApeModel model(c, 4);
  const std::vector<int> src = {4, 5}, mt = {6, 7, 8};
  const auto scorer = model_scorer(model, src, mt);
  NoGradGuard guard;
  const auto mem = model.encode(src, mt, model.predictor_forward(src, mt));
  const std::vector<int> prefix = {Vocab::kBos, 6};
  const auto probs = model.decode_step(prefix, mem).probs;
  const auto lp = scorer({6});
  for (std::size_t v = 0; v < 9; ++v) EXPECT_NEAR(lp[v], std::log(static_cast<double>(probs.at(v))), 1e-6);
}
