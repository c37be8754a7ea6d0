#include "l2copy/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace l2copy {
inline namespace L2COPY_PRECISION_NS {

double length_penalty(std::size_t len, double alpha) {
  return std::pow((5.0 + static_cast<double>(len)) / 6.0, alpha);
}

std::size_t default_max_len(std::size_t src_len, std::size_t mt_len) {
  return static_cast<std::size_t>(1.5 * static_cast<double>(src_len + mt_len)) + 5;
}

namespace {

struct Candidate {
  double logprob;
  int token;
  std::size_t parent;
};

bool better_finished(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

}  // namespace

Hypothesis beam_search(const NextTokenScorer& scorer, std::size_t vocab_size, const BeamOptions& options) {
  if (options.beam == 0) throw ContractError("beam_search: beam must be at least 1");
  if (options.max_len == 0) throw ContractError("beam_search: max_len must be at least 1");
  if (options.alpha < 0) throw ContractError("beam_search: the length penalty exponent must be non-negative");
  std::vector<std::uint8_t> banned(vocab_size, 0);
  for (int b : options.banned) {
    if (b >= 0 && static_cast<std::size_t>(b) < vocab_size) banned[static_cast<std::size_t>(b)] = 1;
  }
  const double final_penalty = length_penalty(options.max_len, options.alpha);

  std::vector<Hypothesis> alive{Hypothesis{}};
  std::vector<Hypothesis> finished;
  for (std::size_t t = 1; t <= options.max_len && !alive.empty(); ++t) {
    // Every live hypothesis offers its end-of-sentence completion to the
    // finished set; only non-EOS extensions compete for the live beam.
    std::vector<Candidate> candidates;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      const std::vector<double> logp = scorer(alive[h].tokens);
      if (logp.size() != vocab_size) throw ContractError("beam_search: scorer returned the wrong vocabulary size");
      for (std::size_t tok = 0; tok < vocab_size; ++tok) {
        if (banned[tok] || std::isinf(logp[tok]) || std::isnan(logp[tok])) continue;
        const double logprob = alive[h].logprob + logp[tok];
        if (static_cast<int>(tok) == options.eos) {
          Hypothesis done;
          done.tokens = alive[h].tokens;
          done.tokens.push_back(options.eos);
          done.logprob = logprob;
          done.score = logprob / length_penalty(done.tokens.size(), options.alpha);
          done.finished = true;
          finished.push_back(std::move(done));
        } else {
          candidates.push_back({logprob, static_cast<int>(tok), h});
        }
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      if (a.token != b.token) return a.token < b.token;
      return a.parent < b.parent;
    });
    if (candidates.size() > options.beam) candidates.resize(options.beam);

    std::vector<Hypothesis> next;
    for (const auto& c : candidates) {
      Hypothesis h;
      h.tokens = alive[c.parent].tokens;
      h.tokens.push_back(c.token);
      h.logprob = c.logprob;
      h.score = c.logprob / length_penalty(h.tokens.size(), options.alpha);
      next.push_back(std::move(h));
    }
    alive = std::move(next);

    if (!finished.empty() && !alive.empty()) {
      // Log-probabilities only fall and the penalty is largest at max_len,
      // so no live hypothesis can end above logprob / lp(max_len).
      const auto best = std::max_element(finished.begin(), finished.end(),
                                         [](const auto& a, const auto& b) { return better_finished(b, a); });
      double bound = -std::numeric_limits<double>::infinity();
      for (const auto& h : alive) bound = std::max(bound, h.logprob / final_penalty);
      if (best->score >= bound) break;
    }
  }

  if (!finished.empty()) {
    return *std::min_element(finished.begin(), finished.end(), better_finished);
  }
  if (alive.empty()) return Hypothesis{};
  return *std::min_element(alive.begin(), alive.end(), better_finished);
}

NextTokenScorer model_scorer(const ApeModel& model, std::span<const int> src, std::span<const int> mt) {
  NoGradGuard guard;
  const LayerContext ctx = model.inference_context();
  std::optional<Tensor> scores;
  if (model.config().predictor) scores = model.predictor_forward(src, mt, ctx);
  auto memory = std::make_shared<EncodedMemory>(model.encode(src, mt, scores, ctx));
  return [&model, memory](const std::vector<int>& prefix) {
    NoGradGuard inner;
    std::vector<int> ids;
    ids.reserve(prefix.size() + 1);
    ids.push_back(Vocab::kBos);
    ids.insert(ids.end(), prefix.begin(), prefix.end());
    const auto step = model.decode_step(ids, *memory);
    std::vector<double> logp;
    logp.reserve(step.probs.numel());
    for (Real p : step.probs.data()) {
      logp.push_back(p > 0 ? std::log(static_cast<double>(p)) : -std::numeric_limits<double>::infinity());
    }
    return logp;
  };
}

Hypothesis beam_search(const ApeModel& model, std::span<const int> src, std::span<const int> mt,
                       BeamOptions options) {
  if (options.max_len == 0) options.max_len = default_max_len(src.size(), mt.size());
  options.max_len = std::min(options.max_len, model.config().max_len - 1);
  return beam_search(model_scorer(model, src, mt), model.config().vocab_size, options);
}

}  // namespace L2COPY_PRECISION_NS
}  // namespace l2copy
