#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "l2copy/data.hpp"
#include "l2copy/model.hpp"

namespace l2copy {
inline namespace L2COPY_PRECISION_NS {

/// ((5 + len) / 6)^alpha
double length_penalty(std::size_t len, double alpha);

/// 1.5 * (I + K) + 5, rounded down.
std::size_t default_max_len(std::size_t src_len, std::size_t mt_len);

struct BeamOptions {
  std::size_t beam = 4;
  double alpha = 1.0;
  std::size_t max_len = 16;  // generated tokens, EOS included
  int eos = Vocab::kEos;
  std::vector<int> banned = {Vocab::kPad, Vocab::kBos};
};

struct Hypothesis {
  std::vector<int> tokens;  // ends with EOS when finished
  double logprob = 0;
  double score = 0;  // logprob / length_penalty(tokens.size())
  bool finished = false;
};

/// Log-probabilities of the next token given the generated prefix (which
/// excludes BOS). Entries of -inf are never expanded.
using NextTokenScorer = std::function<std::vector<double>(const std::vector<int>& prefix)>;

/// Token-level beam search. Each round scores the EOS completion of every
/// live hypothesis into the finished set and keeps the `beam` best non-EOS
/// extensions as the new live set (ties broken by token id, then by
/// hypothesis index). With beam == 1 this follows the greedy non-EOS path and
/// picks the best place to stop along it. The search stops when no live hypothesis
/// can still beat the best finished score, or at max_len. Returns the best
/// finished hypothesis, or the best live one (finished == false) when none
/// finished.
Hypothesis beam_search(const NextTokenScorer& scorer, std::size_t vocab_size, const BeamOptions& options);

/// Beam search over the model's interpolated copy/generate distribution.
/// options.max_len == 0 selects default_max_len(I, K).
Hypothesis beam_search(const ApeModel& model, std::span<const int> src, std::span<const int> mt,
                       BeamOptions options);

/// Scorer that encodes (src, mt) once and replays the decoder per prefix.
NextTokenScorer model_scorer(const ApeModel& model, std::span<const int> src, std::span<const int> mt);

}  // namespace L2COPY_PRECISION_NS
}  // namespace l2copy
