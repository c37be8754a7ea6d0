#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "l2copy/data.hpp"

namespace l2copy {

struct TerResult {
  double edits = 0;         // shifts + edit distance after shifting
  std::size_t shifts = 0;
  std::size_t ref_length = 0;
  double score() const { return edits / static_cast<double>(ref_length); }
};

/// Translation edit rate with greedy block shifts in the TERcom style:
/// repeatedly apply the shift that most reduces the edit distance (shifts of
/// at most 10 words moved at most 50 positions, only where the block matches
/// the reference at its destination). Throws ContractError on an empty ref.
TerResult ter_stats(std::span<const std::string> hyp, std::span<const std::string> ref);
/// Edits per reference word (0.25 means 25 TER points).
double ter(std::span<const std::string> hyp, std::span<const std::string> ref);
/// Corpus TER in percent: total edits over total reference words.
double corpus_ter(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs);

/// Word-level Levenshtein distance (unit costs).
std::size_t edit_distance(std::span<const std::string> hyp, std::span<const std::string> ref);

struct BleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;

  std::array<double, 4> precisions() const;
  double brevity_penalty() const;
  /// Percent; 0 whenever any order has no match (no smoothing).
  double score() const;
};

BleuStats bleu_stats(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs);
double bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs);

struct CopyCounts {
  std::size_t correct = 0;
  std::size_t labelled = 0;
};

/// For each mt token labelled 1 against ref, checks whether the set of
/// positions where its surface form occurs is the same in hyp and ref.
CopyCounts copying_counts(std::span<const std::string> hyp, std::span<const std::string> ref,
                          std::span<const std::string> mt);
/// Corpus-level percentage; 100 when nothing is labelled.
double copying_accuracy(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs,
                        const std::vector<Tokens>& mts);

/// Percentage of positions where (score >= 0.5) agrees with the label.
double prediction_accuracy(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct SentenceScores {
  double ter = 0;  // percent
  std::size_t copy_correct = 0;
  std::size_t copy_labelled = 0;
};

struct EvalReport {
  double ter = 0;   // percent
  double bleu = 0;  // percent
  double copying_accuracy = 0;
  double prediction_accuracy = -1;  // negative when no scores were given
  std::size_t sentences = 0;
  std::vector<SentenceScores> per_sentence;

  std::string to_text() const;
  std::string to_json() const;
};

/// `mts` may be empty (copying accuracy is then skipped and reported as -1).
/// `scores`/`labels` may be empty (prediction accuracy is then -1).
EvalReport evaluate(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs,
                    const std::vector<Tokens>& mts = {}, const std::vector<std::vector<double>>& scores = {},
                    const std::vector<Labels>& labels = {});

}  // namespace l2copy
