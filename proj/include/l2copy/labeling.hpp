#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "l2copy/data.hpp"

namespace l2copy {

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

enum class LabelMode {
  /// One alignment recovered by backtrace.
  single,
  /// A token is labelled when it is matched in any maximal alignment.
  union_of_alignments,
};

/// Copy labels for mt against pe. In single mode the backtrace takes the
/// match on equal tokens and otherwise steps back along pe while that keeps
/// the LCS length, so the labels always sum to lcs_length(mt, pe).
Labels lcs_labels(std::span<const std::string> mt, std::span<const std::string> pe,
                  LabelMode mode = LabelMode::single);

/// Fills in labels for every triplet (overwriting existing ones).
void label_corpus(std::vector<Triplet>& corpus, LabelMode mode = LabelMode::single);

/// Sum of labels over sum of mt lengths. Uses stored labels when present.
double corpus_copy_rate(const std::vector<Triplet>& corpus, LabelMode mode = LabelMode::single);

}  // namespace l2copy
