#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "l2copy/config.hpp"
#include "l2copy/data.hpp"
#include "l2copy/decode.hpp"
#include "l2copy/model.hpp"
#include "l2copy/train.hpp"

namespace l2copy {
inline namespace L2COPY_PRECISION_NS {

/// Encodes a corpus, labelling triplets without stored labels in the mode
/// selected by data.union_labels.
std::vector<EncodedTriplet> encode_corpus(const std::vector<Triplet>& corpus, const Vocab& vocab,
                                          const DataConfig& data);

struct TrainedSystem {
  Config config;  // model.vocab_size filled in
  Vocab vocab;
  std::unique_ptr<ApeModel> model;
  TrainingState state;
};

/// Builds the vocabulary from the corpus, initialises a model from
/// config.train.seed and trains it for config.train.steps steps.
TrainedSystem train_system(const Config& config, const std::vector<Triplet>& corpus,
                           const std::function<void(const StepMetrics&)>& on_step = {});

BeamOptions beam_options(const DecodeConfig& decode);

/// Beam-decodes each (src, mt) pair and returns the surface tokens.
std::vector<Tokens> decode_corpus(const ApeModel& model, const Vocab& vocab, const std::vector<Triplet>& pairs,
                                  const DecodeConfig& decode);

struct SystemScores {
  double ter = 0;        // percent
  double bleu = 0;       // percent
  double token_acc = 0;  // teacher-forced percent
  double pred_acc = 0;   // percent; 0 without the Predictor
};

/// Decodes the corpus with beam search and scores against pe, plus the
/// teacher-forced accuracies on the same triplets.
SystemScores score_system(const ApeModel& model, const Vocab& vocab, const Config& config,
                          const std::vector<Triplet>& corpus);

}  // namespace L2COPY_PRECISION_NS
}  // namespace l2copy
