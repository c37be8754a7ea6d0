#include "l2copy/experiment.hpp"

#include "l2copy/eval.hpp"
#include "l2copy/labeling.hpp"

namespace l2copy {
inline namespace L2COPY_PRECISION_NS {

std::vector<EncodedTriplet> encode_corpus(const std::vector<Triplet>& corpus, const Vocab& vocab,
                                          const DataConfig& data) {
  const LabelMode mode = data.union_labels ? LabelMode::union_of_alignments : LabelMode::single;
  std::vector<EncodedTriplet> out;
  out.reserve(corpus.size());
  for (const auto& t : corpus) {
    if (t.labels || mode == LabelMode::single) {
      out.push_back(encode_triplet(t, vocab));
    } else {
      Triplet labelled = t;
      labelled.labels = lcs_labels(t.mt, t.pe, mode);
      out.push_back(encode_triplet(labelled, vocab));
    }
  }
  return out;
}

TrainedSystem train_system(const Config& config, const std::vector<Triplet>& corpus,
                           const std::function<void(const StepMetrics&)>& on_step) {
  TrainedSystem sys;
  sys.config = config;
  sys.config.validate();
  sys.vocab = build_vocab(corpus, config.data.min_count);
  sys.config.model.vocab_size = sys.vocab.size();
  sys.model = std::make_unique<ApeModel>(sys.config.model, sys.config.train.seed);
  Trainer trainer(*sys.model, sys.config, encode_corpus(corpus, sys.vocab, sys.config.data));
  trainer.train_until(sys.config.train.steps, on_step);
  sys.state = trainer.state();
  return sys;
}

BeamOptions beam_options(const DecodeConfig& decode) {
  BeamOptions options;
  options.beam = decode.beam;
  options.alpha = decode.length_alpha;
  options.max_len = decode.max_len;
  return options;
}

std::vector<Tokens> decode_corpus(const ApeModel& model, const Vocab& vocab, const std::vector<Triplet>& pairs,
                                  const DecodeConfig& decode) {
  const BeamOptions options = beam_options(decode);
  std::vector<Tokens> hyps;
  hyps.reserve(pairs.size());
  for (const auto& t : pairs) {
    const auto best = beam_search(model, vocab.encode(t.src), vocab.encode(t.mt), options);
    hyps.push_back(vocab.decode(best.tokens));
  }
  return hyps;
}

SystemScores score_system(const ApeModel& model, const Vocab& vocab, const Config& config,
                          const std::vector<Triplet>& corpus) {
  SystemScores scores;
  const auto hyps = decode_corpus(model, vocab, corpus, config.decode);
  std::vector<Tokens> refs;
  refs.reserve(corpus.size());
  for (const auto& t : corpus) refs.push_back(t.pe);
  scores.ter = corpus_ter(hyps, refs);
  scores.bleu = bleu(hyps, refs);
  const auto tf = evaluate_teacher_forced(model, encode_corpus(corpus, vocab, config.data), config.loss);
  scores.token_acc = tf.token_acc;
  scores.pred_acc = tf.pred_acc;
  return scores;
}

}  // namespace L2COPY_PRECISION_NS
}  // namespace l2copy
