#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "l2copy/config.hpp"
#include "l2copy/data.hpp"
#include "l2copy/nn.hpp"

namespace l2copy {
inline namespace L2COPY_PRECISION_NS {

/// Encoder output the decoder and CopyNet read from.
struct EncodedMemory {
  std::vector<int> src_tokens;
  std::vector<int> mt_tokens;
  /// Cross-attention memories in decoder order: the single interactive memory
  /// [H^src; H^mt], or H^src and H^mt for the multi-source baseline.
  std::vector<CrossMemory> cross;
  Tensor mt_states;                   // H^mt [K, d]
  std::optional<Tensor> mask_scores;  // s as fed to the scaling masks
  Tensor copy_map;                    // [K, V], row k is one-hot at mt token k
  /// Index of the memory whose columns are mt tokens, and the column offset
  /// at which they start (I in interactive mode, 0 otherwise).
  std::size_t mt_memory = 0;
  std::size_t mt_column_offset = 0;
};

/// Per-row outputs of the decoder for a prefix of T tokens.
struct DecoderOutput {
  Tensor hidden;      // h^pe [T, d]
  Tensor gen_probs;   // P^gen [T, V]
  Tensor copy_probs;  // P^copy [T, K]; empty without CopyNet
  Tensor gate;        // gamma [T]; empty without CopyNet
  Tensor probs;       // final P [T, V]
  /// [layer][memory][head] -> [T, memory length]; filled on request.
  std::vector<std::vector<std::vector<Tensor>>> cross_weights;
};

struct DecodeRequest {
  bool last_only = false;       // compute output distributions for the last row only
  bool keep_attention = false;  // fill DecoderOutput::cross_weights
};

struct ForwardTrace {
  std::optional<Tensor> scores;  // s from the Predictor, before any detaching
  Tensor predictor_states;       // H^pred
  EncodedMemory memory;
  DecoderOutput decoder;         // J + 1 rows: J words, then EOS
};

/// Raw (unnormalised) loss sums of one teacher-forced example plus counts
/// for batch-level normalisation and logging.
struct ExampleLosses {
  Tensor ape_sum;   // -sum log P over the J + 1 targets
  Tensor copy_sum;  // sum_k (l_k - c_k)^2; empty when the copy loss is off
  Tensor pred_sum;  // predictor cross-entropy sum; empty without the Predictor
  std::size_t target_tokens = 0;
  std::size_t mt_tokens = 0;
  std::size_t correct_tokens = 0;       // teacher-forced argmax hits
  std::size_t correct_predictions = 0;  // (s >= 0.5) == label
};

/// c_k = sum over the first `steps` rows of gamma_j * P^copy_j[k].
Tensor copy_mass(const Tensor& gate, const Tensor& copy_probs, std::size_t steps);
Tensor copy_mass(const ForwardTrace& trace);

/// The post-editing network with Predictor, encoder(s), decoder and CopyNet.
///
/// Parameters are initialised from generators derived from (seed, module
/// name), so two models built with the same seed share identical values for
/// every module they have in common, whatever their ablation switches.
class ApeModel {
 public:
  ApeModel(ModelConfig config, std::uint64_t seed);
  ApeModel(const ApeModel&) = delete;
  ApeModel& operator=(const ApeModel&) = delete;
  ApeModel(ApeModel&&) = default;
  ApeModel& operator=(ApeModel&&) = default;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const EmbeddingSet& embeddings() const { return embed_; }

  /// s = sigmoid(H^pred[I:I+K] W_s) with H^pred = Predictor([X; Y~]).
  Tensor predictor_forward(std::span<const int> src, std::span<const int> mt, const LayerContext& ctx = {},
                           Tensor* states = nullptr) const;

  /// Passing scores while the Predictor is disabled throws ConfigError.
  EncodedMemory encode(std::span<const int> src, std::span<const int> mt, const std::optional<Tensor>& scores,
                       const LayerContext& ctx = {}) const;

  /// prefix must start with BOS.
  DecoderOutput decode(std::span<const int> prefix, const EncodedMemory& memory, const LayerContext& ctx = {},
                       DecodeRequest request = {}) const;

  struct Step {
    Tensor hidden;  // [d]
    Tensor probs;   // [V]
  };
  /// Distribution over the token following prefix.
  Step decode_step(std::span<const int> prefix, const EncodedMemory& memory) const;

  /// Runs the Predictor (when enabled), the encoder and every decoder step on
  /// the gold prefix. `frozen_scores` replaces the Predictor output inside the
  /// attention masks (used to compare against all-ones scores).
  ForwardTrace forward_teacher_forced(const EncodedTriplet& example, const LayerContext& ctx = {},
                                      const std::optional<Tensor>& frozen_scores = std::nullopt,
                                      bool keep_attention = false) const;

  /// Loss sums for a trace; switches follow the model configuration.
  ExampleLosses losses(const ForwardTrace& trace, const EncodedTriplet& example, const LossWeights& weights) const;

  /// Embeddings of [X; Y~]: source tokens at positions 0..I-1 with language
  /// id 0, then mt tokens at positions 0..K-1 again with language id 1.
  Tensor embed_joint(std::span<const int> src, std::span<const int> mt) const;

  /// Convenience: Predictor scores without recording a graph.
  std::vector<double> copy_scores(std::span<const int> src, std::span<const int> mt) const;

  /// Layer context for inference (no dropout).
  LayerContext inference_context() const;
  LayerContext training_context(std::mt19937_64* rng) const;

 private:
  Tensor build_copy_map(std::span<const int> mt) const;

  ModelConfig config_;
  ParamStore params_;
  EmbeddingSet embed_;
  EncoderStack predictor_;
  Linear score_;
  EncoderStack encoder_;      // interactive encoder, or Encoder^src in baseline mode
  EncoderStack encoder_mt_;   // baseline only
  DecoderStack decoder_;
  Linear copy_query_, copy_key_, copy_gate_;
};

}  // namespace L2COPY_PRECISION_NS
}  // namespace l2copy
