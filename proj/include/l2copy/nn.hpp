#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "l2copy/tensor.hpp"

namespace l2copy {
inline namespace L2COPY_PRECISION_NS {

/// Named, ordered collection of learnable tensors. Every parameter is a
/// requires-grad leaf; the optimizer and checkpoints walk it by name.
class ParamStore {
 public:
  Tensor& create(const std::string& name, Tensor init);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const std::map<std::string, Tensor>& all() const { return params_; }
  std::map<std::string, Tensor>& all() { return params_; }
  std::size_t total_elements() const;
  void zero_grad();

 private:
  std::map<std::string, Tensor> params_;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]; may be empty

  static Linear create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                       std::mt19937_64& rng, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;
  static LayerNorm create(ParamStore& store, const std::string& name, std::size_t d);
  Tensor operator()(const Tensor& x, Real eps) const;
};

/// Token, position and language tables shared by every sequence reader.
/// Language row 0 marks src, row 1 marks mt.
struct EmbeddingSet {
  Tensor token;     // [V, d]
  Tensor position;  // [L_max, d]
  Tensor language;  // [2, d]

  static constexpr int kSourceLanguage = 0;
  static constexpr int kTargetLanguage = 1;

  static EmbeddingSet create(ParamStore& store, std::size_t vocab, std::size_t max_len, std::size_t d,
                             std::mt19937_64& rng);
};

/// Row i = token[tokens[i]] + position[position_offset + i] + language[lang_id].
/// Pass lang_id < 0 to omit the language term.
Tensor embed_sequence(std::span<const int> tokens, int lang_id, const EmbeddingSet& set,
                      std::size_t position_offset = 0);

struct AttentionInputs {
  Tensor queries;  // [L_q, d]
  Tensor keys;     // [L_k, d]
  Tensor values;   // [L_k, d_v]
  std::vector<bool> key_padding;  // true marks an excluded key; empty means none
  bool causal = false;
  /// Per-key multiplier on min-shifted energies, length L_k.
  std::optional<Tensor> scale_vector;
};

struct AttentionResult {
  Tensor output;   // [L_q, d_v]
  Tensor weights;  // [L_q, L_k]
};

/// Scaled dot-product attention with the copy-score scaling hook.
///
/// Per query row the energies q.K^T/sqrt(d) have their minimum over unmasked
/// keys subtracted, are multiplied elementwise by scale_vector when one is
/// given, and are normalised by a softmax over the unmasked keys. Without a
/// scale vector the shift cancels inside the softmax, so the result equals
/// plain softmax attention; with an all-ones vector it is bitwise identical.
AttentionResult scaled_dot_attention(const AttentionInputs& in);

struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParamStore& store, const std::string& name, std::size_t d,
                                   std::size_t heads, std::mt19937_64& rng);

  /// `in` carries the unprojected states. Every head uses the same scale
  /// vector. When per_head is non-null it receives each head's weights.
  Tensor operator()(const AttentionInputs& in, std::vector<Tensor>* per_head = nullptr) const;
};

/// Convenience wrapper with the same contract as the method above.
Tensor multi_head_attention(const AttentionInputs& in, const MultiHeadAttention& params,
                            std::vector<Tensor>* per_head = nullptr);

struct FeedForward {
  Linear inner, outer;
  static FeedForward create(ParamStore& store, const std::string& name, std::size_t d, std::size_t filter,
                            std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;
};

/// Shared knobs for every sublayer in a stack.
struct LayerContext {
  Real norm_eps = Real(1e-6);
  Real dropout = 0;
  std::mt19937_64* rng = nullptr;  // required when dropout > 0
};

/// Pre-norm encoder layer: x + SelfAttn(LN(x)), then h + FFN(LN(h)).
struct EncoderLayer {
  LayerNorm attn_norm;
  MultiHeadAttention self_attn;
  LayerNorm ffn_norm;
  FeedForward ffn;

  static EncoderLayer create(ParamStore& store, const std::string& name, std::size_t d, std::size_t heads,
                             std::size_t filter, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, const std::optional<Tensor>& self_scale, const LayerContext& ctx,
                    const std::vector<bool>& padding = {}) const;
};

/// One memory the decoder cross-attends to, with its optional scale vector.
struct CrossMemory {
  Tensor states;
  std::optional<Tensor> scale_vector;
  std::vector<bool> padding;
};

/// Pre-norm decoder layer: causal self-attention, one cross-attention block
/// per memory (applied in order), feed-forward.
struct DecoderLayer {
  LayerNorm self_norm;
  MultiHeadAttention self_attn;
  std::vector<LayerNorm> cross_norms;
  std::vector<MultiHeadAttention> cross_attn;
  LayerNorm ffn_norm;
  FeedForward ffn;

  static DecoderLayer create(ParamStore& store, const std::string& name, std::size_t d, std::size_t heads,
                             std::size_t filter, std::size_t memories, std::mt19937_64& rng);

  /// cross_weights, when non-null, receives per-memory lists of per-head
  /// attention weights.
  Tensor operator()(const Tensor& y, std::span<const CrossMemory> memories, const LayerContext& ctx,
                    std::vector<std::vector<Tensor>>* cross_weights = nullptr) const;
};

Tensor encoder_layer(const EncoderLayer& layer, const Tensor& x, const std::optional<Tensor>& self_scale,
                     const LayerContext& ctx);
Tensor decoder_layer(const DecoderLayer& layer, const Tensor& y, std::span<const CrossMemory> memories,
                     const LayerContext& ctx);

/// N encoder layers followed by a final layer norm.
struct EncoderStack {
  std::vector<EncoderLayer> layers;
  LayerNorm final_norm;

  static EncoderStack create(ParamStore& store, const std::string& name, std::size_t layers, std::size_t d,
                             std::size_t heads, std::size_t filter, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, const std::optional<Tensor>& self_scale, const LayerContext& ctx) const;
};

struct DecoderStack {
  std::vector<DecoderLayer> layers;
  LayerNorm final_norm;

  static DecoderStack create(ParamStore& store, const std::string& name, std::size_t layers, std::size_t d,
                             std::size_t heads, std::size_t filter, std::size_t memories, std::mt19937_64& rng);
  /// cross_weights[layer][memory][head]
  Tensor operator()(const Tensor& y, std::span<const CrossMemory> memories, const LayerContext& ctx,
                    std::vector<std::vector<std::vector<Tensor>>>* cross_weights = nullptr) const;
};

}  // namespace L2COPY_PRECISION_NS
}  // namespace l2copy
