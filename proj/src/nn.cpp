#include "l2copy/nn.hpp"

#include <cmath>
#include <numeric>

namespace l2copy {
inline namespace L2COPY_PRECISION_NS {

// ---------------------------------------------------------------------------
// ParamStore

Tensor& ParamStore::create(const std::string& name, Tensor init) {
  if (params_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  init.set_requires_grad(true);
  return params_.emplace(name, std::move(init)).first->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

// ---------------------------------------------------------------------------
// Building blocks

Linear Linear::create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                      std::mt19937_64& rng, bool with_bias) {
  const Real bound = static_cast<Real>(std::sqrt(6.0 / static_cast<double>(in + out)));
  Linear l;
  l.weight = store.create(name + ".w", Tensor::uniform({in, out}, bound, rng));
  if (with_bias) l.bias = store.create(name + ".b", Tensor::zeros({out}));
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias ? add(y, bias) : y;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, std::size_t d) {
  return {store.create(name + ".gain", Tensor::full({d}, Real(1))),
          store.create(name + ".bias", Tensor::zeros({d}))};
}

Tensor LayerNorm::operator()(const Tensor& x, Real eps) const { return layer_norm(x, gain, bias, eps); }

EmbeddingSet EmbeddingSet::create(ParamStore& store, std::size_t vocab, std::size_t max_len, std::size_t d,
                                  std::mt19937_64& rng) {
  const Real stddev = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(d)));
  EmbeddingSet set;
  set.token = store.create("embed.token", Tensor::randn({vocab, d}, stddev, rng));
  set.position = store.create("embed.position", Tensor::randn({max_len, d}, stddev, rng));
  set.language = store.create("embed.language", Tensor::randn({2, d}, stddev, rng));
  return set;
}

Tensor embed_sequence(std::span<const int> tokens, int lang_id, const EmbeddingSet& set,
                      std::size_t position_offset) {
  const std::size_t len = tokens.size();
  const std::size_t max_len = set.position.rows();
  if (position_offset + len > max_len) {
    throw LengthError("sequence of length " + std::to_string(position_offset + len) +
                      " exceeds the position table (" + std::to_string(max_len) + ")");
  }
  std::vector<int> positions(len);
  std::iota(positions.begin(), positions.end(), static_cast<int>(position_offset));
  Tensor x = add(embedding_lookup(set.token, tokens), embedding_lookup(set.position, positions));
  if (lang_id >= 0) {
    std::vector<int> langs(len, lang_id);
    x = add(x, embedding_lookup(set.language, langs));
  }
  return x;
}

// ---------------------------------------------------------------------------
// Attention

AttentionResult scaled_dot_attention(const AttentionInputs& in) {
  const Tensor& q = in.queries;
  const Tensor& k = in.keys;
  const Tensor& v = in.values;
  if (!q || !k || !v || q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw ShapeError("attention: queries, keys and values must be rank-2");
  }
  const std::size_t lq = q.rows(), lk = k.rows(), d = q.cols();
  if (k.cols() != d) throw ShapeError("attention: query and key widths differ");
  if (v.rows() != lk) throw ShapeError("attention: keys and values differ in length");
  if (!in.key_padding.empty() && in.key_padding.size() != lk) {
    throw ShapeError("attention: padding mask length differs from key count");
  }
  if (in.scale_vector && in.scale_vector->numel() != lk) {
    throw ShapeError("attention: scale vector length " + std::to_string(in.scale_vector->numel()) +
                     " differs from key count " + std::to_string(lk));
  }

  std::vector<std::uint8_t> keep(lq * lk, 1);
  for (std::size_t i = 0; i < lq; ++i) {
    for (std::size_t j = 0; j < lk; ++j) {
      const bool padded = !in.key_padding.empty() && in.key_padding[j];
      const bool future = in.causal && j > i;
      keep[i * lk + j] = (padded || future) ? 0 : 1;
    }
  }

  Tensor energy = scale(matmul_bt(q, k), static_cast<Real>(1.0 / std::sqrt(static_cast<double>(d))));
  Tensor shifted = shift_by_row_min(energy, keep);
  if (in.scale_vector) shifted = mul(shifted, reshape(*in.scale_vector, {lk}));
  Tensor weights = masked_softmax(shifted, keep);
  return {matmul(weights, v), weights};
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& name, std::size_t d,
                                              std::size_t heads, std::mt19937_64& rng) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("model width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  MultiHeadAttention m;
  m.query = Linear::create(store, name + ".q", d, d, rng);
  m.key = Linear::create(store, name + ".k", d, d, rng);
  m.value = Linear::create(store, name + ".v", d, d, rng);
  m.output = Linear::create(store, name + ".o", d, d, rng);
  m.heads = heads;
  return m;
}

Tensor MultiHeadAttention::operator()(const AttentionInputs& in, std::vector<Tensor>* per_head) const {
  const std::size_t d = query.weight.cols();
  if (heads == 0 || d % heads != 0) throw ConfigError("attention width not divisible by head count");
  const Tensor q = query(in.queries);
  const Tensor k = key(in.keys);
  const Tensor v = value(in.values);
  const std::size_t width = d / heads;
  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  if (per_head) per_head->clear();
  for (std::size_t h = 0; h < heads; ++h) {
    AttentionInputs head{heads == 1 ? q : slice_cols(q, h * width, width),
                         heads == 1 ? k : slice_cols(k, h * width, width),
                         heads == 1 ? v : slice_cols(v, h * width, width),
                         in.key_padding,
                         in.causal,
                         in.scale_vector};
    AttentionResult r = scaled_dot_attention(head);
    outputs.push_back(std::move(r.output));
    if (per_head) per_head->push_back(std::move(r.weights));
  }
  return output(heads == 1 ? outputs.front() : concat_cols(outputs));
}

Tensor multi_head_attention(const AttentionInputs& in, const MultiHeadAttention& params,
                            std::vector<Tensor>* per_head) {
  return params(in, per_head);
}

FeedForward FeedForward::create(ParamStore& store, const std::string& name, std::size_t d, std::size_t filter,
                                std::mt19937_64& rng) {
  return {Linear::create(store, name + ".inner", d, filter, rng),
          Linear::create(store, name + ".outer", filter, d, rng)};
}

Tensor FeedForward::operator()(const Tensor& x) const { return outer(relu(inner(x))); }

// ---------------------------------------------------------------------------
// Layers

namespace {

Tensor residual(const Tensor& x, const Tensor& sublayer, const LayerContext& ctx) {
  if (ctx.dropout > 0) {
    if (!ctx.rng) throw ConfigError("dropout requires a random generator");
    return add(x, dropout(sublayer, ctx.dropout, *ctx.rng));
  }
  return add(x, sublayer);
}

}  // namespace

EncoderLayer EncoderLayer::create(ParamStore& store, const std::string& name, std::size_t d, std::size_t heads,
                                  std::size_t filter, std::mt19937_64& rng) {
  EncoderLayer layer;
  layer.attn_norm = LayerNorm::create(store, name + ".attn_norm", d);
  layer.self_attn = MultiHeadAttention::create(store, name + ".self_attn", d, heads, rng);
  layer.ffn_norm = LayerNorm::create(store, name + ".ffn_norm", d);
  layer.ffn = FeedForward::create(store, name + ".ffn", d, filter, rng);
  return layer;
}

Tensor EncoderLayer::operator()(const Tensor& x, const std::optional<Tensor>& self_scale, const LayerContext& ctx,
                                const std::vector<bool>& padding) const {
  const Tensor n = attn_norm(x, ctx.norm_eps);
  const Tensor h = residual(x, self_attn(AttentionInputs{n, n, n, padding, false, self_scale}), ctx);
  return residual(h, ffn(ffn_norm(h, ctx.norm_eps)), ctx);
}

DecoderLayer DecoderLayer::create(ParamStore& store, const std::string& name, std::size_t d, std::size_t heads,
                                  std::size_t filter, std::size_t memories, std::mt19937_64& rng) {
  DecoderLayer layer;
  layer.self_norm = LayerNorm::create(store, name + ".self_norm", d);
  layer.self_attn = MultiHeadAttention::create(store, name + ".self_attn", d, heads, rng);
  for (std::size_t m = 0; m < memories; ++m) {
    const std::string tag = name + ".cross" + std::to_string(m);
    layer.cross_norms.push_back(LayerNorm::create(store, tag + "_norm", d));
    layer.cross_attn.push_back(MultiHeadAttention::create(store, tag + "_attn", d, heads, rng));
  }
  layer.ffn_norm = LayerNorm::create(store, name + ".ffn_norm", d);
  layer.ffn = FeedForward::create(store, name + ".ffn", d, filter, rng);
  return layer;
}

Tensor DecoderLayer::operator()(const Tensor& y, std::span<const CrossMemory> memories, const LayerContext& ctx,
                                std::vector<std::vector<Tensor>>* cross_weights) const {
  if (memories.size() != cross_attn.size()) {
    throw ConfigError("decoder layer expects " + std::to_string(cross_attn.size()) + " memories, got " +
                      std::to_string(memories.size()));
  }
  const Tensor n = self_norm(y, ctx.norm_eps);
  Tensor h = residual(y, self_attn(AttentionInputs{n, n, n, {}, true, std::nullopt}), ctx);
  if (cross_weights) cross_weights->assign(memories.size(), {});
  for (std::size_t m = 0; m < memories.size(); ++m) {
    const Tensor q = cross_norms[m](h, ctx.norm_eps);
    const auto& mem = memories[m];
    h = residual(h,
                 cross_attn[m](AttentionInputs{q, mem.states, mem.states, mem.padding, false, mem.scale_vector},
                               cross_weights ? &(*cross_weights)[m] : nullptr),
                 ctx);
  }
  return residual(h, ffn(ffn_norm(h, ctx.norm_eps)), ctx);
}

Tensor encoder_layer(const EncoderLayer& layer, const Tensor& x, const std::optional<Tensor>& self_scale,
                     const LayerContext& ctx) {
  return layer(x, self_scale, ctx);
}

Tensor decoder_layer(const DecoderLayer& layer, const Tensor& y, std::span<const CrossMemory> memories,
                     const LayerContext& ctx) {
  return layer(y, memories, ctx);
}

EncoderStack EncoderStack::create(ParamStore& store, const std::string& name, std::size_t layers, std::size_t d,
                                  std::size_t heads, std::size_t filter, std::mt19937_64& rng) {
  EncoderStack stack;
  for (std::size_t i = 0; i < layers; ++i) {
    stack.layers.push_back(EncoderLayer::create(store, name + ".layer" + std::to_string(i), d, heads, filter, rng));
  }
  stack.final_norm = LayerNorm::create(store, name + ".final_norm", d);
  return stack;
}

Tensor EncoderStack::operator()(const Tensor& x, const std::optional<Tensor>& self_scale,
                                const LayerContext& ctx) const {
  Tensor h = x;
  for (const auto& layer : layers) h = layer(h, self_scale, ctx);
  return final_norm(h, ctx.norm_eps);
}

DecoderStack DecoderStack::create(ParamStore& store, const std::string& name, std::size_t layers, std::size_t d,
                                  std::size_t heads, std::size_t filter, std::size_t memories,
                                  std::mt19937_64& rng) {
  DecoderStack stack;
  for (std::size_t i = 0; i < layers; ++i) {
    stack.layers.push_back(
        DecoderLayer::create(store, name + ".layer" + std::to_string(i), d, heads, filter, memories, rng));
  }
  stack.final_norm = LayerNorm::create(store, name + ".final_norm", d);
  return stack;
}

Tensor DecoderStack::operator()(const Tensor& y, std::span<const CrossMemory> memories, const LayerContext& ctx,
                                std::vector<std::vector<std::vector<Tensor>>>* cross_weights) const {
  Tensor h = y;
  if (cross_weights) cross_weights->assign(layers.size(), {});
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h, memories, ctx, cross_weights ? &(*cross_weights)[i] : nullptr);
  }
  return final_norm(h, ctx.norm_eps);
}

}  // namespace L2COPY_PRECISION_NS
}  // namespace l2copy
