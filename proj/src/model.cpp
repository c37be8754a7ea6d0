#include "l2copy/model.hpp"

#include <algorithm>
#include <string_view>

#include "l2copy/loss.hpp"

namespace l2copy {
inline namespace L2COPY_PRECISION_NS {

namespace {

std::mt19937_64 module_rng(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

Tensor maybe_dropout(const Tensor& x, const LayerContext& ctx) {
  if (ctx.dropout <= 0) return x;
  if (!ctx.rng) throw ConfigError("dropout requires a random generator");
  return dropout(x, ctx.dropout, *ctx.rng);
}

void require_tokens(std::span<const int> src, std::span<const int> mt, const char* what) {
  if (src.empty()) throw ContractError(std::string(what) + ": empty source sentence");
  if (mt.empty()) throw ContractError(std::string(what) + ": empty mt sentence");
}

}  // namespace

ApeModel::ApeModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  if (config_.vocab_size < Vocab::kReserved) {
    throw ConfigError("model vocabulary size " + std::to_string(config_.vocab_size) +
                      " is smaller than the reserved entries");
  }
  const auto& c = config_;
  {
    auto rng = module_rng(seed, "embed");
    embed_ = EmbeddingSet::create(params_, c.vocab_size, c.max_len, c.d, rng);
  }
  if (c.predictor) {
    auto rng = module_rng(seed, "predictor");
    predictor_ = EncoderStack::create(params_, "predictor", c.predictor_layers, c.d, c.heads, c.filter, rng);
    auto score_rng = module_rng(seed, "predictor.score");
    score_ = Linear::create(params_, "predictor.score", c.d, 1, score_rng, false);
  }
  if (c.interactive) {
    auto rng = module_rng(seed, "encoder");
    encoder_ = EncoderStack::create(params_, "encoder", c.encoder_layers, c.d, c.heads, c.filter, rng);
  } else {
    auto src_rng = module_rng(seed, "encoder_src");
    encoder_ = EncoderStack::create(params_, "encoder_src", c.encoder_layers, c.d, c.heads, c.filter, src_rng);
    auto mt_rng = module_rng(seed, "encoder_mt");
    encoder_mt_ = EncoderStack::create(params_, "encoder_mt", c.encoder_layers, c.d, c.heads, c.filter, mt_rng);
  }
  {
    auto rng = module_rng(seed, "decoder");
    decoder_ = DecoderStack::create(params_, "decoder", c.decoder_layers, c.d, c.heads, c.filter,
                                    c.interactive ? 1 : 2, rng);
  }
  if (c.copynet) {
    auto rng = module_rng(seed, "copynet");
    copy_query_ = Linear::create(params_, "copynet.query", c.d, c.d, rng, false);
    copy_key_ = Linear::create(params_, "copynet.key", c.d, c.d, rng, false);
    copy_gate_ = Linear::create(params_, "copynet.gate", 2 * c.d, 1, rng, true);
  }
}

LayerContext ApeModel::inference_context() const {
  LayerContext ctx;
  ctx.norm_eps = static_cast<Real>(config_.norm_eps);
  return ctx;
}

LayerContext ApeModel::training_context(std::mt19937_64* rng) const {
  LayerContext ctx = inference_context();
  ctx.dropout = static_cast<Real>(config_.dropout);
  ctx.rng = rng;
  return ctx;
}

Tensor ApeModel::embed_joint(std::span<const int> src, std::span<const int> mt) const {
  // Positions restart at 0 for the mt segment; the language row tells them apart.
  const Tensor parts[] = {embed_sequence(src, EmbeddingSet::kSourceLanguage, embed_),
                          embed_sequence(mt, EmbeddingSet::kTargetLanguage, embed_)};
  return concat_rows(parts);
}

Tensor ApeModel::build_copy_map(std::span<const int> mt) const {
  const std::size_t v = config_.vocab_size;
  std::vector<Real> m(mt.size() * v, Real(0));
  for (std::size_t k = 0; k < mt.size(); ++k) {
    if (mt[k] < 0 || static_cast<std::size_t>(mt[k]) >= v) {
      throw IndexError("mt token id " + std::to_string(mt[k]) + " outside the vocabulary");
    }
    m[k * v + static_cast<std::size_t>(mt[k])] = Real(1);
  }
  return Tensor::from({mt.size(), v}, std::move(m));
}

Tensor ApeModel::predictor_forward(std::span<const int> src, std::span<const int> mt, const LayerContext& ctx,
                                   Tensor* states) const {
  if (!config_.predictor) throw ConfigError("predictor_forward: the Predictor is disabled");
  require_tokens(src, mt, "predictor_forward");
  const Tensor h = predictor_(maybe_dropout(embed_joint(src, mt), ctx), std::nullopt, ctx);
  if (states) *states = h;
  const Tensor rows = slice_rows(h, src.size(), mt.size());
  return reshape(sigmoid(score_(rows)), {mt.size()});
}

EncodedMemory ApeModel::encode(std::span<const int> src, std::span<const int> mt,
                               const std::optional<Tensor>& scores, const LayerContext& ctx) const {
  if (scores && !config_.predictor) {
    throw ConfigError("copy scores were supplied but the Predictor is disabled");
  }
  require_tokens(src, mt, "encode");
  if (scores && scores->numel() != mt.size()) {
    throw ShapeError("encode: " + std::to_string(scores->numel()) + " scores for " + std::to_string(mt.size()) +
                     " mt tokens");
  }
  const auto& c = config_;
  EncodedMemory m;
  m.src_tokens.assign(src.begin(), src.end());
  m.mt_tokens.assign(mt.begin(), mt.end());
  m.mask_scores = scores;
  if (c.copynet) m.copy_map = build_copy_map(mt);

  std::optional<Tensor> s;
  if (scores) s = reshape(*scores, {mt.size()});

  if (c.interactive) {
    std::optional<Tensor> scale;
    if (s) {
      // [m; s] with m = 1 over the source columns.
      const Tensor parts[] = {Tensor::full({src.size()}, Real(1)), *s};
      scale = concat_rows(parts);
    }
    const Tensor h = encoder_(maybe_dropout(embed_joint(src, mt), ctx), c.mask_encoder ? scale : std::nullopt, ctx);
    m.cross.push_back(CrossMemory{h, c.mask_decoder ? scale : std::nullopt, {}});
    m.mt_states = slice_rows(h, src.size(), mt.size());
    m.mt_memory = 0;
    m.mt_column_offset = src.size();
  } else {
    const Tensor hs = encoder_(maybe_dropout(embed_sequence(src, -1, embed_), ctx), std::nullopt, ctx);
    const Tensor hm =
        encoder_mt_(maybe_dropout(embed_sequence(mt, -1, embed_), ctx), c.mask_encoder ? s : std::nullopt, ctx);
    CrossMemory src_mem{hs, std::nullopt, {}};
    CrossMemory mt_mem{hm, c.mask_decoder ? s : std::nullopt, {}};
    if (c.mt_first) {
      m.cross = {mt_mem, src_mem};
      m.mt_memory = 0;
    } else {
      m.cross = {src_mem, mt_mem};
      m.mt_memory = 1;
    }
    m.mt_states = hm;
    m.mt_column_offset = 0;
  }
  return m;
}

DecoderOutput ApeModel::decode(std::span<const int> prefix, const EncodedMemory& memory, const LayerContext& ctx,
                               DecodeRequest request) const {
  if (prefix.empty() || prefix.front() != Vocab::kBos) throw ContractError("decode: prefix must start with BOS");
  if (memory.cross.empty() || !memory.mt_states || memory.mt_states.rows() == 0) {
    throw ContractError("decode: empty memory");
  }
  const auto& c = config_;
  DecoderOutput out;
  const Tensor y = maybe_dropout(embed_sequence(prefix, -1, embed_), ctx);
  Tensor h = decoder_(y, memory.cross, ctx, request.keep_attention ? &out.cross_weights : nullptr);
  if (request.last_only) h = slice_rows(h, h.rows() - 1, 1);
  out.hidden = h;

  // Output projection tied to the token embedding.
  out.gen_probs = softmax(matmul_bt(h, embed_.token));
  if (!c.copynet) {
    out.probs = out.gen_probs;
    return out;
  }
  AttentionInputs pointer{copy_query_(h), copy_key_(memory.mt_states), memory.mt_states, {}, false, std::nullopt};
  if (c.mask_copynet && memory.mask_scores) pointer.scale_vector = memory.mask_scores;
  const AttentionResult att = scaled_dot_attention(pointer);
  out.copy_probs = att.weights;
  const Tensor gate_in[] = {h, att.output};
  out.gate = reshape(sigmoid(copy_gate_(concat_cols(gate_in))), {h.rows()});
  const Tensor copy_tokens = matmul(out.copy_probs, memory.copy_map);
  out.probs = add(mul_rows(copy_tokens, out.gate), mul_rows(out.gen_probs, affine(out.gate, Real(-1), Real(1))));
  return out;
}

ApeModel::Step ApeModel::decode_step(std::span<const int> prefix, const EncodedMemory& memory) const {
  const DecoderOutput out = decode(prefix, memory, inference_context(), {true, false});
  return {reshape(out.hidden, {config_.d}), reshape(out.probs, {config_.vocab_size})};
}

ForwardTrace ApeModel::forward_teacher_forced(const EncodedTriplet& example, const LayerContext& ctx,
                                              const std::optional<Tensor>& frozen_scores,
                                              bool keep_attention) const {
  if (example.labels.size() != example.mt.size()) {
    throw ContractError("forward_teacher_forced: " + std::to_string(example.labels.size()) + " labels for " +
                        std::to_string(example.mt.size()) + " mt tokens");
  }
  ForwardTrace trace;
  std::optional<Tensor> mask;
  if (config_.predictor) {
    trace.scores = predictor_forward(example.src, example.mt, ctx, &trace.predictor_states);
    mask = config_.joint_training ? *trace.scores : trace.scores->detach();
  }
  if (frozen_scores) mask = frozen_scores;
  trace.memory = encode(example.src, example.mt, mask, ctx);

  std::vector<int> prefix;
  prefix.reserve(example.pe.size() + 1);
  prefix.push_back(Vocab::kBos);
  prefix.insert(prefix.end(), example.pe.begin(), example.pe.end());
  trace.decoder = decode(prefix, trace.memory, ctx, {false, keep_attention});
  return trace;
}

Tensor copy_mass(const Tensor& gate, const Tensor& copy_probs, std::size_t steps) {
  if (!gate || !copy_probs) throw ContractError("copy_mass: the trace has no CopyNet outputs");
  if (steps > copy_probs.rows() || gate.numel() != copy_probs.rows()) {
    throw ShapeError("copy_mass: gate and copy distribution disagree on the step count");
  }
  const Tensor g = reshape(slice_rows(reshape(gate, {gate.numel(), 1}), 0, steps), {1, steps});
  const Tensor c = matmul(g, slice_rows(copy_probs, 0, steps));
  return reshape(c, {copy_probs.cols()});
}

Tensor copy_mass(const ForwardTrace& trace) {
  // The last row predicts EOS and is not a word step.
  const std::size_t steps = trace.decoder.probs.rows() - 1;
  return copy_mass(trace.decoder.gate, trace.decoder.copy_probs, steps);
}

ExampleLosses ApeModel::losses(const ForwardTrace& trace, const EncodedTriplet& example,
                               const LossWeights& weights) const {
  ExampleLosses out;
  std::vector<int> targets(example.pe.begin(), example.pe.end());
  targets.push_back(Vocab::kEos);
  const Tensor& probs = trace.decoder.probs;
  out.ape_sum = ape_nll_sum(probs, targets, static_cast<Real>(weights.prob_floor));
  out.target_tokens = targets.size();
  out.mt_tokens = example.mt.size();

  const auto p = probs.data();
  const std::size_t v = probs.cols();
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const auto row = p.subspan(j * v, v);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == targets[j]) ++out.correct_tokens;
  }

  if (config_.copynet && config_.joint_training) {
    out.copy_sum = copy_error_sum(copy_mass(trace), example.labels);
  }
  if (trace.scores) {
    out.pred_sum = loss_pred(*trace.scores, example.labels, static_cast<Real>(weights.score_eps));
    const auto s = trace.scores->data();
    for (std::size_t k = 0; k < s.size(); ++k) {
      if ((s[k] >= Real(0.5)) == (example.labels[k] != 0)) ++out.correct_predictions;
    }
  }
  return out;
}

std::vector<double> ApeModel::copy_scores(std::span<const int> src, std::span<const int> mt) const {
  NoGradGuard guard;
  const Tensor s = predictor_forward(src, mt, inference_context());
  return {s.data().begin(), s.data().end()};
}

}  // namespace L2COPY_PRECISION_NS
}  // namespace l2copy
