#include "l2copy/train.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace l2copy {
inline namespace L2COPY_PRECISION_NS {

double lr_schedule(std::size_t step, std::size_t d, std::size_t warmup) {
  if (step == 0) throw ContractError("lr_schedule: steps are counted from 1");
  if (d == 0 || warmup == 0) throw ContractError("lr_schedule: d and warmup must be positive");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return std::pow(static_cast<double>(d), -0.5) * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

void adam_step(ParamStore& params, AdamState& state, double rate) {
  for (auto& [name, p] : params.all()) {
    for (Real g : p.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("non-finite gradient in parameter '" + name + "' at step " +
                           std::to_string(state.step + 1));
      }
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const Real b1 = static_cast<Real>(state.beta1);
  const Real b2 = static_cast<Real>(state.beta2);
  for (auto& [name, p] : params.all()) {
    const std::size_t n = p.numel();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != n) m.assign(n, Real(0));
    if (v.size() != n) v.assign(n, Real(0));
    const auto g = p.grad();
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      const Real gi = g.empty() ? Real(0) : g[i];
      m[i] = b1 * m[i] + (Real(1) - b1) * gi;
      v[i] = b2 * v[i] + (Real(1) - b2) * gi * gi;
      const double m_hat = static_cast<double>(m[i]) / correction1;
      const double v_hat = static_cast<double>(v[i]) / correction2;
      w[i] = static_cast<Real>(static_cast<double>(w[i]) - rate * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
  }
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  double total = 0;
  for (const auto& [_, p] : params.all()) {
    for (Real g : p.grad()) total += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(total);
  if (max_norm > 0 && norm > max_norm) {
    const Real factor = static_cast<Real>(max_norm / norm);
    for (auto& [_, p] : params.all()) {
      if (p.grad().empty()) continue;
      for (Real& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

std::string StepMetrics::to_json() const {
  nlohmann::json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["examples"] = examples;
  j["l_ape"] = l_ape;
  j["l_copy"] = l_copy;
  j["l_pred"] = l_pred;
  j["l_all"] = l_all;
  j["pred_acc"] = pred_acc;
  j["token_acc"] = token_acc;
  j["lr"] = lr;
  j["grad_norm"] = grad_norm;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

void validate_corpus(const std::vector<EncodedTriplet>& corpus, std::size_t vocab_size) {
  if (corpus.empty()) throw ConfigError("training corpus is empty");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& e = corpus[i];
    if (e.src.empty() || e.mt.empty() || e.pe.empty()) {
      throw ContractError("training example " + std::to_string(i + 1) + " has an empty sequence");
    }
    if (e.labels.size() != e.mt.size()) {
      throw ContractError("training example " + std::to_string(i + 1) + " has mismatched labels");
    }
    for (const auto* seq : {&e.src, &e.mt, &e.pe}) {
      for (int id : *seq) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
          throw ConfigError("training example " + std::to_string(i + 1) + " uses token id " + std::to_string(id) +
                            " outside the model vocabulary of " + std::to_string(vocab_size));
        }
      }
    }
  }
}

double combine(double ape, double copy, double pred, const LossWeights& w, bool copy_on, bool pred_on) {
  const double edit = ape + (copy_on ? w.lambda * copy : 0.0);
  return (1.0 - w.alpha) * edit + (pred_on ? w.alpha * pred : 0.0);
}

}  // namespace

Trainer::Trainer(ApeModel& model, const Config& config, std::vector<EncodedTriplet> corpus)
    : model_(model), config_(config), corpus_(std::move(corpus)) {
  config_.validate();
  validate_corpus(corpus_, model_.config().vocab_size);
  state_.adam.beta1 = config_.train.beta1;
  state_.adam.beta2 = config_.train.beta2;
  state_.adam.epsilon = config_.train.epsilon;
}

void Trainer::set_state(TrainingState state) {
  state_ = std::move(state);
  batches_epoch_ = static_cast<std::size_t>(-1);
}

void Trainer::ensure_batches() {
  if (batches_epoch_ != state_.epoch) {
    batches_ = batch_iter(corpus_, config_.train.token_budget, config_.train.seed, state_.epoch);
    batches_epoch_ = state_.epoch;
  }
  if (state_.batch >= batches_.size()) {
    ++state_.epoch;
    state_.batch = 0;
    batches_ = batch_iter(corpus_, config_.train.token_budget, config_.train.seed, state_.epoch);
    batches_epoch_ = state_.epoch;
  }
}

StepMetrics Trainer::train_step() {
  ensure_batches();
  const Batch& batch = batches_[state_.batch];
  const std::size_t step_no = state_.adam.step + 1;
  const auto& mc = model_.config();
  const auto& w = config_.loss;
  const bool copy_on = mc.copynet && mc.joint_training;
  const bool pred_on = mc.predictor;

  std::size_t targets = 0, mt_tokens = 0;
  for (auto i : batch.indices) {
    targets += corpus_[i].pe.size() + 1;
    mt_tokens += corpus_[i].mt.size();
  }
  const Real inv_targets = Real(1) / static_cast<Real>(targets);
  const Real inv_mt = Real(1) / static_cast<Real>(mt_tokens);

  std::seed_seq seq{static_cast<std::uint32_t>(config_.train.seed), static_cast<std::uint32_t>(config_.train.seed >> 32),
                    static_cast<std::uint32_t>(step_no), static_cast<std::uint32_t>(step_no >> 32)};
  std::mt19937_64 rng(seq);
  const LayerContext ctx = model_.training_context(&rng);

  model_.params().zero_grad();
  double ape = 0, copy = 0, pred = 0;
  std::size_t correct_tokens = 0, correct_predictions = 0;
  for (auto i : batch.indices) {
    const auto& example = corpus_[i];
    const ForwardTrace trace = model_.forward_teacher_forced(example, ctx);
    const ExampleLosses l = model_.losses(trace, example, w);
    const Tensor l_ape = scale(l.ape_sum, inv_targets);
    const Tensor l_copy = l.copy_sum ? scale(l.copy_sum, inv_mt) : Tensor();
    const Tensor l_pred = l.pred_sum ? scale(l.pred_sum, inv_mt) : Tensor();
    loss_all(l_ape, l_copy, l_pred, w, {copy_on, pred_on}).backward();
    ape += static_cast<double>(l_ape.item());
    if (l_copy) copy += static_cast<double>(l_copy.item());
    if (l_pred) pred += static_cast<double>(l_pred.item());
    correct_tokens += l.correct_tokens;
    correct_predictions += l.correct_predictions;
  }

  StepMetrics m;
  m.step = step_no;
  m.epoch = state_.epoch;
  m.examples = batch.indices.size();
  m.l_ape = ape;
  m.l_copy = copy;
  m.l_pred = pred;
  m.l_all = combine(ape, copy, pred, w, copy_on, pred_on);
  m.token_acc = 100.0 * static_cast<double>(correct_tokens) / static_cast<double>(targets);
  m.pred_acc = pred_on ? 100.0 * static_cast<double>(correct_predictions) / static_cast<double>(mt_tokens) : 0.0;
  m.grad_norm = clip_grad_norm(model_.params(), config_.train.clip_norm);
  m.lr = config_.train.lr_scale * lr_schedule(step_no, mc.d, config_.train.warmup);
  adam_step(model_.params(), state_.adam, m.lr);
  ++state_.batch;
  return m;
}

void Trainer::train_until(std::size_t until_step, const std::function<void(const StepMetrics&)>& on_step) {
  while (state_.adam.step < until_step) {
    const StepMetrics m = train_step();
    if (on_step) on_step(m);
  }
}

TeacherForcedStats evaluate_teacher_forced(const ApeModel& model, const std::vector<EncodedTriplet>& corpus,
                                           const LossWeights& weights) {
  NoGradGuard guard;
  const LayerContext ctx = model.inference_context();
  TeacherForcedStats s;
  std::size_t correct_tokens = 0, correct_predictions = 0;
  for (const auto& example : corpus) {
    const ForwardTrace trace = model.forward_teacher_forced(example, ctx);
    const ExampleLosses l = model.losses(trace, example, weights);
    s.l_ape += static_cast<double>(l.ape_sum.item());
    if (l.copy_sum) s.l_copy += static_cast<double>(l.copy_sum.item());
    if (l.pred_sum) s.l_pred += static_cast<double>(l.pred_sum.item());
    s.target_tokens += l.target_tokens;
    s.mt_tokens += l.mt_tokens;
    correct_tokens += l.correct_tokens;
    correct_predictions += l.correct_predictions;
  }
  if (s.target_tokens) {
    s.l_ape /= static_cast<double>(s.target_tokens);
    s.token_acc = 100.0 * static_cast<double>(correct_tokens) / static_cast<double>(s.target_tokens);
  }
  if (s.mt_tokens) {
    s.l_copy /= static_cast<double>(s.mt_tokens);
    s.l_pred /= static_cast<double>(s.mt_tokens);
    if (model.config().predictor) {
      s.pred_acc = 100.0 * static_cast<double>(correct_predictions) / static_cast<double>(s.mt_tokens);
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kMagic = "l2copy-checkpoint 1";

std::uint32_t to_little(std::uint32_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((x & 0xffu) << 24) | ((x & 0xff00u) << 8) | ((x >> 8) & 0xff00u) | (x >> 24);
  }
  return x;
}

void append_floats(std::string& payload, std::span<const Real> values) {
  for (Real v : values) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    bits = to_little(bits);
    payload.append(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

struct TensorEntry {
  Shape shape;
  std::size_t offset = 0;
  std::size_t count = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const Config& config, const Vocab& vocab, const ApeModel& model,
                     const TrainingState* state) {
  if (vocab.size() != model.config().vocab_size) {
    throw ConfigError("checkpoint vocabulary (" + std::to_string(vocab.size()) + ") does not match the model (" +
                      std::to_string(model.config().vocab_size) + ")");
  }
  Config stored = config;
  stored.model = model.config();
  const std::string config_text = stored.to_text();
  const std::string vocab_text = vocab.to_text();

  std::ostringstream manifest;
  manifest << kMagic << "\n";
  manifest << "config " << config_text.size() << "\n" << config_text;
  manifest << "vocab " << vocab_text.size() << "\n" << vocab_text;
  if (state) {
    manifest << "state " << state->adam.step << " " << state->epoch << " " << state->batch << " "
             << format_double(state->adam.beta1) << " " << format_double(state->adam.beta2) << " "
             << format_double(state->adam.epsilon) << "\n";
  }

  std::string payload;
  std::size_t offset = 0;
  auto add_tensor = [&](const std::string& name, const Shape& shape, std::span<const Real> values) {
    manifest << "tensor " << name << " " << shape.size();
    for (auto dim : shape) manifest << " " << dim;
    manifest << " " << offset << " " << values.size() << "\n";
    append_floats(payload, values);
    offset += values.size();
  };
  for (const auto& [name, p] : model.params().all()) add_tensor("param/" + name, p.shape(), p.data());
  if (state) {
    for (const auto& [name, p] : model.params().all()) {
      const auto m = state->adam.m.find(name);
      const auto v = state->adam.v.find(name);
      const std::vector<Real> zeros(p.numel(), Real(0));
      add_tensor("adam.m/" + name, p.shape(), m == state->adam.m.end() ? std::span<const Real>(zeros) : m->second);
      add_tensor("adam.v/" + name, p.shape(), v == state->adam.v.end() ? std::span<const Real>(zeros) : v->second);
    }
  }
  manifest << "end\n";
  write_text_atomic(path, manifest.str() + payload);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string bytes = read_text(path);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string {
    const auto end = bytes.find('\n', pos);
    if (end == std::string::npos) throw ParseError("truncated checkpoint manifest", line_no + 1);
    std::string line = bytes.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    return line;
  };
  auto take_block = [&](std::size_t n) -> std::string {
    if (pos + n > bytes.size()) throw ParseError("truncated checkpoint block", line_no);
    std::string block = bytes.substr(pos, n);
    pos += n;
    line_no += static_cast<std::size_t>(std::count(block.begin(), block.end(), '\n'));
    return block;
  };

  if (next_line() != kMagic) throw ParseError("not an l2copy checkpoint: " + path, 1);

  Checkpoint ckpt;
  std::map<std::string, TensorEntry> tensors;
  while (true) {
    const std::string line = next_line();
    std::istringstream in(line);
    std::string kind;
    in >> kind;
    if (kind == "end") break;
    if (kind == "config" || kind == "vocab") {
      std::size_t n = 0;
      if (!(in >> n)) throw ParseError("missing block size", line_no);
      const std::string block = take_block(n);
      if (kind == "config") {
        ckpt.config.apply_text(block);
      } else {
        ckpt.vocab = Vocab::from_text(block);
      }
    } else if (kind == "state") {
      TrainingState s;
      if (!(in >> s.adam.step >> s.epoch >> s.batch >> s.adam.beta1 >> s.adam.beta2 >> s.adam.epsilon)) {
        throw ParseError("malformed state line", line_no);
      }
      ckpt.state = std::move(s);
    } else if (kind == "tensor") {
      std::string name;
      std::size_t rank = 0;
      TensorEntry e;
      if (!(in >> name >> rank)) throw ParseError("malformed tensor line", line_no);
      e.shape.resize(rank);
      for (auto& dim : e.shape) {
        if (!(in >> dim)) throw ParseError("malformed tensor shape", line_no);
      }
      if (!(in >> e.offset >> e.count) || e.count != shape_numel(e.shape)) {
        throw ParseError("malformed tensor extent for " + name, line_no);
      }
      tensors[name] = std::move(e);
    } else {
      throw ParseError("unknown manifest entry '" + kind + "'", line_no);
    }
  }

  const std::string_view payload(bytes.data() + pos, bytes.size() - pos);
  auto read_values = [&](const std::string& name, const Shape& expected) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("checkpoint lacks tensor " + name);
    if (it->second.shape != expected) throw ConfigError("checkpoint tensor " + name + " has the wrong shape");
    const std::size_t begin = it->second.offset * 4, n = it->second.count;
    if (begin + n * 4 > payload.size()) throw ParseError("checkpoint payload is truncated at " + name, 0);
    std::vector<Real> values(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, payload.data() + begin + 4 * i, sizeof bits);
      bits = to_little(bits);
      float f;
      std::memcpy(&f, &bits, sizeof f);
      values[i] = static_cast<Real>(f);
    }
    return values;
  };

  ModelConfig mc = ckpt.config.model;
  mc.vocab_size = ckpt.vocab.size();
  ckpt.config.model = mc;
  ckpt.model = std::make_unique<ApeModel>(mc, ckpt.config.train.seed);
  std::size_t expected = 0;
  for (auto& [name, p] : ckpt.model->params().all()) {
    const auto values = read_values("param/" + name, p.shape());
    std::copy(values.begin(), values.end(), p.mutable_data().begin());
    ++expected;
    if (ckpt.state) {
      ckpt.state->adam.m[name] = read_values("adam.m/" + name, p.shape());
      ckpt.state->adam.v[name] = read_values("adam.v/" + name, p.shape());
      expected += 2;
    }
  }
  if (expected != tensors.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, the model expects " +
                      std::to_string(expected));
  }
  return ckpt;
}

}  // namespace L2COPY_PRECISION_NS
}  // namespace l2copy
