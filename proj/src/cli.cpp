#include "l2copy/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "l2copy/config.hpp"
#include "l2copy/data.hpp"
#include "l2copy/errors.hpp"
#include "l2copy/eval.hpp"
#include "l2copy/experiment.hpp"
#include "l2copy/labeling.hpp"
#include "l2copy/train.hpp"

namespace l2copy {

namespace {

/// Bad invocation: reported with exit code kExitUsage.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string profile = "test";
  std::string config_out;
};

void add_common(CLI::App& cmd, CommonOptions& o) {
  cmd.add_option("--config", o.config_path, "key=value configuration file")->check(CLI::ExistingFile);
  cmd.add_option("--set", o.overrides, "override one key, e.g. --set model.d=64 (repeatable)");
  cmd.add_option("--seed", o.seed, "shorthand for --set train.seed=N");
  cmd.add_option("--profile", o.profile, "base configuration")->check(CLI::IsMember({"test", "paper"}));
  cmd.add_option("--config-out", o.config_out, "also write the resolved configuration to this file");
}

/// Layers the config file, overrides and seed on top of `base`, validates the
/// result and logs it.
Config resolve_config(Config base, const CommonOptions& o, std::ostream& err) {
  if (!o.config_path.empty()) base.apply_file(o.config_path);
  for (const auto& assignment : o.overrides) base.apply_override(assignment);
  if (o.seed) base.train.seed = *o.seed;
  base.validate();
  const std::string text = base.to_text();
  err << "# resolved configuration\n" << text << std::flush;
  if (!o.config_out.empty()) write_text_atomic(o.config_out, text);
  return base;
}

Config resolve_config(const CommonOptions& o, std::ostream& err) {
  return resolve_config(profile_config(o.profile), o, err);
}

/// Decoding-time configuration: the checkpoint's, with everything except the
/// architecture open to overrides.
Config resolve_checkpoint_config(const Config& stored, const CommonOptions& o, std::ostream& err) {
  Config c = resolve_config(stored, o, err);
  for (const auto& key : Config::keys()) {
    if (key.rfind("model.", 0) == 0 && key != "model.dropout" && c.get(key) != stored.get(key)) {
      throw UsageError("'" + key + "' cannot differ from the checkpoint (" + stored.get(key) + ")");
    }
  }
  c.model.vocab_size = stored.model.vocab_size;
  return c;
}

LabelMode label_mode(const Config& c) {
  return c.data.union_labels ? LabelMode::union_of_alignments : LabelMode::single;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string format_fixed(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Tab-separated records with at least src and mt; pe and labels optional.
std::vector<Triplet> read_pairs(const std::string& path) {
  std::vector<Triplet> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t\r") == std::string::npos) continue;
    if (std::count(lines[i].begin(), lines[i].end(), '\t') >= 2) {
      std::istringstream one(lines[i] + "\n");
      try {
        out.push_back(parse_corpus(one).at(0));
      } catch (const ParseError& e) {
        throw ParseError(e.what(), i + 1);
      }
      continue;
    }
    const auto tab = lines[i].find('\t');
    if (tab == std::string::npos) throw ParseError("expected src and mt separated by a tab", i + 1);
    Triplet t;
    t.src = split_tokens(std::string_view(lines[i]).substr(0, tab));
    t.mt = split_tokens(std::string_view(lines[i]).substr(tab + 1));
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Tokens> read_token_lines(const std::string& path) {
  std::vector<Tokens> out;
  for (const auto& line : read_lines(path)) out.push_back(split_tokens(line));
  return out;
}

std::string join_lines(const std::vector<Tokens>& lines) {
  std::string out;
  for (const auto& l : lines) out += join_tokens(l) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// synth / import / label

struct SynthArgs {
  CommonOptions common;
  std::string out;
  SynthOptions synth;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  const Config config = resolve_config(a.common, err);
  SynthOptions opts = a.synth;
  if (a.common.seed) opts.seed = *a.common.seed;
  auto corpus = synth_corpus(opts).triplets;
  if (config.data.union_labels) label_corpus(corpus, LabelMode::union_of_alignments);
  write_corpus(a.out, corpus);
  out << "wrote " << corpus.size() << " triplets to " << a.out << "\n"
      << "copy_rate " << format_fixed(corpus_copy_rate(corpus), 4) << "\n";
  return kExitOk;
}

struct ImportArgs {
  CommonOptions common;
  std::string src, mt, pe, out, bpe_in, bpe_out;
};

int cmd_import(const ImportArgs& a, std::ostream& out, std::ostream& err) {
  const Config config = resolve_config(a.common, err);
  auto corpus = import_parallel(a.src, a.mt, a.pe);
  std::optional<BpeModel> bpe;
  if (!a.bpe_in.empty()) {
    bpe = BpeModel::from_text(read_text(a.bpe_in));
  } else if (config.data.bpe_merges > 0) {
    std::vector<std::string> lines;
    for (const auto& t : corpus) {
      for (const auto* seq : {&t.src, &t.mt, &t.pe}) lines.push_back(join_tokens(*seq));
    }
    bpe = bpe_learn(lines, config.data.bpe_merges);
    const std::string path = a.bpe_out.empty() ? a.out + ".bpe" : a.bpe_out;
    write_text_atomic(path, bpe->to_text());
    out << "learned " << bpe->merges.size() << " merges into " << path << "\n";
  }
  if (bpe) {
    for (auto& t : corpus) {
      t.src = bpe_apply(*bpe, join_tokens(t.src));
      t.mt = bpe_apply(*bpe, join_tokens(t.mt));
      t.pe = bpe_apply(*bpe, join_tokens(t.pe));
    }
  }
  write_corpus(a.out, corpus);
  out << "wrote " << corpus.size() << " triplets to " << a.out << "\n";
  return kExitOk;
}

struct LabelArgs {
  CommonOptions common;
  std::string in, out;
};

int cmd_label(const LabelArgs& a, std::ostream& out, std::ostream& err) {
  const Config config = resolve_config(a.common, err);
  auto corpus = read_corpus(a.in);
  label_corpus(corpus, label_mode(config));
  write_corpus(a.out, corpus);
  out << "labelled " << corpus.size() << " triplets, copy_rate " << format_fixed(corpus_copy_rate(corpus), 4)
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  CommonOptions common;
  std::string in, out, resume, log;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const auto corpus = read_corpus(a.in);
  Config config;
  Vocab vocab;
  std::unique_ptr<ApeModel> model;
  std::optional<TrainingState> state;
  if (!a.resume.empty()) {
    auto ckpt = load_checkpoint(a.resume);
    config = resolve_checkpoint_config(ckpt.config, a.common, err);
    vocab = std::move(ckpt.vocab);
    model = std::move(ckpt.model);
    state = std::move(ckpt.state);
    if (!state) throw UsageError("checkpoint " + a.resume + " has no optimizer state to resume from");
  } else {
    config = resolve_config(a.common, err);
    vocab = build_vocab(corpus, config.data.min_count);
    config.model.vocab_size = vocab.size();
    model = std::make_unique<ApeModel>(config.model, config.train.seed);
  }

  Trainer trainer(*model, config, encode_corpus(corpus, vocab, config.data));
  if (state) trainer.set_state(*state);
  std::string log_text = a.log.empty() || a.resume.empty() || !std::filesystem::exists(a.log) ? "" : read_text(a.log);
  const std::size_t interval = std::max<std::size_t>(config.train.log_interval, 1);
  trainer.train_until(config.train.steps, [&](const StepMetrics& m) {
    if (m.step % interval == 0 || m.step == config.train.steps) {
      const std::string line = m.to_json();
      err << line << "\n" << std::flush;
      if (!a.log.empty()) {
        log_text += line + "\n";
        write_text_atomic(a.log, log_text);
      }
    }
    if (config.train.checkpoint_interval > 0 && m.step % config.train.checkpoint_interval == 0) {
      save_checkpoint(a.out, config, vocab, *model, &trainer.state());
    }
  });
  save_checkpoint(a.out, config, vocab, *model, &trainer.state());
  out << "trained to step " << trainer.step() << ", checkpoint " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// decode

struct DecodeArgs {
  CommonOptions common;
  std::string model, in, out, scores_out, trace;
};

std::string trace_lines(const ApeModel& model, const Vocab& vocab, std::size_t sentence, const EncodedTriplet& ex) {
  NoGradGuard guard;
  const auto trace = model.forward_teacher_forced(ex, model.inference_context());
  const auto& dec = trace.decoder;
  const std::size_t rows = ex.pe.size() + 1;
  const std::size_t k = ex.mt.size();
  const std::size_t v = model.config().vocab_size;
  std::string out;
  for (std::size_t j = 0; j < rows; ++j) {
    const int token = j < ex.pe.size() ? ex.pe[j] : Vocab::kEos;
    out += std::to_string(sentence) + "\t" + std::to_string(j) + "\t" + vocab.token(token) + "\t" +
           format_number(dec.probs.data()[j * v + static_cast<std::size_t>(token)]);
    if (model.config().copynet) {
      out += "\t" + format_number(dec.gate.data()[j]) + "\t";
      for (std::size_t c = 0; c < k; ++c) {
        out += (c ? " " : "") + format_number(dec.copy_probs.data()[j * k + c]);
      }
    } else {
      out += "\t\t";
    }
    out += "\n";
  }
  return out;
}

int cmd_decode(const DecodeArgs& a, std::ostream& out, std::ostream& err) {
  auto ckpt = load_checkpoint(a.model);
  const Config config = resolve_checkpoint_config(ckpt.config, a.common, err);
  const auto pairs = read_pairs(a.in);
  const ApeModel& model = *ckpt.model;
  const auto hyps = decode_corpus(model, ckpt.vocab, pairs, config.decode);
  write_text_atomic(a.out, join_lines(hyps));

  if (!a.scores_out.empty()) {
    if (!model.config().predictor) throw UsageError("--scores-out needs a model with the predictor");
    std::string text;
    for (const auto& t : pairs) {
      const auto s = model.copy_scores(ckpt.vocab.encode(t.src), ckpt.vocab.encode(t.mt));
      for (std::size_t i = 0; i < s.size(); ++i) text += (i ? " " : "") + format_number(s[i]);
      text += "\n";
    }
    write_text_atomic(a.scores_out, text);
  }
  if (!a.trace.empty()) {
    std::string text = "sentence\tstep\ttoken\tprob\tgate\tcopy\n";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      EncodedTriplet ex;
      ex.src = ckpt.vocab.encode(pairs[i].src);
      ex.mt = ckpt.vocab.encode(pairs[i].mt);
      ex.pe = ckpt.vocab.encode(hyps[i]);
      ex.labels.assign(ex.mt.size(), 0);
      text += trace_lines(model, ckpt.vocab, i, ex);
    }
    write_text_atomic(a.trace, text);
  }
  out << "decoded " << hyps.size() << " sentences to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  CommonOptions common;
  std::string hyp, ref, mt, scores, corpus, out, json;
  bool bpe = false;
};

std::vector<std::vector<double>> read_scores(const std::string& path) {
  std::vector<std::vector<double>> out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    std::vector<double> row;
    for (const auto& tok : split_tokens(line)) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError("'" + tok + "' is not a number", line_no);
      }
    }
    out.push_back(std::move(row));
  }
  return out;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const Config config = resolve_config(a.common, err);
  const auto hyps = read_token_lines(a.hyp);
  std::vector<Tokens> refs, mts;
  std::vector<Labels> labels;
  if (!a.corpus.empty()) {
    for (const auto& t : read_corpus(a.corpus)) {
      refs.push_back(t.pe);
      mts.push_back(t.mt);
      labels.push_back(t.labels ? *t.labels : lcs_labels(t.mt, t.pe, label_mode(config)));
    }
  } else {
    if (a.ref.empty()) throw UsageError("eval needs --ref or --corpus");
    refs = read_token_lines(a.ref);
    if (!a.mt.empty()) {
      mts = read_token_lines(a.mt);
      if (mts.size() != refs.size()) throw UsageError("--mt and --ref differ in line count");
      for (std::size_t i = 0; i < mts.size(); ++i) labels.push_back(lcs_labels(mts[i], refs[i], label_mode(config)));
    }
  }
  if (hyps.size() != refs.size()) {
    throw UsageError("hypotheses (" + std::to_string(hyps.size()) + ") and references (" +
                     std::to_string(refs.size()) + ") differ in line count");
  }
  std::vector<std::vector<double>> scores;
  if (!a.scores.empty()) {
    if (labels.empty()) throw UsageError("--scores needs --mt or --corpus to derive copy labels");
    scores = read_scores(a.scores);
  }

  const EvalReport report = evaluate(hyps, refs, mts, scores, scores.empty() ? std::vector<Labels>{} : labels);
  std::string text = report.to_text();
  nlohmann::json record = nlohmann::json::parse(report.to_json());
  if (a.bpe) {
    auto words = [](const std::vector<Tokens>& lines) {
      std::vector<Tokens> joined;
      for (const auto& l : lines) joined.push_back(bpe_join(l));
      return joined;
    };
    const EvalReport word = evaluate(words(hyps), words(refs), words(mts));
    text = "subword level\n" + text + "\nword level\n" + word.to_text();
    record = {{"subword", record}, {"word", nlohmann::json::parse(word.to_json())}};
  }
  write_text_atomic(a.out, text);
  write_text_atomic(a.json.empty() ? a.out + ".json" : a.json, record.dump(2) + "\n");
  out << text;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ablate

struct AblateArgs {
  CommonOptions common;
  std::string in, eval, out, json;
  std::vector<int> rows;
  std::vector<std::string> switches;
};

AblationRow parse_switches(const std::string& s) {
  if (s.size() != 4 || s.find_first_not_of("01") != std::string::npos) {
    throw UsageError("--switches takes four 0/1 digits (interactive, predictor, copynet, joint), got '" + s + "'");
  }
  const int id = ablation_row_id(s[0] == '1', s[1] == '1', s[2] == '1', s[3] == '1');
  return ablation_grid()[static_cast<std::size_t>(id - 1)];
}

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  const Config base = resolve_config(a.common, err);
  std::vector<AblationRow> rows;
  for (int id : a.rows) {
    if (id < 1 || id > static_cast<int>(ablation_grid().size())) {
      throw UsageError("ablation row " + std::to_string(id) + " does not exist (rows are 1-7)");
    }
    rows.push_back(ablation_grid()[static_cast<std::size_t>(id - 1)]);
  }
  for (const auto& s : a.switches) rows.push_back(parse_switches(s));
  if (rows.empty()) rows = ablation_grid();

  const auto train = read_corpus(a.in);
  const auto test = a.eval.empty() ? train : read_corpus(a.eval);
  auto mark = [](bool on) { return on ? "yes" : "-"; };
  std::ostringstream table;
  table << "row\tinteractive\tpredictor\tcopynet\tjoint\tTER\tBLEU\n";
  nlohmann::json records = nlohmann::json::array();
  for (const auto& row : rows) {
    Config config = base;
    apply_ablation_row(config.model, row);
    config.validate();
    err << "ablation row " << row.id << ": training " << config.train.steps << " steps\n" << std::flush;
    const auto sys = train_system(config, train);
    const auto scores = score_system(*sys.model, sys.vocab, sys.config, test);
    table << row.id << "\t" << mark(row.interactive) << "\t" << mark(row.predictor) << "\t" << mark(row.copynet)
          << "\t" << mark(row.joint_training) << "\t" << format_fixed(scores.ter) << "\t"
          << format_fixed(scores.bleu) << "\n";
    records.push_back({{"row", row.id},
                       {"interactive", row.interactive},
                       {"predictor", row.predictor},
                       {"copynet", row.copynet},
                       {"joint_training", row.joint_training},
                       {"ter", scores.ter},
                       {"bleu", scores.bleu},
                       {"token_acc", scores.token_acc},
                       {"pred_acc", scores.pred_acc}});
  }
  if (!a.out.empty()) write_text_atomic(a.out, table.str());
  if (!a.json.empty()) write_text_atomic(a.json, records.dump(2) + "\n");
  out << table.str();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// heatmap

struct HeatmapArgs {
  CommonOptions common;
  std::string model, in, out_dir;
  std::size_t index = 0;
  std::vector<std::size_t> layers;
  bool debug = false;
};

std::string matrix_tsv(const Tokens& rows, const Tokens& cols, const std::vector<std::vector<double>>& m) {
  std::string out = "pe\\mt";
  for (const auto& c : cols) out += "\t" + c;
  out += "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += rows[r];
    for (double v : m[r]) out += "\t" + format_number(v);
    out += "\n";
  }
  return out;
}

int cmd_heatmap(const HeatmapArgs& a, std::ostream& out, std::ostream& err) {
  auto ckpt = load_checkpoint(a.model);
  const Config config = resolve_checkpoint_config(ckpt.config, a.common, err);
  const ApeModel& model = *ckpt.model;
  const std::size_t n_layers = model.config().decoder_layers;
  std::vector<std::size_t> layers = a.layers;
  if (layers.empty()) {
    for (std::size_t l = 0; l < n_layers; ++l) layers.push_back(l);
  }
  for (auto l : layers) {
    if (l >= n_layers) {
      throw UsageError("decoder layer " + std::to_string(l) + " out of range (the model has " +
                       std::to_string(n_layers) + " layers, numbered from 0)");
    }
  }
  const auto pairs = read_pairs(a.in);
  if (a.index >= pairs.size()) {
    throw UsageError("--index " + std::to_string(a.index) + " out of range (" + std::to_string(pairs.size()) +
                     " records)");
  }
  Triplet t = pairs[a.index];
  if (t.pe.empty()) t.pe = decode_corpus(model, ckpt.vocab, {t}, config.decode).front();

  EncodedTriplet ex;
  ex.src = ckpt.vocab.encode(t.src);
  ex.mt = ckpt.vocab.encode(t.mt);
  ex.pe = ckpt.vocab.encode(t.pe);
  ex.labels.assign(ex.mt.size(), 0);
  NoGradGuard guard;
  const auto trace = model.forward_teacher_forced(ex, model.inference_context(), std::nullopt, true);
  const auto& mem = trace.memory;
  const std::size_t rows = ex.pe.size();
  const std::size_t k = ex.mt.size();

  std::filesystem::create_directories(a.out_dir);
  const std::filesystem::path dir(a.out_dir);
  for (auto l : layers) {
    const auto& heads = trace.decoder.cross_weights.at(l).at(mem.mt_memory);
    std::vector<std::vector<double>> mean(rows, std::vector<double>(k, 0.0));
    for (std::size_t h = 0; h < heads.size(); ++h) {
      const Tensor& w = heads[h];
      const std::size_t width = w.shape()[1];
      std::vector<std::vector<double>> head(rows, std::vector<double>(k, 0.0));
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < k; ++c) {
          head[r][c] = w.data()[r * width + mem.mt_column_offset + c];
          mean[r][c] += head[r][c] / static_cast<double>(heads.size());
        }
      }
      if (a.debug) {
        const auto name = "attention.layer" + std::to_string(l) + ".head" + std::to_string(h) + ".tsv";
        write_text_atomic((dir / name).string(), matrix_tsv(t.pe, t.mt, head));
      }
    }
    const auto name = "attention.layer" + std::to_string(l) + ".tsv";
    write_text_atomic((dir / name).string(), matrix_tsv(t.pe, t.mt, mean));
  }
  if (trace.scores) {
    std::string text = "mt\ts\n";
    for (std::size_t c = 0; c < k; ++c) text += t.mt[c] + "\t" + format_number(trace.scores->data()[c]) + "\n";
    write_text_atomic((dir / "scores.tsv").string(), text);
  } else {
    err << "model has no predictor; scores.tsv not written\n";
  }
  out << "wrote heatmaps for " << layers.size() << " layer(s) to " << a.out_dir << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learning-to-copy automatic post-editing", "l2copy"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic labelled corpus");
  add_common(*c_synth, synth.common);
  c_synth->add_option("--out", synth.out, "output corpus")->required();
  c_synth->add_option("--n", synth.synth.n, "number of triplets");
  c_synth->add_option("--vocab", synth.synth.vocab_size, "target vocabulary size");
  c_synth->add_option("--min-len", synth.synth.min_len);
  c_synth->add_option("--max-len", synth.synth.max_len);
  c_synth->add_option("--sub", synth.synth.noise.sub_rate, "substitution rate");
  c_synth->add_option("--del", synth.synth.noise.del_rate, "deletion rate");
  c_synth->add_option("--ins", synth.synth.noise.ins_rate, "insertion rate");

  ImportArgs imp;
  auto* c_import = app.add_subcommand("import", "convert three parallel files into a corpus");
  add_common(*c_import, imp.common);
  c_import->add_option("--src", imp.src)->required()->check(CLI::ExistingFile);
  c_import->add_option("--mt", imp.mt)->required()->check(CLI::ExistingFile);
  c_import->add_option("--pe", imp.pe)->required()->check(CLI::ExistingFile);
  c_import->add_option("--out", imp.out)->required();
  c_import->add_option("--bpe-model", imp.bpe_in, "apply an existing BPE model")->check(CLI::ExistingFile);
  c_import->add_option("--bpe-out", imp.bpe_out, "where to write merges learned with data.bpe_merges");

  LabelArgs lab;
  auto* c_label = app.add_subcommand("label", "add LCS copy labels to a corpus");
  add_common(*c_label, lab.common);
  c_label->add_option("--in", lab.in)->required()->check(CLI::ExistingFile);
  c_label->add_option("--out", lab.out)->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(*c_train, tr.common);
  c_train->add_option("--in", tr.in, "training corpus")->required()->check(CLI::ExistingFile);
  c_train->add_option("--out", tr.out, "checkpoint path")->required();
  c_train->add_option("--resume", tr.resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  c_train->add_option("--log", tr.log, "JSON lines of training metrics");

  DecodeArgs dec;
  auto* c_decode = app.add_subcommand("decode", "post-edit src/mt pairs with beam search");
  add_common(*c_decode, dec.common);
  c_decode->add_option("--model", dec.model)->required()->check(CLI::ExistingFile);
  c_decode->add_option("--in", dec.in, "tab-separated src and mt (extra fields ignored)")
      ->required()
      ->check(CLI::ExistingFile);
  c_decode->add_option("--out", dec.out, "hypotheses, one per line")->required();
  c_decode->add_option("--scores-out", dec.scores_out, "predictor copy scores, one line per sentence");
  c_decode->add_option("--trace", dec.trace, "per-step gate and copy distribution");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "score hypotheses");
  add_common(*c_eval, ev.common);
  c_eval->add_option("--hyp", ev.hyp)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--ref", ev.ref)->check(CLI::ExistingFile);
  c_eval->add_option("--mt", ev.mt)->check(CLI::ExistingFile);
  c_eval->add_option("--scores", ev.scores)->check(CLI::ExistingFile);
  c_eval->add_option("--corpus", ev.corpus, "take references, mt and labels from a corpus")
      ->check(CLI::ExistingFile)
      ->excludes("--ref")
      ->excludes("--mt");
  c_eval->add_option("--out", ev.out, "text report")->required();
  c_eval->add_option("--json", ev.json, "JSON report (default: <out>.json)");
  c_eval->add_flag("--bpe", ev.bpe, "tokens are BPE subwords; also report word-level scores");

  AblateArgs abl;
  auto* c_ablate = app.add_subcommand("ablate", "train and score the ablation grid");
  add_common(*c_ablate, abl.common);
  c_ablate->add_option("--in", abl.in, "training corpus")->required()->check(CLI::ExistingFile);
  c_ablate->add_option("--eval", abl.eval, "evaluation corpus (default: the training corpus)")
      ->check(CLI::ExistingFile);
  c_ablate->add_option("--out", abl.out, "table file");
  c_ablate->add_option("--json", abl.json);
  c_ablate->add_option("--rows", abl.rows, "row ids 1-7 (default: all)")->delimiter(',');
  c_ablate->add_option("--switches", abl.switches, "a row by its switches, e.g. 1111 (repeatable)");

  HeatmapArgs hm;
  auto* c_heatmap = app.add_subcommand("heatmap", "export decoder attention over mt and the copy scores");
  add_common(*c_heatmap, hm.common);
  c_heatmap->add_option("--model", hm.model)->required()->check(CLI::ExistingFile);
  c_heatmap->add_option("--in", hm.in, "corpus or src/mt pairs")->required()->check(CLI::ExistingFile);
  c_heatmap->add_option("--index", hm.index, "record to export (from 0)");
  c_heatmap->add_option("--layer", hm.layers, "decoder layer from 0 (repeatable; default all)");
  c_heatmap->add_option("--out", hm.out_dir, "output directory")->required();
  c_heatmap->add_flag("--debug", hm.debug, "also write one matrix per head");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_synth->parsed()) return cmd_synth(synth, out, err);
    if (c_import->parsed()) return cmd_import(imp, out, err);
    if (c_label->parsed()) return cmd_label(lab, out, err);
    if (c_train->parsed()) return cmd_train(tr, out, err);
    if (c_decode->parsed()) return cmd_decode(dec, out, err);
    if (c_eval->parsed()) return cmd_eval(ev, out, err);
    if (c_ablate->parsed()) return cmd_ablate(abl, out, err);
    if (c_heatmap->parsed()) return cmd_heatmap(hm, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace l2copy
