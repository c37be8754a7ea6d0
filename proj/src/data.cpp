#include "l2copy/data.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "l2copy/errors.hpp"
#include "l2copy/labeling.hpp"

namespace l2copy {

Tokens split_tokens(std::string_view line) {
  Tokens out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && line[pos] == ' ') ++pos;
    const std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ') ++pos;
    if (pos > start) out.emplace_back(line.substr(start, pos - start));
  }
  return out;
}

std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    const auto tab = line.find('\t', pos);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(pos));
      return fields;
    }
    fields.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
}

Labels parse_labels(std::string_view field, std::size_t expected, std::size_t line_no) {
  Labels labels;
  for (const auto& tok : split_tokens(field)) {
    if (tok == "0") {
      labels.push_back(0);
    } else if (tok == "1") {
      labels.push_back(1);
    } else {
      throw ParseError("label '" + tok + "' is not 0 or 1", line_no);
    }
  }
  if (labels.size() != expected) {
    throw ParseError("expected " + std::to_string(expected) + " labels for " + std::to_string(expected) +
                         " mt tokens, found " + std::to_string(labels.size()),
                     line_no);
  }
  return labels;
}

}  // namespace

std::vector<Triplet> parse_corpus(std::istream& in) {
  std::vector<Triplet> corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() < 3) {
      throw ParseError("expected src, mt and pe fields separated by tabs, found " + std::to_string(fields.size()) +
                           " field(s); the pe field is missing",
                       line_no);
    }
    if (fields.size() > 4) throw ParseError("too many fields (" + std::to_string(fields.size()) + ")", line_no);
    Triplet t{split_tokens(fields[0]), split_tokens(fields[1]), split_tokens(fields[2]), std::nullopt};
    if (fields.size() == 4) t.labels = parse_labels(fields[3], t.mt.size(), line_no);
    corpus.push_back(std::move(t));
  }
  return corpus;
}

std::vector<Triplet> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  return parse_corpus(in);
}

void format_corpus(std::ostream& out, const std::vector<Triplet>& corpus) {
  for (const auto& t : corpus) {
    out << join_tokens(t.src) << '\t' << join_tokens(t.mt) << '\t' << join_tokens(t.pe);
    if (t.labels) {
      out << '\t';
      for (std::size_t i = 0; i < t.labels->size(); ++i) out << (i ? " " : "") << int((*t.labels)[i]);
    }
    out << '\n';
  }
}

void write_corpus(const std::string& path, const std::vector<Triplet>& corpus) {
  std::ostringstream out;
  format_corpus(out, corpus);
  write_text_atomic(path, out.str());
}

std::vector<Triplet> import_parallel(const std::string& src_path, const std::string& mt_path,
                                     const std::string& pe_path) {
  const auto src = read_lines(src_path);
  const auto mt = read_lines(mt_path);
  const auto pe = read_lines(pe_path);
  if (src.size() != mt.size() || src.size() != pe.size()) {
    throw ContractError("parallel files differ in line count: src " + std::to_string(src.size()) + ", mt " +
                        std::to_string(mt.size()) + ", pe " + std::to_string(pe.size()));
  }
  std::vector<Triplet> corpus;
  corpus.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (const auto* field : {&src[i], &mt[i], &pe[i]}) {
      if (field->find('\t') != std::string::npos) throw ParseError("tab inside a sentence", i + 1);
    }
    corpus.push_back({split_tokens(src[i]), split_tokens(mt[i]), split_tokens(pe[i]), std::nullopt});
  }
  return corpus;
}

void write_text_atomic(const std::string& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& tokens) {
  tokens_ = {"<pad>", "<s>", "</s>", "<unk>"};
  for (const auto& t : tokens) {
    if (t.empty() || t.find_first_of(" \t\n") != std::string::npos) {
      throw ConfigError("vocabulary token must be non-empty and contain no whitespace: '" + t + "'");
    }
    tokens_.push_back(t);
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw ConfigError("duplicate vocabulary token: '" + tokens_[i] + "'");
    }
  }
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const Tokens& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocab::decode(const std::vector<int>& ids) const {
  Tokens out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    out.push_back(token(id));
  }
  return out;
}

std::string Vocab::to_text() const {
  std::string out;
  for (std::size_t i = kReserved; i < tokens_.size(); ++i) out += tokens_[i] + "\n";
  return out;
}

Vocab Vocab::from_text(std::string_view text) {
  std::vector<std::string> tokens;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return Vocab(tokens);
}

Vocab build_vocab(const std::vector<Triplet>& corpus, std::size_t min_count) {
  if (corpus.empty()) throw ContractError("build_vocab: empty corpus");
  const Vocab reserved;
  std::map<std::string, std::size_t> counts;
  for (const auto& t : corpus) {
    for (const Tokens* seq : {&t.src, &t.mt, &t.pe}) {
      for (const auto& tok : *seq) {
        if (!reserved.contains(tok)) ++counts[tok];
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> entries(counts.begin(), counts.end());
  // counts is lexically ordered already, so a stable sort keeps lexical ties.
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  for (const auto& [tok, n] : entries) {
    if (n >= min_count) tokens.push_back(tok);
  }
  return Vocab(tokens);
}

EncodedTriplet encode_triplet(const Triplet& t, const Vocab& vocab) {
  EncodedTriplet e{vocab.encode(t.src), vocab.encode(t.mt), vocab.encode(t.pe), {}};
  e.labels = t.labels ? *t.labels : lcs_labels(t.mt, t.pe);
  return e;
}

// ---------------------------------------------------------------------------
// Batching

std::size_t example_cost(const EncodedTriplet& t) {
  return std::max(t.src.size() + t.mt.size(), t.pe.size() + 1);
}

namespace {

std::vector<int> padded(const std::vector<int>& ids, std::size_t width) {
  std::vector<int> row(ids);
  row.resize(std::max(width, ids.size()), Vocab::kPad);
  return row;
}

void fill_padded_rows(Batch& batch, const std::vector<EncodedTriplet>& corpus) {
  std::size_t src_w = 0, mt_w = 0, pe_w = 0;
  for (auto i : batch.indices) {
    src_w = std::max(src_w, corpus[i].src.size());
    mt_w = std::max(mt_w, corpus[i].mt.size());
    pe_w = std::max(pe_w, corpus[i].pe.size());
  }
  for (auto i : batch.indices) {
    batch.src.push_back(padded(corpus[i].src, src_w));
    batch.mt.push_back(padded(corpus[i].mt, mt_w));
    batch.pe.push_back(padded(corpus[i].pe, pe_w));
  }
}

}  // namespace

std::vector<Batch> batch_iter(const std::vector<EncodedTriplet>& corpus, std::size_t token_budget,
                              std::uint64_t seed, std::size_t epoch) {
  if (corpus.empty()) throw ContractError("batch_iter: empty corpus");
  if (token_budget == 0) throw ConfigError("batch_iter: token budget must be positive");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0xba7c4u};
  std::mt19937_64 rng(seq);

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  // Sort within pools so that batches hold similar lengths while keeping
  // some randomness across the epoch.
  constexpr std::size_t kPool = 512;
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += kPool) {
    const auto end = std::min(order.size(), start + kPool);
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return example_cost(corpus[a]) < example_cost(corpus[b]); });
    Batch current;
    for (std::size_t k = start; k < end; ++k) {
      const std::size_t idx = order[k];
      const std::size_t cost = example_cost(corpus[idx]);
      if (cost > token_budget) {
        throw ConfigError("example " + std::to_string(idx) + " costs " + std::to_string(cost) +
                          " tokens, above the batch budget of " + std::to_string(token_budget));
      }
      const std::size_t width = std::max(current.padded_length, cost);
      if (!current.indices.empty() && width * (current.indices.size() + 1) > token_budget) {
        batches.push_back(std::move(current));
        current = Batch{};
      }
      current.indices.push_back(idx);
      current.padded_length = std::max(current.padded_length, cost);
    }
    if (!current.indices.empty()) batches.push_back(std::move(current));
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  for (auto& b : batches) fill_padded_rows(b, corpus);
  return batches;
}

// ---------------------------------------------------------------------------
// BPE

std::string BpeModel::to_text() const {
  std::string out = "#l2copy-bpe 1\n";
  for (const auto& [a, b] : merges) out += a + " " + b + "\n";
  return out;
}

BpeModel BpeModel::from_text(std::string_view text) {
  BpeModel model;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto parts = split_tokens(line);
    if (parts.size() != 2) throw ParseError("expected two symbols per merge", line_no);
    model.merges.emplace_back(parts[0], parts[1]);
  }
  return model;
}

Tokens bpe_characters(std::string_view word) {
  Tokens chars;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto lead = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = 3;
    } else if (lead >= 0xC0) {
      len = 2;
    }
    len = std::min(len, word.size() - i);
    chars.emplace_back(word.substr(i, len));
    i += len;
  }
  if (!chars.empty()) chars.back() += kEndOfWord;
  return chars;
}

namespace {

void merge_in_place(Tokens& symbols, const std::string& a, const std::string& b) {
  Tokens out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
      out.push_back(a + b);
      ++i;
    } else {
      out.push_back(symbols[i]);
    }
  }
  symbols = std::move(out);
}

}  // namespace

BpeModel bpe_learn(const std::vector<std::string>& lines, std::size_t merges) {
  std::map<std::string, std::size_t> word_counts;
  for (const auto& line : lines) {
    for (const auto& w : split_tokens(line)) ++word_counts[w];
  }
  std::vector<std::pair<Tokens, std::size_t>> words;
  for (const auto& [w, n] : word_counts) words.emplace_back(bpe_characters(w), n);

  BpeModel model;
  for (std::size_t m = 0; m < merges; ++m) {
    std::map<std::pair<std::string, std::string>, std::size_t> pairs;
    for (const auto& [symbols, n] : words) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) pairs[{symbols[i], symbols[i + 1]}] += n;
    }
    if (pairs.empty()) break;
    // The map is ordered, so the first maximum is the lexically smallest pair.
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto [a, b] = best->first;
    model.merges.emplace_back(a, b);
    for (auto& entry : words) merge_in_place(entry.first, a, b);
  }
  return model;
}

Tokens bpe_apply_word(const BpeModel& model, std::string_view word) {
  Tokens symbols = bpe_characters(word);
  for (const auto& [a, b] : model.merges) {
    if (symbols.size() < 2) break;
    merge_in_place(symbols, a, b);
  }
  return symbols;
}

Tokens bpe_apply(const BpeModel& model, std::string_view text) {
  Tokens out;
  for (const auto& w : split_tokens(text)) {
    auto pieces = bpe_apply_word(model, w);
    out.insert(out.end(), pieces.begin(), pieces.end());
  }
  return out;
}

Tokens bpe_join(const Tokens& subwords) {
  Tokens words;
  std::string current;
  for (const auto& piece : subwords) {
    if (piece.size() >= kEndOfWord.size() &&
        piece.compare(piece.size() - kEndOfWord.size(), kEndOfWord.size(), kEndOfWord) == 0) {
      current += piece.substr(0, piece.size() - kEndOfWord.size());
      words.push_back(std::move(current));
      current.clear();
    } else {
      current += piece;
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

SynthCorpus synth_corpus(const SynthOptions& o) {
  const auto& r = o.noise;
  for (double rate : {r.sub_rate, r.del_rate, r.ins_rate}) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("noise rates must lie in [0, 1]");
  }
  if (!(r.sub_rate + r.del_rate + r.ins_rate < 1.0)) throw ConfigError("noise rates must sum to less than 1");
  if (o.vocab_size < 2) throw ConfigError("synthetic vocabulary needs at least two tokens");
  if (o.min_len == 0 || o.min_len > o.max_len) throw ConfigError("invalid synthetic length range");

  std::mt19937_64 rng(o.seed);
  std::vector<std::size_t> mapping(o.vocab_size);
  std::iota(mapping.begin(), mapping.end(), 0);
  std::shuffle(mapping.begin(), mapping.end(), rng);

  std::uniform_int_distribution<std::size_t> length(o.min_len, o.max_len);
  std::uniform_int_distribution<std::size_t> token(0, o.vocab_size - 1);
  std::uniform_int_distribution<std::size_t> other(1, o.vocab_size - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto target = [](std::size_t i) { return "w" + std::to_string(i); };
  auto source = [](std::size_t i) { return "x" + std::to_string(i); };

  SynthCorpus out;
  out.triplets.reserve(o.n);
  out.generator_labels.reserve(o.n);
  for (std::size_t n = 0; n < o.n; ++n) {
    std::vector<std::size_t> pe_ids(length(rng));
    for (auto& id : pe_ids) id = token(rng);

    Tokens mt;
    Labels gen;
    // Redraw the corruption in the rare case that it deletes every token.
    while (mt.empty()) {
      gen.clear();
      for (auto id : pe_ids) {
        const double u = unit(rng);
        if (u < r.sub_rate) {
          mt.push_back(target((id + other(rng)) % o.vocab_size));
          gen.push_back(0);
        } else if (u < r.sub_rate + r.del_rate) {
          continue;
        } else if (u < r.sub_rate + r.del_rate + r.ins_rate) {
          mt.push_back(target(id));
          gen.push_back(1);
          mt.push_back(target(token(rng)));
          gen.push_back(0);
        } else {
          mt.push_back(target(id));
          gen.push_back(1);
        }
      }
    }

    Triplet t;
    for (auto id : pe_ids) {
      t.pe.push_back(target(id));
      t.src.push_back(source(mapping[id]));
    }
    t.mt = std::move(mt);
    t.labels = lcs_labels(t.mt, t.pe);
    out.triplets.push_back(std::move(t));
    out.generator_labels.push_back(std::move(gen));
  }
  return out;
}

}  // namespace l2copy
