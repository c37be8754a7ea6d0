#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace l2copy {

using Tokens = std::vector<std::string>;
using Labels = std::vector<std::uint8_t>;

/// One APE example: source, machine translation, post-edit.
struct Triplet {
  Tokens src;
  Tokens mt;
  Tokens pe;
  std::optional<Labels> labels;  // one 0/1 entry per mt token

  bool operator==(const Triplet&) const = default;
};

/// Splits on runs of spaces.
Tokens split_tokens(std::string_view line);
std::string join_tokens(const Tokens& tokens);

/// Tab-separated records: src, mt, pe and an optional labels field.
std::vector<Triplet> parse_corpus(std::istream& in);
std::vector<Triplet> read_corpus(const std::string& path);
void format_corpus(std::ostream& out, const std::vector<Triplet>& corpus);
void write_corpus(const std::string& path, const std::vector<Triplet>& corpus);

/// Reads three parallel one-sentence-per-line files into triplets.
std::vector<Triplet> import_parallel(const std::string& src_path, const std::string& mt_path,
                                     const std::string& pe_path);

/// Writes through a sibling temporary file and renames it into place.
void write_text_atomic(const std::string& path, std::string_view content);
std::string read_text(const std::string& path);
std::vector<std::string> read_lines(const std::string& path);

// ---------------------------------------------------------------------------
// Vocabulary

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocab();
  /// Reserved entries are added automatically; `tokens` lists the rest in id order.
  explicit Vocab(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const Tokens& tokens) const;
  /// Stops at the first EOS; drops PAD and BOS.
  Tokens decode(const std::vector<int>& ids) const;

  std::string to_text() const;  // one token per line, reserved entries excluded
  static Vocab from_text(std::string_view text);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Shared src/mt/pe vocabulary sorted by descending frequency, ties broken
/// lexically. Tokens seen fewer than min_count times are left out.
Vocab build_vocab(const std::vector<Triplet>& corpus, std::size_t min_count = 1);

/// Integer view of a triplet used by the model.
struct EncodedTriplet {
  std::vector<int> src;
  std::vector<int> mt;
  std::vector<int> pe;
  Labels labels;
};

EncodedTriplet encode_triplet(const Triplet& t, const Vocab& vocab);

// ---------------------------------------------------------------------------
// Batching

struct Batch {
  std::vector<std::size_t> indices;  // into the corpus
  std::size_t padded_length = 0;     // longest example cost in the batch
  /// Padded id matrices, one row per example, PAD-filled on the right.
  std::vector<std::vector<int>> src, mt, pe;

  std::size_t token_cost() const { return indices.size() * padded_length; }
};

/// Cost of one example in padded tokens: max(I + K, J + 1).
std::size_t example_cost(const EncodedTriplet& t);

/// Groups similar lengths into batches whose padded cost never exceeds
/// token_budget. The result depends only on (corpus, budget, seed, epoch).
std::vector<Batch> batch_iter(const std::vector<EncodedTriplet>& corpus, std::size_t token_budget,
                              std::uint64_t seed, std::size_t epoch = 0);

// ---------------------------------------------------------------------------
// Byte-pair encoding

inline constexpr std::string_view kEndOfWord = "</w>";

struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;

  std::string to_text() const;
  static BpeModel from_text(std::string_view text);
  bool operator==(const BpeModel&) const = default;
};

/// Splits a word into UTF-8 characters and marks the last one with </w>.
Tokens bpe_characters(std::string_view word);
/// Learns up to `merges` merges from whitespace-separated text lines.
/// Ties on pair frequency go to the lexically smallest pair.
BpeModel bpe_learn(const std::vector<std::string>& lines, std::size_t merges);
Tokens bpe_apply_word(const BpeModel& model, std::string_view word);
Tokens bpe_apply(const BpeModel& model, std::string_view text);
/// Inverse of bpe_apply: joins subwords and splits at </w> markers.
Tokens bpe_join(const Tokens& subwords);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct NoiseRates {
  double sub_rate = 0.15;
  double del_rate = 0.0;
  double ins_rate = 0.0;
};

struct SynthOptions {
  std::uint64_t seed = 1;
  std::size_t n = 2000;
  std::size_t vocab_size = 50;
  std::size_t min_len = 4;
  std::size_t max_len = 10;
  NoiseRates noise;
};

struct SynthCorpus {
  std::vector<Triplet> triplets;  // labels filled by lcs_labels
  std::vector<Labels> generator_labels;  // the corruption bookkeeping
};

/// pe is drawn uniformly from target tokens w0..w{V-1}; src maps each pe
/// token through a seeded permutation onto x0..x{V-1}; mt is pe with
/// substitutions, deletions and insertions applied.
SynthCorpus synth_corpus(const SynthOptions& options);

}  // namespace l2copy
