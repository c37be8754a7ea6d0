#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "l2copy/data.hpp"
#include "l2copy/errors.hpp"
#include "l2copy/labeling.hpp"

using namespace l2copy;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "l2copy_data_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

Triplet table_one() {
  Triplet t;
  t.src = split_tokens("I ate a hamburger yesterday");
  t.mt = split_tokens("Ich esse einen Hamburger");
  t.pe = split_tokens("Ich hatte gestern einen Kuchen gegessen");
  t.labels = lcs_labels(t.mt, t.pe);
  return t;
}

std::vector<EncodedTriplet> encoded_synth(std::size_t n) {
  SynthOptions o;
  o.n = n;
  o.vocab_size = 10;
  o.seed = 4;
  const auto corpus = synth_corpus(o).triplets;
  const Vocab vocab = build_vocab(corpus);
  std::vector<EncodedTriplet> out;
  for (const auto& t : corpus) out.push_back(encode_triplet(t, vocab));
  return out;
}

}  // namespace

TEST(CorpusTest, TableOneSerialisesWithLabels) {
  std::ostringstream out;
  format_corpus(out, {table_one()});
  EXPECT_EQ(out.str(),
            "I ate a hamburger yesterday\tIch esse einen Hamburger\tIch hatte gestern einen Kuchen gegessen\t"
            "1 0 1 0\n");
  std::istringstream in(out.str());
  EXPECT_EQ(parse_corpus(in), std::vector<Triplet>{table_one()});
}

TEST(CorpusTest, WriteThenReadIsLossless) {
  std::vector<Triplet> corpus = {table_one(), {{"x"}, {"a", "b"}, {"b"}, std::nullopt}};
  const auto path = (temp_dir() / "roundtrip.tsv").string();
  write_corpus(path, corpus);
  EXPECT_EQ(read_corpus(path), corpus);
}

TEST(CorpusTest, MissingPeNamesTheLine) {
  std::istringstream in("a\tb\tc\nonly\tmt\n");
  try {
    parse_corpus(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(CorpusTest, BadLabelsAreRejected) {
  std::istringstream wrong_count("a\tb c\tb\t1\n");
  EXPECT_THROW(parse_corpus(wrong_count), ParseError);
  std::istringstream not_binary("a\tb c\tb\t1 2\n");
  EXPECT_THROW(parse_corpus(not_binary), ParseError);
}

TEST(CorpusTest, MissingFileIsReported) { EXPECT_THROW(read_corpus("/nonexistent/corpus.tsv"), std::runtime_error); }

TEST(CorpusTest, ImportsThreeParallelFiles) {
  const auto dir = temp_dir();
  std::ofstream(dir / "src.txt") << "x1 x2\ny1\n";
  std::ofstream(dir / "mt.txt") << "a b\nc\n";
  std::ofstream(dir / "pe.txt") << "a c\nc d\n";
  const auto corpus =
      import_parallel((dir / "src.txt").string(), (dir / "mt.txt").string(), (dir / "pe.txt").string());
  ASSERT_EQ(corpus.size(), 2u);
  EXPECT_EQ(corpus[1].pe, (Tokens{"c", "d"}));
  EXPECT_FALSE(corpus[0].labels);
  std::ofstream(dir / "short.txt") << "a\n";
  EXPECT_THROW(import_parallel((dir / "src.txt").string(), (dir / "short.txt").string(), (dir / "pe.txt").string()),
               ContractError);
}

TEST(CorpusTest, AtomicWriteReplacesTheFile) {
  const auto path = (temp_dir() / "atomic.txt").string();
  write_text_atomic(path, "first");
  write_text_atomic(path, "second");
  EXPECT_EQ(read_text(path), "second");
  for (const auto& entry : std::filesystem::directory_iterator(temp_dir())) {
    EXPECT_EQ(entry.path().string().find(".tmp"), std::string::npos) << entry.path();
  }
}

TEST(VocabTest, SingleTokenTypeGivesFiveEntries) {
  const std::vector<Triplet> corpus = {{{"z"}, {"z"}, {"z", "z"}, std::nullopt}};
  EXPECT_EQ(build_vocab(corpus).size(), 5u);
}

TEST(VocabTest, IdsRoundTrip) {
  SynthOptions o;
  o.n = 50;
  const auto corpus = synth_corpus(o).triplets;
  const Vocab vocab = build_vocab(corpus);
  for (std::size_t i = Vocab::kReserved; i < vocab.size(); ++i) {
    EXPECT_EQ(vocab.id(vocab.token(static_cast<int>(i))), static_cast<int>(i));
  }
  EXPECT_EQ(vocab.id("never-seen"), Vocab::kUnk);
  EXPECT_TRUE(Vocab::from_text(vocab.to_text()) == vocab);
}

TEST(VocabTest, FrequencyOrderWithLexicalTies) {
  const std::vector<Triplet> corpus = {{{"b", "a"}, {"c"}, {"c", "a", "b", "c"}, std::nullopt}};
  const Vocab vocab = build_vocab(corpus);
  EXPECT_EQ(vocab.token(4), "c");
  EXPECT_EQ(vocab.token(5), "a");
  EXPECT_EQ(vocab.token(6), "b");
  EXPECT_EQ(build_vocab(corpus, 3).size(), 5u);
}

TEST(VocabTest, DecodeStopsAtEos) {
  const Vocab vocab(std::vector<std::string>{"x", "y"});
  EXPECT_EQ(vocab.decode({Vocab::kBos, 4, Vocab::kPad, 5, Vocab::kEos, 4}), (Tokens{"x", "y"}));
}

TEST(BatchTest, FixedSeedGivesIdenticalBatches) {
  const auto corpus = encoded_synth(200);
  const auto a = batch_iter(corpus, 100, 7, 2);
  const auto b = batch_iter(corpus, 100, 7, 2);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].indices, b[i].indices);
    EXPECT_EQ(a[i].pe, b[i].pe);
  }
  const auto other = batch_iter(corpus, 100, 7, 3);
  bool differs = other.size() != a.size();
  for (std::size_t i = 0; !differs && i < a.size(); ++i) differs = a[i].indices != other[i].indices;
  EXPECT_TRUE(differs);
}

TEST(BatchTest, EveryExampleOnceWithinBudget) {
  const auto corpus = encoded_synth(300);
  const auto batches = batch_iter(corpus, 90, 1);
  std::vector<int> seen(corpus.size(), 0);
  for (const auto& b : batches) {
    EXPECT_LE(b.token_cost(), 90u);
    for (auto i : b.indices) {
      ++seen[i];
      EXPECT_LE(example_cost(corpus[i]), b.padded_length);
    }
    for (const auto& row : b.mt) EXPECT_EQ(row.size(), b.mt.front().size());
  }
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(BatchTest, ExampleAboveBudgetIsAConfigError) {
  const auto corpus = encoded_synth(20);
  EXPECT_THROW(batch_iter(corpus, 5, 1), ConfigError);
}

TEST(BatchTest, CostCountsTheLongerSide) {
  const EncodedTriplet e{{4, 5}, {6, 7, 8}, {6, 7, 8, 9, 9, 9, 9}, {1, 1, 1}};
  EXPECT_EQ(example_cost(e), 8u);
}

TEST(BpeTest, ZeroMergesIsCharacterSegmentation) {
  const BpeModel none = bpe_learn({"low lower"}, 0);
  EXPECT_TRUE(none.merges.empty());
  EXPECT_EQ(bpe_apply(none, "low"), (Tokens{"l", "o", "w</w>"}));
}

TEST(BpeTest, MergeTraceOnTheClassicCorpus) {
  std::vector<std::string> lines;
  for (int i = 0; i < 5; ++i) lines.push_back("low");
  for (int i = 0; i < 2; ++i) lines.push_back("lower");
  for (int i = 0; i < 6; ++i) lines.push_back("newest");
  for (int i = 0; i < 3; ++i) lines.push_back("widest");
  const BpeModel model = bpe_learn(lines, 10);
  const std::vector<std::pair<std::string, std::string>> expected = {
      {"e", "s"},  {"es", "t</w>"},     {"l", "o"},  {"e", "w"},    {"ew", "est</w>"},
      {"n", "ewest</w>"}, {"lo", "w</w>"}, {"d", "est</w>"}, {"i", "dest</w>"}, {"w", "idest</w>"}};
  EXPECT_EQ(model.merges, expected);
  EXPECT_EQ(bpe_apply(model, "lower"), (Tokens{"lo", "w", "e", "r</w>"}));
  for (const char* w : {"low", "newest", "widest"}) EXPECT_EQ(bpe_apply(model, w), (Tokens{std::string(w) + "</w>"}));
}

TEST(BpeTest, ApplyIsWordwise) {
  const BpeModel model = bpe_learn({"the cat sat on the mat", "the hat"}, 6);
  Tokens pieces;
  for (const char* w : {"the", "mat", "chat"}) {
    const auto p = bpe_apply(model, w);
    pieces.insert(pieces.end(), p.begin(), p.end());
  }
  EXPECT_EQ(bpe_apply(model, "the mat chat"), pieces);
  EXPECT_EQ(bpe_join(pieces), (Tokens{"the", "mat", "chat"}));
}

TEST(BpeTest, ModelTextRoundTrips) {
  const BpeModel model = bpe_learn({"aaa bab", "abba"}, 4);
  EXPECT_EQ(BpeModel::from_text(model.to_text()), model);
}

TEST(BpeTest, MultibyteCharactersStayWhole) {
  EXPECT_EQ(bpe_characters("für"), (Tokens{"f", "ü", "r</w>"}));
}

TEST(SynthTest, NoNoiseCopiesEverything) {
  SynthOptions o;
  o.n = 100;
  o.noise = {0, 0, 0};
  const auto c = synth_corpus(o);
  for (const auto& t : c.triplets) {
    EXPECT_EQ(t.mt, t.pe);
    EXPECT_EQ(*t.labels, Labels(t.mt.size(), 1));
  }
}

TEST(SynthTest, FixedSeedReproducesTheCorpus) {
  SynthOptions o;
  o.n = 200;
  o.noise = {0.1, 0.05, 0.05};
  const auto a = synth_corpus(o), b = synth_corpus(o);
  EXPECT_EQ(a.triplets, b.triplets);
  o.seed = 2;
  EXPECT_NE(synth_corpus(o).triplets, a.triplets);
}

TEST(SynthTest, SourceDeterminesThePostEdit) {
  SynthOptions o;
  o.n = 300;
  const auto c = synth_corpus(o);
  std::map<std::string, std::string> mapping;
  for (const auto& t : c.triplets) {
    ASSERT_EQ(t.src.size(), t.pe.size());
    for (std::size_t i = 0; i < t.src.size(); ++i) {
      const auto [it, inserted] = mapping.emplace(t.src[i], t.pe[i]);
      EXPECT_EQ(it->second, t.pe[i]);
    }
  }
}

TEST(SynthTest, InvalidRatesAreConfigErrors) {
  SynthOptions o;
  o.noise = {0.6, 0.3, 0.2};
  EXPECT_THROW(synth_corpus(o), ConfigError);
  o.noise = {-0.1, 0, 0};
  EXPECT_THROW(synth_corpus(o), ConfigError);
}

TEST(SynthTest, LcsLabelsAgreeWithTheGeneratorAtSubstitutionNoise) {
  SynthOptions o;
  o.n = 2000;
  const auto c = synth_corpus(o);
  std::size_t agree = 0, total = 0;
  for (std::size_t i = 0; i < c.triplets.size(); ++i) {
    const auto& labels = *c.triplets[i].labels;
    for (std::size_t k = 0; k < labels.size(); ++k) agree += labels[k] == c.generator_labels[i][k];
    total += labels.size();
  }
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(total), 0.99);
}
