#include "l2copy/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "l2copy/errors.hpp"
#include "l2copy/labeling.hpp"

namespace l2copy {

// ---------------------------------------------------------------------------
// TER

namespace {

constexpr std::size_t kMaxShiftSize = 10;
constexpr std::size_t kMaxShiftDistance = 50;
constexpr std::size_t kMaxShiftCandidates = 1000;

enum class EditOp { match, substitute, insert, erase };  // insert: extra hyp word; erase: missing ref word

struct Alignment {
  std::size_t distance = 0;
  std::vector<std::uint8_t> hyp_err;
  std::vector<std::uint8_t> ref_err;
  std::vector<long> hyp_align;  // ref position -> aligned hyp position (-1 before the first)
};

std::vector<std::vector<std::size_t>> distance_table(std::span<const std::string> hyp,
                                                     std::span<const std::string> ref) {
  const std::size_t n = hyp.size(), m = ref.size();
  std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = d[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      d[i][j] = std::min({diag, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }
  return d;
}

Alignment align(std::span<const std::string> hyp, std::span<const std::string> ref) {
  const auto d = distance_table(hyp, ref);
  std::vector<EditOp> ops;
  std::size_t i = hyp.size(), j = ref.size();
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = hyp[i - 1] == ref[j - 1];
      if (d[i][j] == d[i - 1][j - 1] + (same ? 0 : 1)) {
        ops.push_back(same ? EditOp::match : EditOp::substitute);
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ops.push_back(EditOp::insert);
      --i;
    } else {
      ops.push_back(EditOp::erase);
      --j;
    }
  }
  std::reverse(ops.begin(), ops.end());

  Alignment a;
  a.distance = d[hyp.size()][ref.size()];
  long pos_h = -1;
  for (auto op : ops) {
    switch (op) {
      case EditOp::match:
      case EditOp::substitute: {
        const std::uint8_t err = op == EditOp::substitute ? 1 : 0;
        ++pos_h;
        a.hyp_align.push_back(pos_h);
        a.hyp_err.push_back(err);
        a.ref_err.push_back(err);
        break;
      }
      case EditOp::insert:
        ++pos_h;
        a.hyp_err.push_back(1);
        break;
      case EditOp::erase:
        a.hyp_align.push_back(pos_h);
        a.ref_err.push_back(1);
        break;
    }
  }
  return a;
}

std::vector<std::string> perform_shift(const std::vector<std::string>& w, std::size_t start, std::size_t length,
                                       std::size_t target) {
  using It = std::vector<std::string>::const_iterator;
  auto at = [&](std::size_t k) -> It { return w.begin() + static_cast<std::ptrdiff_t>(k); };
  std::vector<std::string> out;
  out.reserve(w.size());
  auto append = [&](std::size_t a, std::size_t b) { out.insert(out.end(), at(a), at(b)); };
  if (target < start) {
    append(0, target);
    append(start, start + length);
    append(target, start);
    append(start + length, w.size());
  } else if (target > start + length) {
    append(0, start);
    append(start + length, target);
    append(start, start + length);
    append(target, w.size());
  } else {
    append(0, start);
    append(start + length, std::min(w.size(), length + target));
    append(start, start + length);
    append(std::min(w.size(), length + target), w.size());
  }
  return out;
}

struct ShiftOutcome {
  long delta = 0;
  std::vector<std::string> words;
  std::size_t checked = 0;
};

ShiftOutcome best_shift(const std::vector<std::string>& hyp, std::span<const std::string> ref, std::size_t checked) {
  const Alignment a = align(hyp, ref);
  const long pre_score = static_cast<long>(a.distance);

  bool found = false;
  std::tuple<long, long, long, long> best_key{};
  std::vector<std::string> best_words;

  for (std::size_t start_h = 0; start_h < hyp.size(); ++start_h) {
    for (std::size_t start_r = 0; start_r < ref.size(); ++start_r) {
      const auto distance = start_h > start_r ? start_h - start_r : start_r - start_h;
      if (distance > kMaxShiftDistance) continue;
      for (std::size_t length = 1; length <= kMaxShiftSize; ++length) {
        if (start_h + length > hyp.size() || start_r + length > ref.size()) break;
        if (hyp[start_h + length - 1] != ref[start_r + length - 1]) break;

        const auto any = [](const std::vector<std::uint8_t>& v, std::size_t s, std::size_t n) {
          return std::any_of(v.begin() + static_cast<std::ptrdiff_t>(s),
                             v.begin() + static_cast<std::ptrdiff_t>(s + n), [](auto x) { return x != 0; });
        };
        if (!any(a.hyp_err, start_h, length)) continue;
        if (!any(a.ref_err, start_r, length)) continue;
        const long own = a.hyp_align[start_r];
        if (static_cast<long>(start_h) <= own && own < static_cast<long>(start_h + length)) continue;

        long prev_idx = -1;
        for (long offset = -1; offset < static_cast<long>(length); ++offset) {
          const long r = static_cast<long>(start_r) + offset;
          const long idx = r == -1 ? 0 : a.hyp_align[static_cast<std::size_t>(r)] + 1;
          if (idx == prev_idx) continue;
          prev_idx = idx;
          auto shifted = perform_shift(hyp, start_h, length, static_cast<std::size_t>(idx));
          const long delta = pre_score - static_cast<long>(edit_distance(shifted, ref));
          const std::tuple<long, long, long, long> key{delta, static_cast<long>(length),
                                                       -static_cast<long>(start_h), -idx};
          ++checked;
          if (!found || key > best_key) {
            found = true;
            best_key = key;
            best_words = std::move(shifted);
          }
        }
        if (checked >= kMaxShiftCandidates) break;
      }
      if (checked >= kMaxShiftCandidates) break;
    }
    if (checked >= kMaxShiftCandidates) break;
  }
  if (!found) return {0, hyp, checked};
  return {std::get<0>(best_key), std::move(best_words), checked};
}

}  // namespace

std::size_t edit_distance(std::span<const std::string> hyp, std::span<const std::string> ref) {
  std::vector<std::size_t> prev(ref.size() + 1), cur(ref.size() + 1);
  for (std::size_t j = 0; j <= ref.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      cur[j] = std::min({prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1), prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[ref.size()];
}

TerResult ter_stats(std::span<const std::string> hyp, std::span<const std::string> ref) {
  if (ref.empty()) throw ContractError("ter: empty reference");
  std::vector<std::string> words(hyp.begin(), hyp.end());
  std::size_t shifts = 0, checked = 0;
  while (true) {
    auto outcome = best_shift(words, ref, checked);
    checked = outcome.checked;
    if (checked >= kMaxShiftCandidates) break;
    if (outcome.delta <= 0) break;
    ++shifts;
    words = std::move(outcome.words);
  }
  TerResult r;
  r.shifts = shifts;
  r.edits = static_cast<double>(shifts + edit_distance(words, ref));
  r.ref_length = ref.size();
  return r;
}

double ter(std::span<const std::string> hyp, std::span<const std::string> ref) { return ter_stats(hyp, ref).score(); }

double corpus_ter(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  if (hyps.size() != refs.size()) throw ContractError("corpus_ter: hypothesis and reference counts differ");
  if (refs.empty()) throw ContractError("corpus_ter: empty corpus");
  double edits = 0;
  std::size_t words = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto r = ter_stats(hyps[i], refs[i]);
    edits += r.edits;
    words += r.ref_length;
  }
  return 100.0 * edits / static_cast<double>(words);
}

// ---------------------------------------------------------------------------
// BLEU

namespace {

std::map<std::string, std::size_t> ngram_counts(const Tokens& tokens, std::size_t n) {
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) {
      if (k) key += '\x1f';
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

std::array<double, 4> BleuStats::precisions() const {
  std::array<double, 4> p{};
  for (std::size_t n = 0; n < 4; ++n) {
    p[n] = totals[n] ? static_cast<double>(matches[n]) / static_cast<double>(totals[n]) : 0.0;
  }
  return p;
}

double BleuStats::brevity_penalty() const {
  if (hyp_length == 0) return 0.0;
  if (hyp_length >= ref_length) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_length) / static_cast<double>(hyp_length));
}

double BleuStats::score() const {
  const auto p = precisions();
  double log_sum = 0;
  for (double v : p) {
    if (v <= 0.0) return 0.0;
    log_sum += std::log(v);
  }
  return 100.0 * brevity_penalty() * std::exp(log_sum / 4.0);
}

BleuStats bleu_stats(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  if (hyps.size() != refs.size()) {
    throw ContractError("bleu: " + std::to_string(hyps.size()) + " hypotheses but " + std::to_string(refs.size()) +
                        " references");
  }
  BleuStats s;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    s.hyp_length += hyps[i].size();
    s.ref_length += refs[i].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = ngram_counts(hyps[i], n);
      const auto r = ngram_counts(refs[i], n);
      for (const auto& [gram, count] : h) {
        s.totals[n - 1] += count;
        auto it = r.find(gram);
        if (it != r.end()) s.matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  return s;
}

double bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  return bleu_stats(hyps, refs).score();
}

// ---------------------------------------------------------------------------
// Copying and prediction accuracy

namespace {

std::set<std::size_t> positions_of(std::span<const std::string> seq, const std::string& token) {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] == token) out.insert(i);
  }
  return out;
}

}  // namespace

CopyCounts copying_counts(std::span<const std::string> hyp, std::span<const std::string> ref,
                          std::span<const std::string> mt) {
  const Labels labels = lcs_labels(mt, ref);
  CopyCounts c;
  for (std::size_t k = 0; k < mt.size(); ++k) {
    if (!labels[k]) continue;
    ++c.labelled;
    if (positions_of(hyp, mt[k]) == positions_of(ref, mt[k])) ++c.correct;
  }
  return c;
}

double copying_accuracy(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs,
                        const std::vector<Tokens>& mts) {
  if (hyps.size() != refs.size() || hyps.size() != mts.size()) {
    throw ContractError("copying_accuracy: hyp, ref and mt counts differ");
  }
  CopyCounts total;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto c = copying_counts(hyps[i], refs[i], mts[i]);
    total.correct += c.correct;
    total.labelled += c.labelled;
  }
  if (total.labelled == 0) return 100.0;
  return 100.0 * static_cast<double>(total.correct) / static_cast<double>(total.labelled);
}

double prediction_accuracy(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw ContractError("prediction_accuracy: " + std::to_string(scores.size()) + " scores but " +
                        std::to_string(labels.size()) + " labels");
  }
  if (scores.empty()) throw ContractError("prediction_accuracy: no tokens");
  std::size_t hits = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if ((scores[k] >= 0.5) == (labels[k] != 0)) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(scores.size());
}

// ---------------------------------------------------------------------------
// Report

EvalReport evaluate(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs, const std::vector<Tokens>& mts,
                    const std::vector<std::vector<double>>& scores, const std::vector<Labels>& labels) {
  if (hyps.size() != refs.size()) throw ContractError("evaluate: hypothesis and reference counts differ");
  if (!mts.empty() && mts.size() != hyps.size()) throw ContractError("evaluate: mt count differs from hypotheses");
  if (scores.size() != labels.size()) throw ContractError("evaluate: score and label counts differ");

  EvalReport report;
  report.sentences = hyps.size();
  double edits = 0;
  std::size_t ref_words = 0;
  CopyCounts copy_total;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    SentenceScores s;
    const auto t = ter_stats(hyps[i], refs[i]);
    s.ter = 100.0 * t.score();
    edits += t.edits;
    ref_words += t.ref_length;
    if (!mts.empty()) {
      const auto c = copying_counts(hyps[i], refs[i], mts[i]);
      s.copy_correct = c.correct;
      s.copy_labelled = c.labelled;
      copy_total.correct += c.correct;
      copy_total.labelled += c.labelled;
    }
    report.per_sentence.push_back(s);
  }
  report.ter = ref_words ? 100.0 * edits / static_cast<double>(ref_words) : 0.0;
  report.bleu = bleu(hyps, refs);
  if (mts.empty()) {
    report.copying_accuracy = -1;
  } else {
    report.copying_accuracy =
        copy_total.labelled ? 100.0 * static_cast<double>(copy_total.correct) / static_cast<double>(copy_total.labelled)
                            : 100.0;
  }
  if (!scores.empty()) {
    std::vector<double> flat_scores;
    Labels flat_labels;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i].size() != labels[i].size()) {
        throw ContractError("evaluate: sentence " + std::to_string(i + 1) + " has mismatched score/label lengths");
      }
      flat_scores.insert(flat_scores.end(), scores[i].begin(), scores[i].end());
      flat_labels.insert(flat_labels.end(), labels[i].begin(), labels[i].end());
    }
    report.prediction_accuracy = prediction_accuracy(flat_scores, flat_labels);
  }
  return report;
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << std::left << std::setw(22) << "sentences" << sentences << "\n";
  out << std::left << std::setw(22) << "TER" << ter << "\n";
  out << std::left << std::setw(22) << "BLEU" << bleu << "\n";
  out << std::left << std::setw(22) << "copying_accuracy";
  if (copying_accuracy < 0) {
    out << "n/a\n";
  } else {
    out << copying_accuracy << "\n";
  }
  out << std::left << std::setw(22) << "prediction_accuracy";
  if (prediction_accuracy < 0) {
    out << "n/a\n";
  } else {
    out << prediction_accuracy << "\n";
  }
  return out.str();
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["sentences"] = sentences;
  j["ter"] = ter;
  j["bleu"] = bleu;
  j["copying_accuracy"] = copying_accuracy < 0 ? nlohmann::json(nullptr) : nlohmann::json(copying_accuracy);
  j["prediction_accuracy"] = prediction_accuracy < 0 ? nlohmann::json(nullptr) : nlohmann::json(prediction_accuracy);
  auto& rows = j["per_sentence"] = nlohmann::json::array();
  for (const auto& s : per_sentence) {
    rows.push_back({{"ter", s.ter}, {"copy_correct", s.copy_correct}, {"copy_labelled", s.copy_labelled}});
  }
  return j.dump(2);
}

}  // namespace l2copy
