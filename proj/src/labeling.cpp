#include "l2copy/labeling.hpp"

#include <algorithm>

#include "l2copy/errors.hpp"

namespace l2copy {

namespace {

// Row-major (rows x cols) table in one allocation.
struct Table {
  std::size_t cols;
  std::vector<std::size_t> cells;
  Table(std::size_t rows, std::size_t c) : cols(c), cells(rows * c, 0) {}
  std::size_t& operator()(std::size_t i, std::size_t j) { return cells[i * cols + j]; }
  std::size_t operator()(std::size_t i, std::size_t j) const { return cells[i * cols + j]; }
};

// table(i, j) = LCS of a[0..i) and b[0..j)
Table prefix_table(std::span<const std::string> a, std::span<const std::string> b) {
  Table t(a.size() + 1, b.size() + 1);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      t(i, j) = a[i - 1] == b[j - 1] ? t(i - 1, j - 1) + 1 : std::max(t(i - 1, j), t(i, j - 1));
    }
  }
  return t;
}

// table(i, j) = LCS of a[i..) and b[j..)
Table suffix_table(std::span<const std::string> a, std::span<const std::string> b) {
  const std::size_t n = a.size(), m = b.size();
  Table t(n + 1, m + 1);
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      t(i, j) = a[i] == b[j] ? t(i + 1, j + 1) + 1 : std::max(t(i + 1, j), t(i, j + 1));
    }
  }
  return t;
}

}  // namespace

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  // Two rolling rows are enough for the length.
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Labels lcs_labels(std::span<const std::string> mt, std::span<const std::string> pe, LabelMode mode) {
  Labels labels(mt.size(), 0);
  if (mt.empty() || pe.empty()) return labels;

  const auto pre = prefix_table(mt, pe);
  if (mode == LabelMode::single) {
    std::size_t i = mt.size(), j = pe.size();
    while (i > 0 && j > 0) {
      if (mt[i - 1] == pe[j - 1]) {
        labels[i - 1] = 1;
        --i;
        --j;
      } else if (pre(i, j - 1) >= pre(i - 1, j)) {
        --j;
      } else {
        --i;
      }
    }
    return labels;
  }

  const auto suf = suffix_table(mt, pe);
  const std::size_t total = pre(mt.size(), pe.size());
  for (std::size_t i = 0; i < mt.size(); ++i) {
    for (std::size_t j = 0; j < pe.size(); ++j) {
      if (mt[i] == pe[j] && pre(i, j) + 1 + suf(i + 1, j + 1) == total) {
        labels[i] = 1;
        break;
      }
    }
  }
  return labels;
}

void label_corpus(std::vector<Triplet>& corpus, LabelMode mode) {
  for (auto& t : corpus) t.labels = lcs_labels(t.mt, t.pe, mode);
}

double corpus_copy_rate(const std::vector<Triplet>& corpus, LabelMode mode) {
  if (corpus.empty()) throw ContractError("corpus_copy_rate: empty corpus");
  std::size_t copied = 0, total = 0;
  for (const auto& t : corpus) {
    const Labels labels = t.labels ? *t.labels : lcs_labels(t.mt, t.pe, mode);
    for (auto l : labels) copied += l;
    total += t.mt.size();
  }
  if (total == 0) throw ContractError("corpus_copy_rate: corpus has no mt tokens");
  return static_cast<double>(copied) / static_cast<double>(total);
}

}  // namespace l2copy
