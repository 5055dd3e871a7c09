#pragma once

// Vocabularies and byte-pair encoding.
//
// Text is UTF-8 throughout and is treated as a sequence of Unicode code
// points; input is expected to be NFC-normalized already (the toy corpus
// is ASCII). Five symbol ids are reserved in every vocabulary:
//   0 <pad>   padding (unused by the desk-scale pipeline, kept stable)
//   1 <s>     sequence start
//   2 </s>    sequence end
//   3 <unk>   unknown symbol
//   4 </w>    end of word
// Unknown lookups map to <unk> rather than failing.

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace lmm {

constexpr int kPad = 0;
constexpr int kBos = 1;
constexpr int kEos = 2;
constexpr int kUnk = 3;
constexpr int kEow = 4;

extern const char* const kReserved[5];

// Split a UTF-8 string into code points (each returned as the UTF-8
// bytes of that code point). Malformed input throws.
std::vector<std::string> codepoints(const std::string& text);

class Vocab {
 public:
  Vocab();  // holds exactly the reserved symbols

  int add(const std::string& symbol);     // idempotent insert
  int id(const std::string& symbol) const;  // kUnk when absent
  bool contains(const std::string& symbol) const;
  const std::string& symbol(int id) const;
  int size() const { return static_cast<int>(symbols_.size()); }

  // One symbol per line; the line number is the id. The reserved symbols
  // occupy the first five lines.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  const std::vector<std::string>& symbols() const { return symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

// Symbols ordered by corpus frequency (descending), ties broken by byte
// order, appended after the reserved block.
Vocab build_char_vocab(const std::vector<std::string>& lines);
// max_size caps the total vocabulary size (reserved block included);
// max_size < 0 means unlimited. Truncation keeps the most frequent words.
Vocab build_word_vocab(const std::vector<std::string>& lines, int max_size = -1);
Vocab build_unit_vocab(const std::vector<std::vector<std::string>>& tokenized_lines);

// Byte-pair encoding over whitespace-split words, each terminated by the
// </w> symbol before merging. Merges replay in learned order; ties in
// pair frequency resolve to the lexicographically smallest (left, right).
struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;

  // Replay the merges over an explicit symbol sequence.
  std::vector<std::string> apply_symbols(std::vector<std::string> syms) const;
  // Code points of word + </w>, then replay.
  std::vector<std::string> apply_word(const std::string& word) const;
  // Whitespace-split the line, apply per word, concatenate the units.
  std::vector<std::string> apply_line(const std::string& line) const;

  // Header "#bpe-v1", then one "left right" pair per line.
  void save(const std::string& path) const;
  static BpeModel load(const std::string& path);
};

std::map<std::string, int64_t> count_words(const std::vector<std::string>& lines);
BpeModel bpe_learn(const std::map<std::string, int64_t>& word_freq, int n_merges);

// Undo apply_word/apply_line: concatenate units and turn each </w> back
// into a word boundary.
std::string bpe_join(const std::vector<std::string>& units);

std::vector<std::string> split_ws(const std::string& line);

// Line-oriented file helpers (UTF-8, '\n' separators). Errors carry the
// path in the message.
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

}  // namespace lmm
