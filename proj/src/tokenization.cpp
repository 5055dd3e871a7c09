#include "lmm/tokenization.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lmm {

const char* const kReserved[5] = {"<pad>", "<s>", "</s>", "<unk>", "</w>"};

std::vector<std::string> codepoints(const std::string& text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    unsigned char lead = static_cast<unsigned char>(text[i]);
    size_t len;
    if (lead < 0x80) {
      len = 1;
    } else if ((lead & 0xe0) == 0xc0) {
      len = 2;
    } else if ((lead & 0xf0) == 0xe0) {
      len = 3;
    } else if ((lead & 0xf8) == 0xf0) {
      len = 4;
    } else {
      throw std::runtime_error("malformed UTF-8 at byte " + std::to_string(i));
    }
    if (i + len > text.size()) {
      throw std::runtime_error("truncated UTF-8 at byte " + std::to_string(i));
    }
    for (size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xc0) != 0x80) {
        throw std::runtime_error("malformed UTF-8 at byte " + std::to_string(i + k));
      }
    }
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> words;
  std::istringstream in(line);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

Vocab::Vocab() {
  for (const char* s : kReserved) add(s);
}

int Vocab::add(const std::string& symbol) {
  auto it = index_.find(symbol);
  if (it != index_.end()) return it->second;
  int id = static_cast<int>(symbols_.size());
  symbols_.push_back(symbol);
  index_.emplace(symbol, id);
  return id;
}

int Vocab::id(const std::string& symbol) const {
  auto it = index_.find(symbol);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& symbol) const {
  return index_.count(symbol) != 0;
}

const std::string& Vocab::symbol(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("vocab id " + std::to_string(id) + " out of range [0, " +
                            std::to_string(size()) + ")");
  }
  return symbols_[id];
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& s : symbols_) out << s << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  Vocab v;
  std::string line;
  int id = 0;
  while (std::getline(in, line)) {
    if (id < 5) {
      if (line != kReserved[id]) {
        throw std::runtime_error(path + ": line " + std::to_string(id) +
                                 " must be the reserved symbol " + kReserved[id]);
      }
    } else {
      if (v.contains(line)) throw std::runtime_error(path + ": duplicate symbol " + line);
      v.add(line);
    }
    ++id;
  }
  if (id < 5) throw std::runtime_error(path + ": reserved symbol block missing");
  return v;
}

namespace {

// Frequency descending, then byte order; reserved symbols are skipped
// because the Vocab constructor already placed them.
Vocab vocab_from_counts(const std::map<std::string, int64_t>& counts, int max_size) {
  std::vector<std::pair<std::string, int64_t>> entries(counts.begin(), counts.end());
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (const auto& [sym, freq] : entries) {
    (void)freq;
    if (max_size >= 0 && v.size() >= max_size) break;
    v.add(sym);
  }
  return v;
}

}  // namespace

Vocab build_char_vocab(const std::vector<std::string>& lines) {
  std::map<std::string, int64_t> counts;
  for (const auto& line : lines) {
    for (const auto& cp : codepoints(line)) ++counts[cp];
  }
  return vocab_from_counts(counts, -1);
}

Vocab build_word_vocab(const std::vector<std::string>& lines, int max_size) {
  std::map<std::string, int64_t> counts;
  for (const auto& line : lines) {
    for (const auto& w : split_ws(line)) ++counts[w];
  }
  return vocab_from_counts(counts, max_size);
}

Vocab build_unit_vocab(const std::vector<std::vector<std::string>>& tokenized_lines) {
  std::map<std::string, int64_t> counts;
  for (const auto& line : tokenized_lines) {
    for (const auto& u : line) ++counts[u];
  }
  return vocab_from_counts(counts, -1);
}

namespace {

// One left-to-right pass merging non-overlapping occurrences of (l, r).
void merge_pair(std::vector<std::string>& syms, const std::string& l, const std::string& r) {
  size_t w = 0;
  for (size_t i = 0; i < syms.size();) {
    if (i + 1 < syms.size() && syms[i] == l && syms[i + 1] == r) {
      syms[w++] = l + r;
      i += 2;
    } else {
      if (w != i) syms[w] = std::move(syms[i]);
      ++w;
      i += 1;
    }
  }
  syms.resize(w);
}

}  // namespace

std::vector<std::string> BpeModel::apply_symbols(std::vector<std::string> syms) const {
  for (const auto& [l, r] : merges) merge_pair(syms, l, r);
  return syms;
}

std::vector<std::string> BpeModel::apply_word(const std::string& word) const {
  if (word.empty()) throw std::invalid_argument("cannot BPE-encode an empty word");
  std::vector<std::string> syms = codepoints(word);
  syms.push_back(kReserved[kEow]);
  return apply_symbols(std::move(syms));
}

std::vector<std::string> BpeModel::apply_line(const std::string& line) const {
  std::vector<std::string> units;
  for (const auto& w : split_ws(line)) {
    auto u = apply_word(w);
    units.insert(units.end(), u.begin(), u.end());
  }
  return units;
}

void BpeModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "#bpe-v1\n";
  for (const auto& [l, r] : merges) out << l << ' ' << r << '\n';
}

BpeModel BpeModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != "#bpe-v1") {
    throw std::runtime_error(path + ": missing #bpe-v1 header");
  }
  BpeModel model;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    size_t sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size() ||
        line.find(' ', sp + 1) != std::string::npos) {
      throw std::runtime_error(path + ": line " + std::to_string(lineno) +
                               " is not a \"left right\" pair");
    }
    model.merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return model;
}

std::map<std::string, int64_t> count_words(const std::vector<std::string>& lines) {
  std::map<std::string, int64_t> counts;
  for (const auto& line : lines) {
    for (const auto& w : split_ws(line)) ++counts[w];
  }
  return counts;
}

BpeModel bpe_learn(const std::map<std::string, int64_t>& word_freq, int n_merges) {
  if (word_freq.empty()) throw std::invalid_argument("bpe_learn needs a nonempty corpus");
  if (n_merges < 0) throw std::invalid_argument("n_merges must be >= 0");

  std::vector<std::pair<std::vector<std::string>, int64_t>> words;
  words.reserve(word_freq.size());
  for (const auto& [w, f] : word_freq) {
    auto syms = codepoints(w);
    syms.push_back(kReserved[kEow]);
    words.emplace_back(std::move(syms), f);
  }

  BpeModel model;
  for (int step = 0; step < n_merges; ++step) {
    std::map<std::pair<std::string, std::string>, int64_t> pair_counts;
    for (const auto& [syms, freq] : words) {
      for (size_t i = 0; i + 1 < syms.size(); ++i) {
        pair_counts[{syms[i], syms[i + 1]}] += freq;
      }
    }
    if (pair_counts.empty()) break;

    auto best = pair_counts.begin();
    for (auto it = std::next(best); it != pair_counts.end(); ++it) {
      if (it->second > best->second) best = it;
      // Equal counts fall back to the map's key order, i.e. the
      // lexicographically smallest (left, right) — which is `best` already.
    }

    const auto& [l, r] = best->first;
    for (auto& [syms, freq] : words) {
      (void)freq;
      merge_pair(syms, l, r);
    }
    model.merges.emplace_back(l, r);
  }
  return model;
}

std::string bpe_join(const std::vector<std::string>& units) {
  std::string flat;
  for (const auto& u : units) flat += u;
  const std::string eow = kReserved[kEow];
  std::string out;
  size_t pos = 0;
  while (pos < flat.size()) {
    size_t hit = flat.find(eow, pos);
    if (hit == std::string::npos) {
      out += flat.substr(pos);
      break;
    }
    out += flat.substr(pos, hit - pos);
    pos = hit + eow.size();
    if (pos < flat.size()) out += ' ';
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& line : lines) out << line << '\n';
}

}  // namespace lmm
