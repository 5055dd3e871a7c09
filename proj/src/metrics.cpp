#include "lmm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lmm/tokenization.hpp"
#include "lmm/toygen.hpp"

namespace lmm {

namespace {

void check_aligned(size_t hyp, size_t ref) {
  if (hyp != ref) {
    throw std::invalid_argument("hypothesis/reference line counts differ: " +
                                std::to_string(hyp) + " vs " + std::to_string(ref));
  }
}

// n-grams over a token sequence, keyed by joining with '\x1f' (tokens
// are whitespace-split, so the separator cannot collide).
std::map<std::string, int64_t> token_ngrams(const std::vector<std::string>& toks, int n) {
  std::map<std::string, int64_t> grams;
  for (size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (int k = 1; k < n; ++k) {
      key += '\x1f';
      key += toks[i + k];
    }
    ++grams[key];
  }
  return grams;
}

std::vector<std::string> despaced_codepoints(const std::string& line) {
  std::vector<std::string> cps;
  for (auto& cp : codepoints(line)) {
    if (cp == " " || cp == "\t") continue;
    cps.push_back(std::move(cp));
  }
  return cps;
}

std::map<std::string, int64_t> char_ngrams(const std::vector<std::string>& cps, int n) {
  std::map<std::string, int64_t> grams;
  for (size_t i = 0; i + n <= cps.size(); ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) key += cps[i + k];
    ++grams[key];
  }
  return grams;
}

int64_t clipped_matches(const std::map<std::string, int64_t>& hyp,
                        const std::map<std::string, int64_t>& ref) {
  int64_t m = 0;
  for (const auto& [gram, cnt] : hyp) {
    auto it = ref.find(gram);
    if (it != ref.end()) m += std::min(cnt, it->second);
  }
  return m;
}

struct OrderTotals {
  int64_t matched = 0, hyp_total = 0, ref_total = 0;
};

}  // namespace

NgramProfile char_trigrams(const std::vector<std::string>& lines) {
  NgramProfile profile;
  for (const auto& line : lines) {
    for (const auto& [gram, cnt] : char_ngrams(despaced_codepoints(line), 3)) {
      profile.add(gram, cnt);
    }
  }
  return profile;
}

BleuStats bleu_stats(const std::vector<std::string>& hyps,
                     const std::vector<std::string>& refs) {
  check_aligned(hyps.size(), refs.size());
  OrderTotals totals[4];
  BleuStats stats;
  for (size_t i = 0; i < hyps.size(); ++i) {
    auto h = split_ws(hyps[i]);
    auto r = split_ws(refs[i]);
    stats.hyp_len += static_cast<int64_t>(h.size());
    stats.ref_len += static_cast<int64_t>(r.size());
    for (int n = 1; n <= 4; ++n) {
      auto hg = token_ngrams(h, n);
      auto rg = token_ngrams(r, n);
      for (const auto& [g, c] : hg) {
        (void)g;
        totals[n - 1].hyp_total += c;
      }
      for (const auto& [g, c] : rg) {
        (void)g;
        totals[n - 1].ref_total += c;
      }
      totals[n - 1].matched += clipped_matches(hg, rg);
    }
  }

  double log_prec_sum = 0;
  int used = 0;
  bool zero_precision = false;
  for (int n = 0; n < 4; ++n) {
    if (totals[n].hyp_total == 0) continue;  // no n-grams of this order anywhere
    stats.order_used[n] = true;
    stats.precisions[n] =
        static_cast<double>(totals[n].matched) / static_cast<double>(totals[n].hyp_total);
    ++used;
    if (totals[n].matched == 0) {
      zero_precision = true;
    } else {
      log_prec_sum += std::log(stats.precisions[n]);
    }
  }

  if (stats.hyp_len == 0 || used == 0 || zero_precision) {
    stats.brevity_penalty = 0;
    stats.score = 0;
    return stats;
  }
  stats.brevity_penalty =
      stats.hyp_len >= stats.ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(stats.ref_len) / stats.hyp_len);
  stats.score = 100.0 * stats.brevity_penalty * std::exp(log_prec_sum / used);
  return stats;
}

double bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  return bleu_stats(hyps, refs).score;
}

double sentence_bleu(const std::string& hyp, const std::string& ref) {
  auto h = split_ws(hyp);
  auto r = split_ws(ref);
  if (h.empty()) return 0;
  double log_prec_sum = 0;
  for (int n = 1; n <= 4; ++n) {
    auto hg = token_ngrams(h, n);
    auto rg = token_ngrams(r, n);
    int64_t total = 0;
    for (const auto& [g, c] : hg) {
      (void)g;
      total += c;
    }
    int64_t matched = clipped_matches(hg, rg);
    double p = n == 1 ? (total ? static_cast<double>(matched) / total : 0.0)
                      : static_cast<double>(matched + 1) / static_cast<double>(total + 1);
    if (p == 0) return 0;
    log_prec_sum += std::log(p);
  }
  double bp = h.size() >= r.size()
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(r.size()) / h.size());
  return 100.0 * bp * std::exp(log_prec_sum / 4);
}

double chrf3(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  check_aligned(hyps.size(), refs.size());
  constexpr int kMaxOrder = 6;
  constexpr double kBetaSq = 9.0;
  OrderTotals totals[kMaxOrder];
  for (size_t i = 0; i < hyps.size(); ++i) {
    auto h = despaced_codepoints(hyps[i]);
    auto r = despaced_codepoints(refs[i]);
    for (int n = 1; n <= kMaxOrder; ++n) {
      auto hg = char_ngrams(h, n);
      auto rg = char_ngrams(r, n);
      for (const auto& [g, c] : hg) {
        (void)g;
        totals[n - 1].hyp_total += c;
      }
      for (const auto& [g, c] : rg) {
        (void)g;
        totals[n - 1].ref_total += c;
      }
      totals[n - 1].matched += clipped_matches(hg, rg);
    }
  }

  double prec_sum = 0, rec_sum = 0;
  int used = 0;
  for (int n = 0; n < kMaxOrder; ++n) {
    if (totals[n].ref_total == 0) continue;  // order absent from the reference
    ++used;
    rec_sum += static_cast<double>(totals[n].matched) / totals[n].ref_total;
    if (totals[n].hyp_total > 0) {
      prec_sum += static_cast<double>(totals[n].matched) / totals[n].hyp_total;
    }
  }
  if (used == 0) return 0;
  double p = prec_sum / used;
  double r = rec_sum / used;
  if (p + r == 0) return 0;
  return (1.0 + kBetaSq) * p * r / (kBetaSq * p + r);
}

double char_trigram_kl(const std::vector<std::string>& ref_lines,
                       const std::vector<std::string>& hyp_lines) {
  NgramProfile ref = char_trigrams(ref_lines);
  NgramProfile hyp = char_trigrams(hyp_lines);

  std::map<std::string, int64_t> support = ref.counts;
  for (const auto& [g, c] : hyp.counts) {
    (void)c;
    support.emplace(g, 0);
  }
  if (support.empty()) return 0;

  const double u = static_cast<double>(support.size());
  const double ref_denom = static_cast<double>(ref.total) + u;
  const double hyp_denom = static_cast<double>(hyp.total) + u;
  double kl = 0;
  for (const auto& [g, c] : support) {
    (void)c;
    auto ref_it = ref.counts.find(g);
    auto hyp_it = hyp.counts.find(g);
    double p = ((ref_it != ref.counts.end() ? ref_it->second : 0) + 1.0) / ref_denom;
    double q = ((hyp_it != hyp.counts.end() ? hyp_it->second : 0) + 1.0) / hyp_denom;
    kl += p * std::log(p / q);
  }
  return kl;
}

double oov_rate(const std::vector<std::string>& output_lines, const Vocab& training_vocab) {
  int64_t total = 0, novel = 0;
  for (const auto& line : output_lines) {
    for (const auto& tok : split_ws(line)) {
      ++total;
      if (!training_vocab.contains(tok)) ++novel;
    }
  }
  if (total == 0) return 0.0;  // tokenless output coins no new words
  return 100.0 * static_cast<double>(novel) / static_cast<double>(total);
}

double perplexity(double total_nll_nats, int64_t n_events) {
  if (n_events <= 0) throw std::invalid_argument("perplexity: no events");
  return std::exp(total_nll_nats / static_cast<double>(n_events));
}

double toy_tbleu(const std::vector<std::string>& hyp_lines,
                 const std::vector<std::string>& ref_seg_lines) {
  check_aligned(hyp_lines.size(), ref_seg_lines.size());
  auto to_morph_line = [](const std::string& seg_line) {
    std::string out;
    for (const auto& word : split_ws(seg_line)) {
      for (char ch : word) out += ch == '+' ? ' ' : ch;
      out += ' ';
    }
    return out;
  };
  std::vector<std::string> hyp_morphs, ref_morphs;
  hyp_morphs.reserve(hyp_lines.size());
  ref_morphs.reserve(ref_seg_lines.size());
  for (const auto& line : hyp_lines) {
    std::string analyzed;
    for (const auto& word : split_ws(line)) {
      analyzed += toy::analyze(word);
      analyzed += ' ';
    }
    hyp_morphs.push_back(to_morph_line(analyzed));
  }
  for (const auto& line : ref_seg_lines) {
    ref_morphs.push_back(to_morph_line(line));
  }
  return bleu(hyp_morphs, ref_morphs);
}

}  // namespace lmm
