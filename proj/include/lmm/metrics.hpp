#pragma once

// Corpus evaluation: BLEU, chrF3, character-trigram KL divergence, OOV
// rate, and perplexity helpers. All functions are pure and deterministic.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lmm {

class Vocab;

// Character n-gram (or trigram) counts with their total.
struct NgramProfile {
  std::map<std::string, int64_t> counts;
  int64_t total = 0;

  void add(const std::string& gram, int64_t n = 1) {
    counts[gram] += n;
    total += n;
  }
};

// Trigrams over code points with whitespace removed, pooled over lines.
NgramProfile char_trigrams(const std::vector<std::string>& lines);

struct BleuStats {
  double precisions[4] = {0, 0, 0, 0};  // modified n-gram precisions
  bool order_used[4] = {false, false, false, false};
  double brevity_penalty = 0;
  int64_t hyp_len = 0;
  int64_t ref_len = 0;
  double score = 0;  // [0, 100]
};

// Corpus BLEU over whitespace tokens: geometric mean of the modified
// 1..4-gram precisions times the brevity penalty. An order in which the
// hypothesis corpus has no n-grams at all (every line shorter than n) is
// skipped, so that a corpus equal to its reference scores exactly 100;
// an order with n-grams but zero matches forces the score to 0.
BleuStats bleu_stats(const std::vector<std::string>& hyps,
                     const std::vector<std::string>& refs);
double bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs);

// Sentence-level diagnostic BLEU: raw unigram precision, add-one
// smoothing on orders 2-4.
double sentence_bleu(const std::string& hyp, const std::string& ref);

// chrF with beta = 3: precision and recall of character 1..6-grams
// (whitespace removed), each averaged over the orders for which the
// reference corpus has any n-grams, then combined by F_beta. In [0, 1].
double chrf3(const std::vector<std::string>& hyps, const std::vector<std::string>& refs);

// D_KL(reference || hypothesis) in nats between character-trigram
// relative frequencies, add-one smoothed over the union support. Finite
// for every input pair; exactly 0 when the profiles coincide.
double char_trigram_kl(const std::vector<std::string>& ref_lines,
                       const std::vector<std::string>& hyp_lines);

// Percentage of whitespace tokens absent from the vocabulary; 0 when
// the output has no tokens at all.
double oov_rate(const std::vector<std::string>& output_lines, const Vocab& training_vocab);

// exp(total_nll / n_events); the shared perplexity definition.
double perplexity(double total_nll_nats, int64_t n_events);

// BLEU over morph tokens for the toy language: hypothesis words are
// segmented by the toy grammar, references come as gold "+"-joined
// segmentations.
double toy_tbleu(const std::vector<std::string>& hyp_lines,
                 const std::vector<std::string>& ref_seg_lines);

}  // namespace lmm
