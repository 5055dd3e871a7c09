#pragma once

// Decoding. The atomic variants run a flat beam over their unit
// vocabulary; the word-level variants run a two-level beam: an outer
// beam over word sequences where each expansion runs an inner beam over
// characters (same width) until the end-of-word marker, and the
// word-latent state is computed once per prefix before the expansion,
// so every candidate spelling of a word shares the same latents.
//
// Scores are summed log-probabilities with no length normalization.
// Finished hypotheses are kept in the pool unchanged and never
// extended. Ties and all pruning are deterministic: equal scores keep
// the hypothesis that was generated first.

#include <string>
#include <vector>

#include "lmm/model.hpp"

namespace lmm {

struct FlatHypothesis {
  std::vector<int> ids;  // emitted units, sentence terminator excluded
  double log_prob = 0;
  bool finished = false;  // emitted the sentence terminator
};

// width >= 1; width 1 is greedy decoding. Stops when every hypothesis
// in the beam has finished or emitted max_steps units. Returns the
// best finished hypothesis, or the best unfinished one (flagged) when
// none finished in time.
FlatHypothesis beam_search(Model& m, const EncodedSource& src, int width, int max_steps);

struct WordHypothesis {
  // Spellings as emitted, each ending in the end-of-word id; the
  // closing word of a finished sentence is the lone sentence
  // terminator and is included here.
  std::vector<std::vector<int>> words;
  double log_prob = 0;
  bool finished = false;
  bool truncated = false;  // some word hit the length cap
};

// Two-level beam for the word-spelling variants. max_chars caps each
// inner spelling (the model's word-length cap is the natural choice);
// max_words caps the outer sequence, terminator word included.
WordHypothesis hierarchical_beam_search(Model& m, const EncodedSource& src, int width,
                                        int max_words, int max_chars);

// The inner beam on its own: the top `width` candidate words from one
// word-level state, best first. Exposed for tests and probing.
std::vector<GeneratedWord> beam_words(Model& m, const WordAdvance& adv, int width,
                                      int max_chars);

// Line in, line out: tokenize, encode, beam-decode with the variant's
// search, detokenize. Empty or whitespace-only input gives "".
std::string translate_line(Model& m, const std::string& line, int width);

std::vector<std::string> translate_lines(Model& m, const std::vector<std::string>& lines,
                                         int width);

}  // namespace lmm
