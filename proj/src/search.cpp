#include "lmm/search.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lmm {

namespace {

// Stable partial sort by descending score: equal scores keep insertion
// order, so decoding never depends on how the sort breaks ties.
template <typename T>
void keep_best(std::vector<T>& pool, int width) {
  std::stable_sort(pool.begin(), pool.end(),
                   [](const T& x, const T& y) { return x.log_prob > y.log_prob; });
  if (static_cast<int>(pool.size()) > width) pool.resize(width);
}

struct FlatCand {
  AtomicState state;
  std::vector<int> ids;
  double log_prob = 0;
  bool finished = false;
};

struct InnerCand {
  Tensor h;
  std::vector<int> spelling;
  double log_prob = 0;
  bool done = false;
  bool truncated = false;
};

struct OuterCand {
  WordState state;
  std::vector<std::vector<int>> words;
  double log_prob = 0;
  bool finished = false;
  bool truncated = false;
};

}  // namespace

FlatHypothesis beam_search(Model& m, const EncodedSource& src, int width, int max_steps) {
  if (width < 1) throw std::invalid_argument("beam width must be at least 1");
  const Variant v = m.config().variant;
  if (v != Variant::Subword && v != Variant::Char) {
    throw std::invalid_argument("flat beam search needs an atomic-unit variant");
  }
  const std::vector<int> banned = banned_atomic_ids(v);

  std::vector<FlatCand> beam(1);
  beam[0].state = m.atomic_init(src);

  for (int step = 0; step < max_steps; ++step) {
    bool any_live = false;
    std::vector<FlatCand> pool;
    for (const FlatCand& hyp : beam) {
      if (hyp.finished) {
        pool.push_back(hyp);
        continue;
      }
      any_live = true;
      int prev = hyp.ids.empty() ? kBos : hyp.ids.back();
      AtomicStep out = m.atomic_step(src, hyp.state, prev);
      for (int id = 0; id < m.tgt_vocab().size(); ++id) {
        if (std::find(banned.begin(), banned.end(), id) != banned.end()) continue;
        FlatCand next;
        next.state = out.state;
        next.ids = hyp.ids;
        next.log_prob = hyp.log_prob + out.log_probs.value(id);
        if (id == kEos) {
          next.finished = true;
        } else {
          next.ids.push_back(id);
        }
        pool.push_back(std::move(next));
      }
    }
    if (!any_live) break;
    keep_best(pool, width);
    beam = std::move(pool);
  }

  // Best finished if anything finished, otherwise best overall, flagged.
  const FlatCand* best = nullptr;
  for (const FlatCand& hyp : beam) {
    if (hyp.finished && (!best || hyp.log_prob > best->log_prob)) best = &hyp;
  }
  if (!best) best = &beam.front();
  FlatHypothesis result;
  result.ids = best->ids;
  result.log_prob = best->log_prob;
  result.finished = best->finished;
  return result;
}

std::vector<GeneratedWord> beam_words(Model& m, const WordAdvance& adv, int width,
                                      int max_chars) {
  if (width < 1) throw std::invalid_argument("beam width must be at least 1");
  std::vector<InnerCand> beam(1);
  beam[0].h = m.char_init(adv.latents.t, adv.att.context);

  for (int pos = 0; pos < max_chars; ++pos) {
    bool any_live = false;
    std::vector<InnerCand> pool;
    for (const InnerCand& hyp : beam) {
      if (hyp.done) {
        pool.push_back(hyp);
        continue;
      }
      any_live = true;
      int prev = hyp.spelling.empty() ? kBos : hyp.spelling.back();
      CharStepOut out = m.char_step(hyp.h, prev);
      for (int id = 0; id < m.tgt_vocab().size(); ++id) {
        if (!char_emission_allowed(id, pos)) continue;
        InnerCand next;
        next.h = out.h;
        next.spelling = hyp.spelling;
        next.spelling.push_back(id);
        next.log_prob = hyp.log_prob + out.log_probs.value(id);
        next.done = id == kEow || (id == kEos && pos == 0);
        pool.push_back(std::move(next));
      }
    }
    if (!any_live) break;
    keep_best(pool, width);
    beam = std::move(pool);
  }

  std::vector<GeneratedWord> out;
  for (InnerCand& hyp : beam) {
    GeneratedWord w;
    w.spelling = std::move(hyp.spelling);
    w.log_prob = hyp.log_prob;
    w.truncated = !hyp.done;  // ran out of room before any terminator
    out.push_back(std::move(w));
  }
  return out;
}

WordHypothesis hierarchical_beam_search(Model& m, const EncodedSource& src, int width,
                                        int max_words, int max_chars) {
  if (width < 1) throw std::invalid_argument("beam width must be at least 1");
  const Variant v = m.config().variant;
  if (v != Variant::Hierarchical && v != Variant::Lmm) {
    throw std::invalid_argument("hierarchical beam search needs a word-level variant");
  }

  std::vector<OuterCand> beam(1);
  beam[0].state = m.word_init(src);

  for (int wi = 0; wi < max_words; ++wi) {
    bool any_live = false;
    std::vector<OuterCand> pool;
    for (const OuterCand& hyp : beam) {
      if (hyp.finished) {
        pool.push_back(hyp);
        continue;
      }
      any_live = true;
      const std::vector<int> prev =
          hyp.words.empty() ? std::vector<int>{kBos} : hyp.words.back();
      // One latent choice per prefix: every candidate spelling below
      // shares this advance.
      WordAdvance adv = m.word_advance(src, hyp.state, prev, LatentMode::Point);
      for (GeneratedWord& w : beam_words(m, adv, width, max_chars)) {
        OuterCand next;
        next.state = adv.state;
        next.words = hyp.words;
        next.words.push_back(w.spelling);
        next.log_prob = hyp.log_prob + w.log_prob;
        next.finished = w.spelling.size() == 1 && w.spelling[0] == kEos;
        next.truncated = hyp.truncated || w.truncated;
        pool.push_back(std::move(next));
      }
    }
    if (!any_live) break;
    keep_best(pool, width);
    beam = std::move(pool);
  }

  const OuterCand* best = nullptr;
  for (const OuterCand& hyp : beam) {
    if (hyp.finished && (!best || hyp.log_prob > best->log_prob)) best = &hyp;
  }
  if (!best) best = &beam.front();
  WordHypothesis result;
  result.words = best->words;
  result.log_prob = best->log_prob;
  result.finished = best->finished;
  result.truncated = best->truncated;
  return result;
}

namespace {

std::string detok_atomic(const Model& m, const std::vector<int>& ids) {
  std::vector<std::string> units;
  for (int id : ids) units.push_back(m.tgt_vocab().symbol(id));
  if (m.config().variant == Variant::Subword) return bpe_join(units);
  std::string out;  // characters carry their own spacing
  for (const auto& u : units) out += u;
  return out;
}

std::string detok_words(const Model& m, const std::vector<std::vector<int>>& words) {
  std::string out;
  for (const auto& spelling : words) {
    if (spelling.size() == 1 && spelling[0] == kEos) continue;
    std::string word;
    for (int id : spelling) {
      if (id == kEow) break;
      word += m.tgt_vocab().symbol(id);
    }
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

}  // namespace

std::string translate_line(Model& m, const std::string& line, int width) {
  std::vector<int> src_ids = m.source_ids(line);
  if (src_ids.empty()) return "";
  EncodedSource src = m.encode(src_ids);
  const ModelConfig& c = m.config();
  if (c.variant == Variant::Subword || c.variant == Variant::Char) {
    // Unit budget: characters run several units per source subword.
    int max_steps = 8 * static_cast<int>(src_ids.size()) + 40;
    return detok_atomic(m, beam_search(m, src, width, max_steps).ids);
  }
  int max_words = 2 * static_cast<int>(src_ids.size()) + 8;
  WordHypothesis best = hierarchical_beam_search(m, src, width, max_words, c.max_word_len);
  return detok_words(m, best.words);
}

std::vector<std::string> translate_lines(Model& m, const std::vector<std::string>& lines,
                                         int width) {
  std::vector<std::string> out;
  out.reserve(lines.size());
  for (const auto& line : lines) out.push_back(translate_line(m, line, width));
  return out;
}

}  // namespace lmm
