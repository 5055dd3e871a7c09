#include "lmm/toygen.hpp"

#include <stdexcept>

#include "lmm/rng.hpp"
#include "lmm/tokenization.hpp"

namespace lmm::toy {

const std::vector<Stem>& stems() {
  static const std::vector<Stem> kStems = {
      // Nouns: form, {singular, plural, -} — six front, six back.
      {"ev", Category::Noun, "house", "houses", ""},
      {"kedi", Category::Noun, "cat", "cats", ""},
      {"sehir", Category::Noun, "city", "cities", ""},
      {"deniz", Category::Noun, "sea", "seas", ""},
      {"gemi", Category::Noun, "ship", "ships", ""},
      {"bebek", Category::Noun, "baby", "babies", ""},
      {"okul", Category::Noun, "school", "schools", ""},
      {"araba", Category::Noun, "car", "cars", ""},
      {"kutu", Category::Noun, "box", "boxes", ""},
      {"yol", Category::Noun, "road", "roads", ""},
      {"orman", Category::Noun, "forest", "forests", ""},
      {"kitap", Category::Noun, "book", "books", ""},
      // Verbs: form, {base, past, -ing}.
      {"git", Category::Verb, "go", "went", "going"},
      {"gel", Category::Verb, "come", "came", "coming"},
      {"ver", Category::Verb, "give", "gave", "giving"},
      {"yaz", Category::Verb, "write", "wrote", "writing"},
      {"oku", Category::Verb, "read", "read", "reading"},
      {"al", Category::Verb, "take", "took", "taking"},
      {"bak", Category::Verb, "look", "looked", "looking"},
      {"kos", Category::Verb, "run", "ran", "running"},
  };
  return kStems;
}

const Stem& find_stem(const std::string& form) {
  for (const auto& s : stems()) {
    if (s.form == form) return s;
  }
  throw std::invalid_argument("unknown stem: " + form);
}

bool front_harmony(const std::string& stem) {
  for (auto it = stem.rbegin(); it != stem.rend(); ++it) {
    switch (*it) {
      case 'e':
      case 'i':
        return true;
      case 'a':
      case 'o':
      case 'u':
        return false;
      default:
        break;
    }
  }
  throw std::invalid_argument("stem has no vowel: " + stem);
}

namespace {

std::vector<std::string> morphs(const std::string& stem_form, const Bundle& b) {
  const Stem& stem = find_stem(stem_form);
  std::vector<std::string> parts = {stem.form};
  if (stem.category == Category::Noun) {
    if (!b.number || !b.cas || b.tense) {
      throw std::invalid_argument("noun " + stem_form + " takes a number and a case only");
    }
    bool front = front_harmony(stem.form);
    if (*b.number == Number::Pl) parts.push_back(front ? "ler" : "lar");
    switch (*b.cas) {
      case Case::Nom:
        break;
      case Case::Dat:
        parts.push_back(front ? "e" : "a");
        break;
      case Case::Loc:
        parts.push_back(front ? "de" : "da");
        break;
      case Case::Abl:
        parts.push_back(front ? "den" : "dan");
        break;
    }
  } else {
    if (!b.tense || b.number || b.cas) {
      throw std::invalid_argument("verb " + stem_form + " takes a tense only");
    }
    switch (*b.tense) {
      case Tense::Past:
        parts.push_back("di");
        break;
      case Tense::Prog:
        parts.push_back("iyor");
        break;
      case Tense::Inf:
        parts.push_back("mek");
        break;
    }
  }
  return parts;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

std::string inflect(const std::string& stem, const Bundle& bundle) {
  return join(morphs(stem, bundle), "");
}

std::string segment(const std::string& stem, const Bundle& bundle) {
  return join(morphs(stem, bundle), "+");
}

std::string analyze(const std::string& surface) {
  const Stem* best = nullptr;
  for (const auto& s : stems()) {
    if (surface.compare(0, s.form.size(), s.form) == 0) {
      if (!best || s.form.size() > best->form.size()) best = &s;
    }
  }
  if (!best) return surface;
  std::string rest = surface.substr(best->form.size());
  std::vector<std::string> parts = {best->form};
  if (best->category == Category::Verb) {
    for (const char* suf : {"di", "iyor", "mek"}) {
      if (rest == suf) {
        parts.push_back(suf);
        return join(parts, "+");
      }
    }
    return surface;  // bare verb stem or no tense parse: leave unchanged
  }
  bool front = front_harmony(best->form);
  const std::string pl = front ? "ler" : "lar";
  if (rest.compare(0, pl.size(), pl) == 0) {
    parts.push_back(pl);
    rest = rest.substr(pl.size());
  }
  if (!rest.empty()) {
    // Longer case allomorphs first so "den" is not read as "de"+junk.
    const std::vector<std::string> cases = front
        ? std::vector<std::string>{"den", "de", "e"}
        : std::vector<std::string>{"dan", "da", "a"};
    bool matched = false;
    for (const auto& suf : cases) {
      if (rest == suf) {
        parts.push_back(suf);
        matched = true;
        break;
      }
    }
    if (!matched) return surface;
  }
  return join(parts, "+");
}

namespace {

struct Fragment {
  std::string src, tgt, seg;
};

const Stem& draw_stem(Rng& rng, Category cat, std::optional<bool> front = std::nullopt) {
  std::vector<const Stem*> pool;
  for (const auto& s : stems()) {
    if (s.category != cat) continue;
    if (front && front_harmony(s.form) != *front) continue;
    pool.push_back(&s);
  }
  return *pool[rng.below(pool.size())];
}

std::string noun_src(const Stem& stem, Number n, Case c) {
  const std::string& noun = n == Number::Sg ? stem.eng_a : stem.eng_b;
  switch (c) {
    case Case::Nom:
      return "the " + noun;
    case Case::Dat:
      return "to the " + noun;
    case Case::Loc:
      return "at the " + noun;
    case Case::Abl:
      return "from the " + noun;
  }
  return noun;
}

std::string verb_src(const Stem& stem, Tense t) {
  switch (t) {
    case Tense::Past:
      return "he " + stem.eng_b;
    case Tense::Prog:
      return "he is " + stem.eng_c;
    case Tense::Inf:
      return "to " + stem.eng_a;
  }
  return stem.eng_a;
}

Fragment noun_fragment(const Stem& stem, Number n, Case c) {
  Bundle b{n, c, std::nullopt};
  return {noun_src(stem, n, c), inflect(stem.form, b), segment(stem.form, b)};
}

Fragment verb_fragment(const Stem& stem, Tense t) {
  Bundle b{std::nullopt, std::nullopt, t};
  return {verb_src(stem, t), inflect(stem.form, b), segment(stem.form, b)};
}

Number draw_number(Rng& rng) { return rng.below(2) ? Number::Pl : Number::Sg; }
Case draw_case(Rng& rng) { return static_cast<Case>(rng.below(4)); }
Tense draw_tense(Rng& rng) { return static_cast<Tense>(rng.below(3)); }

// Fixed schedule for indices 0-18: eight noun bundles on a front stem,
// the same eight on a back stem, then the three verb tenses. Covers
// every allomorph regardless of seed; the stems themselves are drawn.
ToyPair forced_pair(Rng& rng, uint64_t index) {
  static const std::pair<Number, Case> kNounSchedule[8] = {
      {Number::Sg, Case::Dat}, {Number::Sg, Case::Loc}, {Number::Sg, Case::Abl},
      {Number::Sg, Case::Nom}, {Number::Pl, Case::Dat}, {Number::Pl, Case::Loc},
      {Number::Pl, Case::Abl}, {Number::Pl, Case::Nom}};
  Fragment f;
  if (index < 8) {
    auto [n, c] = kNounSchedule[index];
    f = noun_fragment(draw_stem(rng, Category::Noun, true), n, c);
  } else if (index < 16) {
    auto [n, c] = kNounSchedule[index - 8];
    f = noun_fragment(draw_stem(rng, Category::Noun, false), n, c);
  } else {
    f = verb_fragment(draw_stem(rng, Category::Verb), static_cast<Tense>(index - 16));
  }
  return {f.src, f.tgt, f.seg};
}

}  // namespace

ToyPair gen_pair(uint64_t seed, uint64_t index) {
  Rng rng(Rng::mix(seed, index));
  if (index < 19) return forced_pair(rng, index);

  switch (rng.below(3)) {
    case 0: {  // noun phrase
      const Stem& stem = draw_stem(rng, Category::Noun);
      Fragment f = noun_fragment(stem, draw_number(rng), draw_case(rng));
      return {f.src, f.tgt, f.seg};
    }
    case 1: {  // verb phrase
      const Stem& stem = draw_stem(rng, Category::Verb);
      Fragment f = verb_fragment(stem, draw_tense(rng));
      return {f.src, f.tgt, f.seg};
    }
    default: {  // verb + oblique noun, object-before-verb in the target
      const Stem& noun = draw_stem(rng, Category::Noun);
      const Stem& verb = draw_stem(rng, Category::Verb);
      // Nominative is excluded here: "he went the school" is not English.
      Case c = static_cast<Case>(1 + rng.below(3));
      Fragment nf = noun_fragment(noun, draw_number(rng), c);
      Fragment vf = verb_fragment(verb, draw_tense(rng));
      return {vf.src + " " + nf.src, nf.tgt + " " + vf.tgt, nf.seg + " " + vf.seg};
    }
  }
}

ToyCorpus gen_corpus(uint64_t seed, int n_pairs) {
  if (n_pairs < 1) throw std::invalid_argument("n_pairs must be >= 1");
  ToyCorpus corpus;
  for (int i = 0; i < n_pairs; ++i) {
    ToyPair p = gen_pair(seed, static_cast<uint64_t>(i));
    corpus.src.push_back(p.src);
    corpus.tgt.push_back(p.tgt);
    corpus.seg.push_back(p.seg);
  }
  return corpus;
}

void write_corpus(const ToyCorpus& corpus, const std::string& stem_path) {
  write_lines(stem_path + ".src", corpus.src);
  write_lines(stem_path + ".tgt", corpus.tgt);
  write_lines(stem_path + ".seg", corpus.seg);
}

}  // namespace lmm::toy
