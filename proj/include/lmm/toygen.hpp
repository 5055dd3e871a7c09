#pragma once

// Deterministic generator for a miniature agglutinative language paired
// with English glosses. Target words are a stem plus zero or more
// suffixes chosen by vowel harmony: stems whose last vowel is front
// (e, i) take front allomorphs (-e, -de, -den, -ler), stems whose last
// vowel is back (a, o, u) take back allomorphs (-a, -da, -dan, -lar).
// Verb suffixes (-di, -iyor, -mek) are invariant. Suffixes attach by
// plain concatenation — no stem mutation — so every surface form splits
// exactly into its gold morphs.
//
// Generation is a pure function of (seed, index): pair i of a corpus is
// derived from a SplitMix64 stream keyed by mix(seed, i). Indices 0-18
// follow a fixed coverage schedule (front/back noun bundles and the
// three verb tenses) so that every suffix allomorph occurs even in small
// corpora; stems are still drawn from the seeded stream. All later
// indices draw their feature bundles uniformly.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lmm::toy {

enum class Category { Noun, Verb };
enum class Number { Sg, Pl };
enum class Case { Nom, Dat, Loc, Abl };
enum class Tense { Past, Prog, Inf };

// Nouns set number+cas, verbs set tense.
struct Bundle {
  std::optional<Number> number;
  std::optional<Case> cas;
  std::optional<Tense> tense;
};

struct Stem {
  std::string form;
  Category category;
  // English realizations: sg/pl for nouns, base/past/-ing for verbs.
  std::string eng_a, eng_b, eng_c;
};

const std::vector<Stem>& stems();  // 12 nouns + 8 verbs
const Stem& find_stem(const std::string& form);  // throws on unknown stem
bool front_harmony(const std::string& stem);

// Surface form by concatenation ("ev" + {Pl, Abl} -> "evlerden").
// Throws std::invalid_argument on a bundle incompatible with the stem's
// category (e.g. tense on a noun).
std::string inflect(const std::string& stem, const Bundle& bundle);
// Same word with morph boundaries marked: "ev+ler+den".
std::string segment(const std::string& stem, const Bundle& bundle);

// Recover "stem+suffix+..." from a surface form by parsing against the
// grammar (longest stem wins, harmony must agree). Words that parse as a
// bare stem come back unchanged; unparseable words also come back
// unchanged so downstream morph scoring degrades gracefully.
std::string analyze(const std::string& surface);

struct ToyPair {
  std::string src;  // English
  std::string tgt;  // toy language
  std::string seg;  // gold segmentation of tgt, morphs joined by '+'
};

ToyPair gen_pair(uint64_t seed, uint64_t index);

struct ToyCorpus {
  std::vector<std::string> src, tgt, seg;
};

ToyCorpus gen_corpus(uint64_t seed, int n_pairs);

// Writes <stem_path>.src / .tgt / .seg, one sentence per line.
void write_corpus(const ToyCorpus& corpus, const std::string& stem_path);

}  // namespace lmm::toy
