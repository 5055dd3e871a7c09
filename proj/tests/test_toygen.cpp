#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "lmm/tokenization.hpp"
#include "lmm/toygen.hpp"

using namespace lmm;
using namespace lmm::toy;

namespace {

Bundle noun_bundle(Number n, Case c) { return Bundle{n, c, std::nullopt}; }
Bundle verb_bundle(Tense t) { return Bundle{std::nullopt, std::nullopt, t}; }

std::vector<Bundle> all_noun_bundles() {
  std::vector<Bundle> out;
  for (Number n : {Number::Sg, Number::Pl}) {
    for (Case c : {Case::Nom, Case::Dat, Case::Loc, Case::Abl}) {
      out.push_back(noun_bundle(n, c));
    }
  }
  return out;
}

std::string strip_plus(const std::string& seg) {
  std::string out;
  for (char ch : seg) {
    if (ch != '+') out += ch;
  }
  return out;
}

}  // namespace

TEST_CASE("harmony picks the allomorph from the stem's last vowel") {
  // Front stem "ev" vs back stem "okul", worked by hand from the rule.
  CHECK(inflect("ev", noun_bundle(Number::Sg, Case::Dat)) == "eve");
  CHECK(inflect("okul", noun_bundle(Number::Sg, Case::Dat)) == "okula");
  CHECK(inflect("ev", noun_bundle(Number::Sg, Case::Loc)) == "evde");
  CHECK(inflect("okul", noun_bundle(Number::Sg, Case::Loc)) == "okulda");
  CHECK(inflect("ev", noun_bundle(Number::Pl, Case::Abl)) == "evlerden");
  CHECK(inflect("okul", noun_bundle(Number::Pl, Case::Abl)) == "okullardan");
}

TEST_CASE("verb suffixes are invariant") {
  CHECK(inflect("git", verb_bundle(Tense::Past)) == "gitdi");
  CHECK(inflect("git", verb_bundle(Tense::Prog)) == "gitiyor");
  CHECK(inflect("git", verb_bundle(Tense::Inf)) == "gitmek");
  CHECK(inflect("al", verb_bundle(Tense::Past)) == "aldi");
}

TEST_CASE("the identity bundle leaves the stem unchanged") {
  for (const auto& s : stems()) {
    if (s.category == Category::Noun) {
      CHECK(inflect(s.form, noun_bundle(Number::Sg, Case::Nom)) == s.form);
    }
  }
}

TEST_CASE("incompatible bundles are rejected") {
  CHECK_THROWS_AS(inflect("ev", verb_bundle(Tense::Past)), std::invalid_argument);
  CHECK_THROWS_AS(inflect("git", noun_bundle(Number::Sg, Case::Nom)), std::invalid_argument);
  CHECK_THROWS_AS(inflect("ev", Bundle{Number::Sg, std::nullopt, std::nullopt}),
                  std::invalid_argument);
  CHECK_THROWS_AS(inflect("gavagai", noun_bundle(Number::Sg, Case::Nom)),
                  std::invalid_argument);
}

TEST_CASE("inflect is injective per stem over valid bundles") {
  for (const auto& s : stems()) {
    std::set<std::string> surfaces;
    int n_bundles = 0;
    if (s.category == Category::Noun) {
      for (const auto& b : all_noun_bundles()) {
        surfaces.insert(inflect(s.form, b));
        ++n_bundles;
      }
    } else {
      for (Tense t : {Tense::Past, Tense::Prog, Tense::Inf}) {
        surfaces.insert(inflect(s.form, verb_bundle(t)));
        ++n_bundles;
      }
    }
    CHECK(static_cast<int>(surfaces.size()) == n_bundles);
  }
}

TEST_CASE("segmentation concatenates back to the surface form") {
  for (const auto& s : stems()) {
    if (s.category == Category::Noun) {
      for (const auto& b : all_noun_bundles()) {
        CHECK(strip_plus(segment(s.form, b)) == inflect(s.form, b));
      }
    } else {
      for (Tense t : {Tense::Past, Tense::Prog, Tense::Inf}) {
        CHECK(strip_plus(segment(s.form, verb_bundle(t))) == inflect(s.form, verb_bundle(t)));
      }
    }
  }
}

TEST_CASE("analyze inverts inflect for every stem and bundle") {
  for (const auto& s : stems()) {
    if (s.category == Category::Noun) {
      for (const auto& b : all_noun_bundles()) {
        CHECK(analyze(inflect(s.form, b)) == segment(s.form, b));
      }
    } else {
      for (Tense t : {Tense::Past, Tense::Prog, Tense::Inf}) {
        CHECK(analyze(inflect(s.form, verb_bundle(t))) == segment(s.form, verb_bundle(t)));
      }
    }
  }
}

TEST_CASE("analyze leaves unparseable words unchanged") {
  CHECK(analyze("xyz") == "xyz");
  CHECK(analyze("evq") == "evq");       // stem + junk
  CHECK(analyze("evlar") == "evlar");   // harmony-violating suffix
  CHECK(analyze("gitde") == "gitde");   // noun suffix on a verb
}

TEST_CASE("generation is a pure function of seed and index") {
  ToyPair a = gen_pair(7, 123);
  ToyPair b = gen_pair(7, 123);
  CHECK(a.src == b.src);
  CHECK(a.tgt == b.tgt);
  CHECK(a.seg == b.seg);
  // Same pair regardless of what else was generated around it.
  ToyCorpus corpus = gen_corpus(7, 200);
  CHECK(corpus.src[123] == a.src);
  CHECK(corpus.tgt[123] == a.tgt);
  CHECK(corpus.seg[123] == a.seg);
}

TEST_CASE("different seeds give different corpora") {
  ToyCorpus a = gen_corpus(1, 100);
  ToyCorpus b = gen_corpus(2, 100);
  CHECK(a.tgt != b.tgt);
}

TEST_CASE("every target line segmentation matches its surface line") {
  ToyCorpus corpus = gen_corpus(11, 300);
  for (size_t i = 0; i < corpus.tgt.size(); ++i) {
    auto words = split_ws(corpus.tgt[i]);
    auto segs = split_ws(corpus.seg[i]);
    REQUIRE(words.size() == segs.size());
    for (size_t w = 0; w < words.size(); ++w) {
      CHECK(strip_plus(segs[w]) == words[w]);
    }
  }
}

TEST_CASE("a 200-pair corpus exercises every suffix allomorph") {
  const std::vector<std::string> allomorphs = {"+e",   "+a",   "+de", "+da",  "+den", "+dan",
                                               "+ler", "+lar", "+di", "+iyor", "+mek"};
  for (uint64_t seed : {1u, 2u, 3u, 42u}) {
    ToyCorpus corpus = gen_corpus(seed, 200);
    std::string all;
    for (const auto& line : corpus.seg) all += line + " ";
    for (const auto& suf : allomorphs) {
      INFO("seed ", seed, " allomorph ", suf);
      CHECK(all.find(suf + " ") != std::string::npos);
    }
  }
}

TEST_CASE("sources are english and targets stay in the toy alphabet") {
  ToyCorpus corpus = gen_corpus(5, 250);
  for (const auto& line : corpus.tgt) {
    for (char ch : line) {
      bool ok = (ch >= 'a' && ch <= 'z') || ch == ' ';
      CHECK(ok);
    }
  }
  int with_he = 0;
  for (const auto& line : corpus.src) {
    if (line.find("he ") == 0) ++with_he;
  }
  CHECK(with_he > 0);
}

TEST_CASE("corpus writer emits aligned files") {
  ToyCorpus corpus = gen_corpus(3, 25);
  std::string base = "toy_test_corpus";
  write_corpus(corpus, base);
  CHECK(read_lines(base + ".src") == corpus.src);
  CHECK(read_lines(base + ".tgt") == corpus.tgt);
  CHECK(read_lines(base + ".seg") == corpus.seg);
  for (const char* ext : {".src", ".tgt", ".seg"}) {
    std::remove((base + ext).c_str());
  }
}

TEST_CASE("corpus size is respected and must be positive") {
  CHECK(gen_corpus(1, 1).src.size() == 1);
  CHECK(gen_corpus(1, 57).tgt.size() == 57);
  CHECK_THROWS_AS(gen_corpus(1, 0), std::invalid_argument);
}
