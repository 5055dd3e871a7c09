// Acceptance suite: eleven end-to-end checks, one printed line each.
// Every check runs even when an earlier one fails; the exit code is the
// number of failures. Tolerances, seeds and sizes are pinned here on
// purpose — they are the contract, not tunables.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <lmm/config.hpp>
#include <lmm/distributions.hpp>
#include <lmm/layers.hpp>
#include <lmm/metrics.hpp>
#include <lmm/model.hpp>
#include <lmm/search.hpp>
#include <lmm/tokenization.hpp>
#include <lmm/toygen.hpp>
#include <lmm/training.hpp>

using namespace lmm;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::vector<std::string> g_notes;

void note(const std::string& msg) { g_notes.push_back(msg); }

void run(int number, const std::string& name, const std::function<bool()>& body) {
  auto t0 = std::chrono::steady_clock::now();
  bool ok = false;
  try {
    ok = body();
  } catch (const std::exception& e) {
    note(std::string("exception: ") + e.what());
  }
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s  %2d  %s (%.1fs)\n", ok ? "PASS" : "FAIL", number, name.c_str(), seconds);
  if (!ok) {
    ++g_failures;
    for (const auto& m : g_notes) std::printf("          %s\n", m.c_str());
  }
  g_notes.clear();
  std::fflush(stdout);
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// ---------------------------------------------------------------- 1, 2

bool masses_vs_monte_carlo() {
  const double lo = -0.1, hi = 1.1;
  const int n = 100000;
  Rng rng(617);
  bool ok = true;
  auto t0 = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 20; ++trial) {
    double a = 0.1 + 4.9 * rng.uniform();
    double b = 0.1 + 4.9 * rng.uniform();
    SparseMassValues m = hardkuma_masses(a, b, lo, hi);
    // Independent sampler: inverse CDF, stretch, rectify.
    int zeros = 0, ones = 0;
    for (int i = 0; i < n; ++i) {
      double u = std::min(std::max(rng.uniform(), 1e-12), 1.0 - 1e-12);
      double k = std::pow(1.0 - std::pow(1.0 - u, 1.0 / b), 1.0 / a);
      double t = lo + (hi - lo) * k;
      double f = std::min(1.0, std::max(0.0, t));
      if (f == 0.0) ++zeros;
      else if (f == 1.0) ++ones;
    }
    double e0 = static_cast<double>(zeros) / n;
    double e1 = static_cast<double>(ones) / n;
    double ec = 1.0 - e0 - e1;
    if (!close(e0, m.p_zero, 0.005) || !close(e1, m.p_one, 0.005) ||
        !close(ec, m.p_cont, 0.005)) {
      note("a=" + std::to_string(a) + " b=" + std::to_string(b) + ": closed-form (" +
           std::to_string(m.p_zero) + ", " + std::to_string(m.p_one) + ", " +
           std::to_string(m.p_cont) + ") vs empirical (" + std::to_string(e0) + ", " +
           std::to_string(e1) + ", " + std::to_string(ec) + ")");
      ok = false;
    }
  }
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (seconds >= 5.0) {
    note("runtime " + std::to_string(seconds) + "s exceeds the 5s budget");
    ok = false;
  }
  return ok;
}

bool analytic_uniform_masses() {
  SparseMassValues m = hardkuma_masses(1.0, 1.0, -0.1, 1.1);
  bool ok = true;
  if (!close(m.p_zero, 1.0 / 12.0, 1e-12) || !close(m.p_one, 1.0 / 12.0, 1e-12) ||
      !close(m.p_cont, 5.0 / 6.0, 1e-12)) {
    note("a=b=1 masses (" + std::to_string(m.p_zero) + ", " + std::to_string(m.p_one) +
         ", " + std::to_string(m.p_cont) + ") are not (1/12, 1/12, 5/6)");
    ok = false;
  }
  Rng rng(618);
  for (int trial = 0; trial < 20; ++trial) {
    double a = 0.1 + 4.9 * rng.uniform();
    double b = 0.1 + 4.9 * rng.uniform();
    SparseMassValues t = hardkuma_masses(a, b, -0.1, 1.1);
    if (!close(t.p_zero + t.p_one + t.p_cont, 1.0, 1e-12)) {
      note("triple does not sum to 1 at a=" + std::to_string(a) + " b=" + std::to_string(b));
      ok = false;
    }
  }
  return ok;
}

// ------------------------------------------------------------------- 3

const std::vector<std::string> kSrcLines = {"xy z", "z xy", "y z", "x"};
const std::vector<std::string> kTgtLines = {"ab cd", "cd a", "b cd", "da"};

Model tiny_model(Variant v, int hidden = 6, uint64_t seed = 99) {
  ModelConfig c;
  c.variant = v;
  c.embedding = hidden;
  c.hidden = hidden;
  c.lemma_dim = 3;
  c.features = 2;
  c.mlp_hidden = 5;
  c.max_word_len = 8;
  c.seed = seed;
  return Model(c, build_char_vocab(kSrcLines), build_char_vocab(kTgtLines), BpeModel{});
}

bool gradient_suite() {
  auto t0 = std::chrono::steady_clock::now();
  const double tol = 1e-4;
  bool ok = true;
  auto expect = [&](const std::string& what, double err) {
    if (!(err <= tol)) {
      note(what + ": relative error " + std::to_string(err));
      ok = false;
    }
  };

  Rng rng(42);
  Tensor x = Tensor::from({4}, {0.31, 0.87, 1.21, 0.55}, true);
  Tensor y = Tensor::from({4}, {1.13, 0.42, 0.78, 1.62}, true);

  using F = std::function<Tensor(const Tensor&)>;
  std::vector<std::pair<std::string, F>> unary = {
      {"add", [&](const Tensor& t) { return sum(add(t, y)); }},
      {"add-const", [](const Tensor& t) { return sum(add(t, 0.7)); }},
      {"sub", [&](const Tensor& t) { return sum(sub(t, y)); }},
      {"sub-from-const", [](const Tensor& t) { return sum(sub(2.0, t)); }},
      {"mul", [&](const Tensor& t) { return sum(mul(t, y)); }},
      {"mul-const", [](const Tensor& t) { return sum(mul(t, -1.4)); }},
      {"div", [&](const Tensor& t) { return sum(div(t, y)); }},
      {"div-by", [&](const Tensor& t) { return sum(div(y, t)); }},
      {"neg", [](const Tensor& t) { return sum(neg(t)); }},
      {"tanh", [](const Tensor& t) { return sum(tanh(t)); }},
      {"sigmoid", [](const Tensor& t) { return sum(sigmoid(t)); }},
      {"softplus", [](const Tensor& t) { return sum(softplus(t)); }},
      {"exp", [](const Tensor& t) { return sum(exp(t)); }},
      {"log", [](const Tensor& t) { return sum(log(t)); }},
      {"pow-const", [](const Tensor& t) { return sum(pow(t, 1.7)); }},
      {"pow-tensor", [&](const Tensor& t) { return sum(pow(t, y)); }},
      {"min-const", [](const Tensor& t) { return sum(min_const(t, 0.9)); }},
      {"max-const", [](const Tensor& t) { return sum(max_const(t, 0.6)); }},
      {"clamp", [](const Tensor& t) { return sum(clamp(t, 0.4, 1.1)); }},
      {"mean", [](const Tensor& t) { return mean(t); }},
  };
  for (auto& [name, f] : unary) expect("elementwise " + name, finite_diff_check(f, x));

  {
    Tensor a = Tensor::uniform({3, 4}, -1.0, 1.0, rng, true);
    Tensor b = Tensor::uniform({4, 2}, -1.0, 1.0, rng, true);
    expect("matmul lhs",
           finite_diff_check([&](const Tensor& t) { return sum(matmul(t, b)); }, a));
    expect("matmul rhs",
           finite_diff_check([&](const Tensor& t) { return sum(matmul(a, t)); }, b));
  }
  expect("softmax+nll", finite_diff_check(
                            [](const Tensor& t) { return neg(pick(log_softmax(t), 2)); }, x));

  {
    ParamStore ps;
    GruCell cell(ps, "g", 4, 5, rng);
    Tensor gx = Tensor::uniform({4}, -1.0, 1.0, rng, true);
    Tensor gh = Tensor::uniform({5}, -1.0, 1.0, rng, true);
    std::vector<Tensor> params = ps.tensors();
    params.push_back(gx);
    params.push_back(gh);
    expect("gru cell",
           finite_diff_check_params([&]() { return sum(cell.step(gx, gh)); }, params));
  }
  {
    ParamStore ps;
    Attention att(ps, "a", 4, rng);
    Tensor enc = Tensor::uniform({3, 4}, -1.0, 1.0, rng, true);
    Tensor h = Tensor::uniform({4}, -1.0, 1.0, rng, true);
    std::vector<Tensor> params = ps.tensors();
    params.push_back(enc);
    params.push_back(h);
    expect("attention",
           finite_diff_check_params([&]() { return sum(att(h, enc).hhat); }, params));
  }
  {
    ParamStore ps;
    CharCompose cc(ps, "c", 3, 4, 5, rng);
    Tensor e0 = Tensor::uniform({3}, -1.0, 1.0, rng, true);
    Tensor e1 = Tensor::uniform({3}, -1.0, 1.0, rng, true);
    Tensor e2 = Tensor::uniform({3}, -1.0, 1.0, rng, true);
    std::vector<Tensor> params = ps.tensors();
    params.insert(params.end(), {e0, e1, e2});
    expect("char compose",
           finite_diff_check_params([&]() { return sum(cc({e0, e1, e2})); }, params));
  }
  {
    Tensor a = Tensor::from({2}, {0.7, 1.8}, true);
    Tensor b = Tensor::from({2}, {1.3, 0.6}, true);
    Tensor eps = Tensor::from({2}, {0.31, 0.84});
    expect("reparameterized sample wrt a,b",
           finite_diff_check_params(
               [&]() { return sum(kuma_sample(KumaParams{a, b}, eps)); }, {a, b}));
    auto masses = [&]() {
      HardKumaParams p;
      p.kuma = KumaParams{a, b};
      p.support_lo = -0.1;
      p.support_hi = 1.1;
      return hardkuma_masses(p);
    };
    expect("mass at zero wrt a,b",
           finite_diff_check_params([&]() { return sum(masses().p_zero); }, {a, b}));
    expect("mass at one wrt a,b",
           finite_diff_check_params([&]() { return sum(masses().p_one); }, {a, b}));
  }

  // Per-word training loss with frozen noise, on a three-character
  // word. The penalty recomputes its head inputs as constants, so the
  // spelling loss is differenced over every parameter while the
  // penalty-bearing total is differenced over the head it trains.
  {
    Model m = tiny_model(Variant::Lmm);
    std::vector<int> src_ids = m.source_ids("xy");
    const Vocab& tv = m.tgt_vocab();
    std::vector<int> spelling = {tv.id("a"), tv.id("b"), tv.id("c"), kEow};
    const double rho = 0.4;

    auto advance = [&]() {
      Rng noise(4242);
      EncodedSource src = m.encode(src_ids);
      WordState st = m.word_init(src);
      return m.word_advance(src, st, {kBos}, LatentMode::Sample, &noise);
    };
    expect("word loss wrt all parameters",
           finite_diff_check_params(
               [&]() {
                 WordAdvance adv = advance();
                 return neg(m.word_log_prob(adv, spelling));
               },
               m.params().tensors()));

    std::vector<Tensor> ab_params;
    for (const auto& [name, t] : m.params().entries()) {
      if (name.rfind("heads.ab.", 0) == 0) ab_params.push_back(t);
    }
    expect("word loss plus penalty wrt its head",
           finite_diff_check_params(
               [&]() {
                 WordAdvance adv = advance();
                 Tensor nll = neg(m.word_log_prob(adv, spelling));
                 return add(nll, mul(m.word_regularizer(adv), rho));
               },
               ab_params));
  }

  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (seconds >= 30.0) {
    note("runtime " + std::to_string(seconds) + "s exceeds the 30s budget");
    ok = false;
  }
  return ok;
}

// ------------------------------------------------------------------- 4

bool bpe_oracle() {
  bool ok = true;
  std::map<std::string, int64_t> freq = {
      {"low", 5}, {"lower", 2}, {"newest", 6}, {"widest", 3}};
  BpeModel bpe = bpe_learn(freq, 10);
  if (bpe.merges.size() < 2 ||
      bpe.merges[0] != std::pair<std::string, std::string>("e", "s") ||
      bpe.merges[1] != std::pair<std::string, std::string>("es", "t")) {
    note("first merges are not (e,s) then (es,t)");
    ok = false;
  }
  for (const auto& [w, n] : freq) {
    (void)n;
    std::vector<std::string> once = bpe.apply_word(w);
    if (bpe.apply_symbols(once) != once) {
      note("re-applying the merges changed the segmentation of '" + w + "'");
      ok = false;
    }
  }

  toy::ToyCorpus corpus = toy::gen_corpus(7, 1200);
  BpeModel toy_bpe = bpe_learn(count_words(corpus.tgt), 30);
  std::vector<std::string> words;
  for (const auto& line : corpus.tgt) {
    for (const auto& w : split_ws(line)) words.push_back(w);
  }
  if (words.size() < 1000) {
    note("toy corpus yields under 1000 words");
    return false;
  }
  for (int i = 0; i < 1000; ++i) {
    const std::string& w = words[i];
    if (bpe_join(toy_bpe.apply_word(w)) != w) {
      note("detokenization lost '" + w + "'");
      return false;
    }
    std::vector<std::string> once = toy_bpe.apply_word(w);
    if (toy_bpe.apply_symbols(once) != once) {
      note("re-applying the merges changed the segmentation of '" + w + "'");
      return false;
    }
  }
  return ok;
}

// ------------------------------------------------------------------- 5

bool exhaustive_search_equivalence() {
  bool ok = true;

  // Flat: a vocabulary of exactly three symbols, three decode steps.
  {
    std::vector<std::string> src = {"xy", "z"};
    std::vector<std::string> tgt = {"abc", "cab", "bca"};
    ModelConfig c;
    c.variant = Variant::Char;
    c.embedding = 6;
    c.hidden = 6;
    c.max_word_len = 8;
    c.seed = 7;
    Model m(c, build_char_vocab(src), build_char_vocab(tgt), BpeModel{});
    EncodedSource enc = m.encode(m.source_ids("xy"));

    std::vector<int> chars;
    for (int id = kEow + 1; id < m.tgt_vocab().size(); ++id) chars.push_back(id);
    if (chars.size() != 3) {
      note("flat toy alphabet is not 3 symbols");
      return false;
    }
    auto score = [&](const std::vector<int>& seq) {
      AtomicState st = m.atomic_init(enc);
      int prev = kBos;
      double total = 0;
      for (int id : seq) {
        AtomicStep out = m.atomic_step(enc, st, prev);
        total += out.log_probs.value(id);
        st = out.state;
        prev = id;
      }
      return total;
    };
    std::vector<std::vector<int>> all = {{kEos}};
    for (int a : chars) {
      all.push_back({a, kEos});
      for (int b : chars) all.push_back({a, b, kEos});
    }
    double best_lp = -1e300;
    std::vector<int> best;
    for (const auto& seq : all) {
      double lp = score(seq);
      if (lp > best_lp) {
        best_lp = lp;
        best = std::vector<int>(seq.begin(), seq.end() - 1);
      }
    }
    FlatHypothesis h = beam_search(m, enc, 500, 3);
    if (!h.finished || h.ids != best || !close(h.log_prob, best_lp, 1e-9)) {
      note("flat beam disagrees with enumeration over 13 terminated sequences");
      ok = false;
    }
  }

  // Hierarchical: up to three words (sentence terminator included)
  // of up to three characters over a three-symbol alphabet.
  {
    std::vector<std::string> src = {"xy", "z"};
    std::vector<std::string> tgt = {"ab", "bc", "ca"};
    ModelConfig c;
    c.variant = Variant::Lmm;
    c.embedding = 6;
    c.hidden = 6;
    c.lemma_dim = 3;
    c.features = 2;
    c.mlp_hidden = 5;
    c.max_word_len = 8;
    c.seed = 23;
    Model m(c, build_char_vocab(src), build_char_vocab(tgt), BpeModel{});
    EncodedSource enc = m.encode(m.source_ids("z"));

    std::vector<int> chars;
    for (int id = kEow + 1; id < m.tgt_vocab().size(); ++id) chars.push_back(id);
    if (chars.size() != 3) {
      note("hierarchical toy alphabet is not 3 symbols");
      return false;
    }
    auto score = [&](const std::vector<std::vector<int>>& content) {
      WordState st = m.word_init(enc);
      std::vector<int> prev = {kBos};
      double total = 0;
      for (const auto& w : content) {
        WordAdvance adv = m.word_advance(enc, st, prev, LatentMode::Point);
        total += m.word_log_prob(adv, w).item();
        st = adv.state;
        prev = w;
      }
      WordAdvance adv = m.word_advance(enc, st, prev, LatentMode::Point);
      total += m.word_log_prob(adv, {kEos}).item();
      return total;
    };
    std::vector<std::vector<int>> spellings;
    for (int a : chars) {
      spellings.push_back({a, kEow});
      for (int b : chars) spellings.push_back({a, b, kEow});
    }
    std::vector<std::vector<std::vector<int>>> sentences = {{}};
    for (const auto& w1 : spellings) {
      sentences.push_back({w1});
      for (const auto& w2 : spellings) sentences.push_back({w1, w2});
    }
    double best_lp = -1e300;
    std::vector<std::vector<int>> best;
    for (const auto& s : sentences) {
      double lp = score(s);
      if (lp > best_lp) {
        best_lp = lp;
        best = s;
      }
    }
    best.push_back({kEos});
    WordHypothesis h = hierarchical_beam_search(m, enc, 60000, 3, 3);
    if (!h.finished || h.words != best || !close(h.log_prob, best_lp, 1e-9)) {
      note("hierarchical beam disagrees with enumeration over 157 sentences");
      ok = false;
    }
  }
  return ok;
}

// ---------------------------------------------------------------- 6, 8

struct OverfitResult {
  toy::ToyCorpus corpus;
  std::optional<Model> model;
  bool converged = false;
  int epochs = 0;
  double first_loss = 0, last_loss = 0, accuracy = 0;
  int exact = 0;
  double seconds = 0;
};

OverfitResult overfit_toy() {
  auto t0 = std::chrono::steady_clock::now();
  OverfitResult r;
  r.corpus = toy::gen_corpus(1, 50);

  ModelConfig mc;
  mc.variant = Variant::Lmm;
  mc.embedding = 64;
  mc.hidden = 64;
  mc.lemma_dim = 16;
  mc.features = 6;
  mc.mlp_hidden = 64;
  mc.max_word_len = 16;
  mc.seed = 1;
  r.model.emplace(mc, build_char_vocab(r.corpus.src), build_char_vocab(r.corpus.tgt),
                  BpeModel{});
  Model& model = *r.model;

  TrainOptions opt;
  opt.lr = 4e-4;
  opt.lr_decay = 1.0;  // memorization run: hold the rate
  opt.rho = 0.4;
  opt.dropout = 0.0;
  opt.clip_norm = 5.0;
  opt.batch = 1;  // one step per sentence: the most optimizer steps per pass
  opt.seed = 1;
  Trainer trainer(model, opt, r.corpus.src, r.corpus.tgt, r.corpus.src, r.corpus.tgt);

  auto count_exact = [&] {
    std::vector<std::string> hyp = translate_lines(model, r.corpus.src, 5);
    int exact = 0;
    for (size_t i = 0; i < hyp.size(); ++i) {
      if (hyp[i] == r.corpus.tgt[i]) ++exact;
    }
    return exact;
  };
  // Train until the loss and accuracy targets hold, then keep going until the
  // decoded output stabilizes too (or the epoch budget runs out).
  for (int e = 0; e < 300; ++e) {
    EpochStats s = trainer.run_epoch();
    if (e == 0) r.first_loss = s.train_loss;
    r.last_loss = s.train_loss;
    r.epochs = e + 1;
    if ((e + 1) % 5 == 0 || e == 299) {
      if (!r.converged) {
        r.accuracy = teacher_forced_accuracy(model, r.corpus.src, r.corpus.tgt);
        r.converged = r.accuracy >= 0.99 && s.train_loss < 0.1 * r.first_loss;
      }
      if (r.converged && ((e + 1) % 10 == 0 || e == 299)) {
        r.exact = count_exact();
        if (r.exact >= 48) break;
      }
    }
  }
  if (!r.converged) {
    r.accuracy = teacher_forced_accuracy(model, r.corpus.src, r.corpus.tgt);
    r.converged = r.accuracy >= 0.99 && r.last_loss < 0.1 * r.first_loss;
  }
  if (r.exact < 48) r.exact = count_exact();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

bool overfit_convergence(const OverfitResult& r) {
  bool ok = true;
  if (!r.converged) {
    note("accuracy " + std::to_string(r.accuracy) + ", loss " + std::to_string(r.last_loss) +
         " of " + std::to_string(r.first_loss) + " after " + std::to_string(r.epochs) +
         " epochs");
    ok = false;
  }
  if (r.exact < 48) {
    note("only " + std::to_string(r.exact) + "/50 training pairs decode exactly");
    ok = false;
  }
  if (r.seconds >= 600.0) {
    note("runtime " + std::to_string(r.seconds) + "s exceeds the 10 minute budget");
    ok = false;
  }
  return ok;
}

// ------------------------------------------------------------------- 7

bool penalty_direction() {
  bool ok = true;
  for (uint64_t seed : {31ull, 32ull, 33ull}) {
    toy::ToyCorpus corpus = toy::gen_corpus(2, 40);
    double mean_pc[2] = {0, 0};
    const double rhos[2] = {0.4, 0.0};
    for (int arm = 0; arm < 2; ++arm) {
      ModelConfig mc;
      mc.variant = Variant::Lmm;
      mc.embedding = 24;
      mc.hidden = 24;
      mc.lemma_dim = 8;
      mc.features = 4;
      mc.mlp_hidden = 24;
      mc.max_word_len = 16;
      mc.seed = seed;
      Model model(mc, build_char_vocab(corpus.src), build_char_vocab(corpus.tgt), BpeModel{});
      TrainOptions opt;
      opt.lr = 1e-3;
      opt.lr_decay = 1.0;
      opt.rho = rhos[arm];
      opt.dropout = 0.0;
      opt.batch = 5;
      opt.seed = seed;
      Trainer trainer(model, opt, corpus.src, corpus.tgt, corpus.src, corpus.tgt);
      for (int e = 0; e < 25; ++e) trainer.run_epoch();
      mean_pc[arm] = corpus_mean_p_cont(model, corpus.src, corpus.tgt);
    }
    if (!(mean_pc[0] < mean_pc[1])) {
      note("seed " + std::to_string(seed) + ": penalized mass " + std::to_string(mean_pc[0]) +
           " is not below unpenalized " + std::to_string(mean_pc[1]));
      ok = false;
    }
  }
  return ok;
}

// ------------------------------------------------------------------- 8

bool probe_property(OverfitResult& r) {
  Model& m = *r.model;
  const int k = m.config().features;

  // Ten training sentences with ten distinct content words (the toy
  // templates put the content word last on the source side). The lemma
  // vector is taken at the first target position of the full sentence,
  // which is where the inflected noun is spelled.
  std::vector<std::string> probe_lines;
  std::set<std::string> seen;
  for (const auto& line : r.corpus.src) {
    std::vector<std::string> toks = split_ws(line);
    if (!toks.empty() && seen.insert(toks.back()).second) probe_lines.push_back(line);
    if (probe_lines.size() == 10) break;
  }
  if (probe_lines.size() < 10) {
    note("corpus yields only " + std::to_string(probe_lines.size()) + " distinct content words");
    return false;
  }

  int varied = 0;
  for (const auto& line : probe_lines) {
    EncodedSource src = m.encode(m.source_ids(line));
    WordState start = m.word_init(src);
    WordAdvance first = m.word_advance(src, start, {kBos}, LatentMode::Point);
    std::set<std::string> surfaces;
    for (int mask = 0; mask < (1 << k); ++mask) {
      std::vector<double> f(k);
      for (int i = 0; i < k; ++i) f[i] = (mask >> i) & 1 ? 1.0 : 0.0;
      LatentOverride fix;
      fix.z = first.latents.z;
      fix.f = Tensor::from({k}, f);
      WordAdvance adv = m.word_advance(src, start, {kBos}, LatentMode::Point, nullptr, &fix);
      GeneratedWord w = m.greedy_word(adv);
      std::string surface;
      for (int id : w.spelling) {
        if (id == kEow || id == kEos) break;
        surface += m.tgt_vocab().symbol(id);
      }
      surfaces.insert(surface);
    }
    if (surfaces.size() >= 2) ++varied;
  }
  if (varied < 5) {
    note("feature corners vary the surface for only " + std::to_string(varied) + "/10 lemmas");
    return false;
  }
  return true;
}

// ------------------------------------------------------------------- 9

bool metric_identities() {
  bool ok = true;
  std::vector<std::string> text = {"the spotted cat sat on the mat",
                                   "a long sentence with many different words in it",
                                   "short one"};
  if (!close(bleu(text, text), 100.0, 1e-9)) {
    note("self-score of the 4-gram overlap metric is not 100");
    ok = false;
  }
  if (!close(chrf3(text, text), 1.0, 1e-9)) {
    note("self-score of the character F-score is not 1");
    ok = false;
  }
  if (!close(char_trigram_kl(text, text), 0.0, 1e-12)) {
    note("self-divergence of the trigram profile is not 0");
    ok = false;
  }
  Vocab v = build_word_vocab(text);
  if (oov_rate(text, v) != 0.0) {
    note("known-vocabulary OOV rate is not 0");
    ok = false;
  }

  // Hand-computed divergence: profiles {abc} vs {abd}; add-one
  // smoothing over the two-trigram union gives p = (2/3, 1/3) against
  // q = (1/3, 2/3), so D = (2/3) ln 2 + (1/3) ln(1/2) = (1/3) ln 2.
  if (!close(char_trigram_kl({"abc"}, {"abd"}), std::log(2.0) / 3.0, 1e-9)) {
    note("hand-computed trigram divergence mismatch");
    ok = false;
  }

  // Clipped precision: "the the the the" against "the cat" matches
  // "the" at most once: 1/4.
  BleuStats st = bleu_stats({"the the the the"}, {"the cat"});
  if (!close(st.precisions[0], 0.25, 1e-9)) {
    note("clipped unigram precision is " + std::to_string(st.precisions[0]) + ", not 0.25");
    ok = false;
  }
  if (bleu({"xxxx yyyy"}, {"aaa bbb"}) != 0.0) {
    note("zero-overlap score is not 0");
    ok = false;
  }
  return ok;
}

// ------------------------------------------------------------------ 10

bool paper_scale_preset() {
#ifndef PAPER_CFG
  note("preset path was not compiled in");
  return false;
#else
  RunConfig cfg = RunConfig::from_file(PAPER_CFG);
  cfg.validate();
  bool ok = true;
  auto check = [&](bool cond, const std::string& what) {
    if (!cond) {
      note("preset field off its documented value: " + what);
      ok = false;
    }
  };
  check(cfg.variant == "lmm", "variant lmm");
  check(cfg.embedding == 512 && cfg.hidden == 512, "embedding/hidden 512");
  check(cfg.lemma_dim == 150, "lemma_dim 150");
  check(cfg.features == 10, "features 10");
  check(cfg.mlp_hidden == 256, "mlp_hidden 256");
  check(close(cfg.rho, 0.4, 1e-12), "rho 0.4");
  check(close(cfg.lr, 4e-4, 1e-12), "lr 0.0004");
  check(close(cfg.lr_decay, 0.8, 1e-12), "lr_decay 0.8");
  check(close(cfg.dropout, 0.2, 1e-12), "dropout 0.2");
  check(cfg.batch == 100, "batch 100");
  check(cfg.beam == 5, "beam 5");
  check(cfg.bpe_merges == 16000, "bpe_merges 16000");
  // Corpus-scale scores need corpus-scale data and external analyzers;
  // the preset makes that run launchable, and checks 1-9 stand in for
  // it at desk scale.
  return ok;
#endif
}

// ------------------------------------------------------------------ 11

#ifdef LMM_BIN
int run_cmd(const std::string& args) {
  std::string cmd = std::string(LMM_BIN) + " " + args;
  return std::system(cmd.c_str());
}
#endif

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return !ca.empty() && ca == cb;
}

bool command_determinism() {
#ifndef LMM_BIN
  note("tool path was not compiled in");
  return false;
#else
  bool ok = true;
  fs::path base = "acceptance_scratch";
  fs::remove_all(base);
  for (const char* d : {"r1", "r2"}) {
    fs::path dir = base / d;
    fs::create_directories(dir);
    std::string p = dir.string() + "/";
    std::ofstream cfg(dir / "run.cfg");
    cfg << "variant = lmm\nembedding = 16\nhidden = 16\nlemma_dim = 5\nfeatures = 3\n"
        << "mlp_hidden = 12\nlr = 0.002\nepochs = 3\nbatch = 8\ndropout = 0.1\nseed = 9\n"
        << "bpe_merges = 25\ntrain_src = " << p << "toy.src\ntrain_tgt = " << p
        << "toy.tgt\ndev_src = " << p << "toy.src\ndev_tgt = " << p << "toy.tgt\n"
        << "checkpoint = " << p << "toy.ckpt\nlog = " << p << "toy.log\n";
    cfg.close();

    int rc = 0;
    rc |= run_cmd("gen-toy --seed 9 --size 40 --out " + p + "toy");
    rc |= run_cmd("bpe-learn --in " + p + "toy.tgt --merges 25 --out " + p + "toy.bpe");
    rc |= run_cmd("bpe-apply --model " + p + "toy.bpe --in " + p + "toy.tgt --out " + p +
                  "toy.bpe.tgt");
    rc |= run_cmd("train --config " + p + "run.cfg > " + p + "train.out");
    rc |= run_cmd("translate --checkpoint " + p + "toy.ckpt --in " + p + "toy.src --out " +
                  p + "toy.hyp --beam 3");
    rc |= run_cmd("evaluate --hyp " + p + "toy.hyp --ref " + p + "toy.tgt --train-tgt " + p +
                  "toy.tgt --seg " + p + "toy.seg > " + p + "eval.out");
    rc |= run_cmd("probe --checkpoint " + p + "toy.ckpt --lemma-from house --enumerate > " +
                  p + "probe.out");
    rc |= run_cmd("sweep --config " + p + "run.cfg --set epochs=1 --dims 4 --feature-dims 2 > " +
                  p + "sweep.out");
    if (rc != 0) {
      note(std::string("a command failed under ") + d);
      ok = false;
    }
  }
  for (const char* f : {"toy.src", "toy.tgt", "toy.seg", "toy.bpe", "toy.bpe.tgt",
                        "train.out", "toy.log", "toy.ckpt", "toy.hyp", "eval.out",
                        "probe.out", "sweep.out"}) {
    if (!same_bytes(base / "r1" / f, base / "r2" / f)) {
      note(std::string("'") + f + "' differs between identical runs");
      ok = false;
    }
  }
  if (ok) fs::remove_all(base);
  return ok;
#endif
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");

  run(1, "closed-form sparse masses match Monte Carlo sampling", masses_vs_monte_carlo);
  run(2, "uniform-case masses are (1/12, 1/12, 5/6) and triples sum to 1",
      analytic_uniform_masses);
  run(3, "autodiff matches central finite differences across the stack", gradient_suite);
  run(4, "subword merge learning follows the hand-worked oracle", bpe_oracle);
  run(5, "beam search equals exhaustive enumeration on tiny spaces",
      exhaustive_search_equivalence);

  std::optional<OverfitResult> overfit;
  run(6, "a desk-scale latent model memorizes a 50-pair corpus", [&]() {
    overfit.emplace(overfit_toy());
    return overfit_convergence(*overfit);
  });
  run(7, "the sparsity penalty lowers the continuous-outcome mass", penalty_direction);
  run(8, "feature corners change decoded surface forms per lemma", [&]() {
    if (!overfit || !overfit->model) {
      note("no trained model available from the memorization check");
      return false;
    }
    return probe_property(*overfit);
  });
  run(9, "metric identities and hand-computed scores hold", metric_identities);
  run(10, "the full-scale preset parses, validates and matches its documented values",
      paper_scale_preset);
  run(11, "every command is byte-reproducible from its seed", command_determinism);

  if (g_failures == 0) {
    std::printf("all 11 criteria hold\n");
  } else {
    std::printf("%d criteria failing\n", g_failures);
  }
  return g_failures;
}
