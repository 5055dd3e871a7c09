#pragma once

// The four translation model variants over a shared encoder-decoder:
//
//   subword       3-layer GRU decoder over BPE units, attention after
//                 the 1st layer, output logits tied to the embeddings
//   char          the same decoder over raw characters
//   hierarchical  2 word-level GRU layers (attention after the 2nd)
//                 driving a character-level GRU that spells each word;
//                 word inputs are character-composed embeddings
//   lmm           the hierarchical architecture where the spelled word
//                 is driven by latent variables: a Gaussian lemma vector
//                 z and K sparse features f in [0,1], composed into the
//                 word representation t
//
// Words on the target side of the hierarchical variants are spelled as
// character ids terminated by the end-of-word id; the end-of-sentence
// token is its own one-character "word" (no end-of-word marker), which
// is also how decoding detects sentence end. The word-level RNN input
// at step i is the composed embedding of word i-1 concatenated with the
// previous attentional vector (input feeding).
//
// The model runs in whatever precision mode is active and records onto
// the active tape if one exists, so the same code path serves training
// (with gradients) and decoding (without).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lmm/distributions.hpp"
#include "lmm/layers.hpp"
#include "lmm/rng.hpp"
#include "lmm/tensor.hpp"
#include "lmm/tokenization.hpp"

namespace lmm {

enum class Variant { Subword, Char, Hierarchical, Lmm };

Variant parse_variant(const std::string& name);  // throws on unknown name
std::string variant_name(Variant v);

struct ModelConfig {
  Variant variant = Variant::Lmm;
  int embedding = 32;     // must equal hidden: output logits are E h
  int hidden = 32;        // GRU size everywhere
  int lemma_dim = 16;     // dimension of z (lmm)
  int features = 6;       // K, number of sparse features (lmm)
  int mlp_hidden = 64;    // hidden width of the four lmm heads
  int max_word_len = 50;  // char-step cap per generated word
  uint64_t seed = 1;      // parameter init stream
};

struct EncodedSource {
  Tensor enc;       // [m, hidden] encoder states after the bridge
  Tensor dec_init;  // decoder start state from the mean source state
};

// Latent description of one target word. Hierarchical words carry only
// t (the word-level output); lmm words carry the full set.
struct LatentWordState {
  Tensor t;  // composed word representation, dimension = hidden
  bool has_latents = false;
  Tensor u, s, z;  // Gaussian location, scale, lemma draw  [lemma_dim]
  Tensor a, b;     // Kumaraswamy parameters                 [K]
  Tensor f;        // sparse features in [0,1]               [K]
};

enum class LatentMode {
  Sample,  // z = u + eps*s, f = rectified Kumaraswamy draw (training)
  Point    // z = u, f_k = argmax of {p0, p1, continuous}    (decoding)
};

// Probe hook: fix z and/or f instead of deriving them from the state.
struct LatentOverride {
  std::optional<Tensor> z;
  std::optional<Tensor> f;
};

struct WordState {
  Tensor h1, h2;  // word-level GRU layers
  Tensor hhat;    // attentional vector fed back as input
};

struct WordAdvance {
  WordState state;
  AttentionState att;
  LatentWordState latents;
};

struct AtomicState {
  Tensor h1, h2, h3;
  Tensor hhat;
};

struct AtomicStep {
  AtomicState state;
  Tensor log_probs;  // [v]
  AttentionState att;
};

struct CharStepOut {
  Tensor h;          // advanced char-RNN state
  Tensor log_probs;  // [v] over the character vocabulary
};

struct GeneratedWord {
  std::vector<int> spelling;  // includes the terminal EOW / lone EOS
  double log_prob = 0;
  bool truncated = false;  // hit max_word_len before EOW
};

// Decoding-time id masks. Characters: padding, sentence start and unk
// are never emitted; a word cannot end before its first character, and
// the sentence-end id is only legal as the first (and then only)
// character of a word. Atomic variants never emit padding/start/unk,
// and the char-atomic variant has no use for the end-of-word id.
bool char_emission_allowed(int id, int position_in_word);
std::vector<int> banned_atomic_ids(Variant v);

class Model {
 public:
  Model(const ModelConfig& config, Vocab src_vocab, Vocab tgt_vocab, BpeModel bpe);

  const ModelConfig& config() const { return config_; }
  const Vocab& src_vocab() const { return src_vocab_; }
  const Vocab& tgt_vocab() const { return tgt_vocab_; }
  const BpeModel& bpe() const { return bpe_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Dropout is active only between set_training(true, ...) and
  // set_training(false, ...); rng must outlive that window.
  void set_training(bool on, double dropout_rate = 0.0, Rng* rng = nullptr);

  // --- text to ids ---
  // Source lines always go through the subword table.  Target granularity
  // follows the variant: flat unit ids for the atomic decoders, per-word
  // character spellings (each ending in the end-of-word id) for the
  // word-level decoders.  Neither appends the sentence terminator.
  std::vector<int> source_ids(const std::string& line) const;
  std::vector<int> atomic_target_ids(const std::string& line) const;
  std::vector<std::vector<int>> word_target_ids(const std::string& line) const;

  EncodedSource encode(const std::vector<int>& src_ids);

  // --- atomic decoders (subword / char variants) ---
  AtomicState atomic_init(const EncodedSource& src) const;
  AtomicStep atomic_step(const EncodedSource& src, const AtomicState& prev, int prev_id);

  // --- word level (hierarchical / lmm variants) ---
  WordState word_init(const EncodedSource& src) const;
  // prev_spelling: char ids of the previous word (sentence start uses
  // the BOS id alone). mode/rng/override only matter for the lmm.
  WordAdvance word_advance(const EncodedSource& src, const WordState& prev,
                           const std::vector<int>& prev_spelling, LatentMode mode,
                           Rng* rng = nullptr, const LatentOverride* override_latents = nullptr);

  // --- char level ---
  Tensor char_init(const Tensor& t, const Tensor& context);
  CharStepOut char_step(const Tensor& h_prev, int prev_char);

  // Teacher forcing: summed log-probability of the observed spelling
  // (a scalar tensor on the active tape).
  Tensor word_log_prob(const WordAdvance& adv, const std::vector<int>& spelling);
  // Greedy argmax spelling under the emission mask.
  GeneratedWord greedy_word(const WordAdvance& adv);

  // Expected-continuous-outcomes penalty sum_k p_cont(a_k, b_k) for one
  // lmm word. The (a, b) here are recomputed from a detached [z ; h2],
  // so minimizing the penalty adjusts only the ab head's parameters.
  // Zero scalar for non-lmm words or K = 0.
  Tensor word_regularizer(const WordAdvance& adv);

  // Mean continuous-outcome mass over the K features (forward values
  // only); the fraction-sparse statistic reported per epoch.
  double mean_p_cont(const LatentWordState& latents) const;

  // Checkpoint: "LMMCKPT v1" header, text metadata (config, vocabs and
  // merges inline), then every parameter tensor named, in registration
  // order, as float32 little-endian. save(load(p)) is byte-identical.
  void save(const std::string& path) const;
  static Model load(const std::string& path);

  static constexpr double kSupportLo = -0.1;  // stretch interval (l, r)
  static constexpr double kSupportHi = 1.1;

 private:
  Tensor embed_src(int id) const;
  Tensor embed_tgt(int id) const;
  Tensor maybe_drop(const Tensor& x);
  LatentWordState make_latents(const Tensor& h2, LatentMode mode, Rng* rng,
                               const LatentOverride* override_latents);

  ModelConfig config_;
  Vocab src_vocab_, tgt_vocab_;
  BpeModel bpe_;
  ParamStore params_;

  Tensor src_emb_, tgt_emb_;
  GruCell enc_fwd_, enc_bwd_;
  Dense enc_bridge_;  // per-position [2h] -> [h] for dot attention
  Dense init_bridge_; // mean raw state -> decoder start (tanh)

  // atomic stack
  GruCell dec1_, dec2_, dec3_;
  Attention att_;

  // hierarchical stack
  CharCompose compose_;
  GruCell word1_, word2_;
  Mlp2 loc_head_, scale_head_, ab_head_, comp_head_;
  Dense char_init_;
  GruCell char_rnn_;

  bool training_ = false;
  double dropout_rate_ = 0;
  Rng* dropout_rng_ = nullptr;
};

}  // namespace lmm
