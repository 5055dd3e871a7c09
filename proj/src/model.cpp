#include "lmm/model.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lmm {

Variant parse_variant(const std::string& name) {
  if (name == "subword") return Variant::Subword;
  if (name == "char") return Variant::Char;
  if (name == "hierarchical") return Variant::Hierarchical;
  if (name == "lmm") return Variant::Lmm;
  throw std::invalid_argument("unknown variant \"" + name +
                              "\" (expected subword, char, hierarchical or lmm)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Subword: return "subword";
    case Variant::Char: return "char";
    case Variant::Hierarchical: return "hierarchical";
    case Variant::Lmm: return "lmm";
  }
  return "?";
}

bool char_emission_allowed(int id, int position_in_word) {
  if (id == kPad || id == kBos || id == kUnk) return false;
  if (id == kEow) return position_in_word > 0;
  if (id == kEos) return position_in_word == 0;
  return true;
}

std::vector<int> banned_atomic_ids(Variant v) {
  std::vector<int> banned = {kPad, kBos, kUnk};
  if (v == Variant::Char) banned.push_back(kEow);
  return banned;
}

namespace {

bool hierarchical_family(Variant v) {
  return v == Variant::Hierarchical || v == Variant::Lmm;
}

void validate_config(const ModelConfig& c) {
  if (c.embedding != c.hidden) {
    throw std::invalid_argument("embedding size must equal hidden size (tied output layer)");
  }
  if (c.embedding <= 0 || c.hidden <= 0) {
    throw std::invalid_argument("embedding/hidden sizes must be positive");
  }
  if (c.max_word_len < 2) {
    throw std::invalid_argument("max_word_len must allow at least one char plus the marker");
  }
  if (c.variant == Variant::Lmm) {
    if (c.lemma_dim <= 0) throw std::invalid_argument("lemma_dim must be positive");
    if (c.features < 0) throw std::invalid_argument("features must be >= 0");
    if (c.mlp_hidden <= 0) throw std::invalid_argument("mlp_hidden must be positive");
  }
}

}  // namespace

Model::Model(const ModelConfig& config, Vocab src_vocab, Vocab tgt_vocab, BpeModel bpe)
    : config_(config),
      src_vocab_(std::move(src_vocab)),
      tgt_vocab_(std::move(tgt_vocab)),
      bpe_(std::move(bpe)) {
  validate_config(config_);
  Rng rng(config_.seed);
  const int d = config_.embedding;
  const int h = config_.hidden;

  src_emb_ = init_matrix(params_, "src_emb", src_vocab_.size(), d, rng);
  tgt_emb_ = init_matrix(params_, "tgt_emb", tgt_vocab_.size(), d, rng);
  enc_fwd_ = GruCell(params_, "enc.fwd", d, h, rng);
  enc_bwd_ = GruCell(params_, "enc.bwd", d, h, rng);
  enc_bridge_ = Dense(params_, "enc.bridge", 2 * h, h, Act::None, rng);
  init_bridge_ = Dense(params_, "enc.init", 2 * h, h, Act::Tanh, rng);

  if (hierarchical_family(config_.variant)) {
    compose_ = CharCompose(params_, "compose", d, h, d, rng);
    word1_ = GruCell(params_, "word1", d + h, h, rng);
    word2_ = GruCell(params_, "word2", h, h, rng);
    att_ = Attention(params_, "att", h, rng);
    if (config_.variant == Variant::Lmm) {
      const int k = config_.features;
      loc_head_ = Mlp2(params_, "heads.loc", h, config_.mlp_hidden, config_.lemma_dim,
                       Act::None, rng);
      scale_head_ = Mlp2(params_, "heads.scale", h, config_.mlp_hidden, config_.lemma_dim,
                         Act::Softplus, rng);
      if (k > 0) {
        ab_head_ = Mlp2(params_, "heads.ab", config_.lemma_dim + h, config_.mlp_hidden, 2 * k,
                        Act::Softplus, rng);
      }
      comp_head_ = Mlp2(params_, "heads.comp", config_.lemma_dim + k, config_.mlp_hidden, h,
                        Act::None, rng);
    }
    char_init_ = Dense(params_, "char.init", 2 * h, h, Act::Tanh, rng);
    char_rnn_ = GruCell(params_, "char.rnn", d, h, rng);
  } else {
    dec1_ = GruCell(params_, "dec1", d + h, h, rng);
    att_ = Attention(params_, "att", h, rng);
    dec2_ = GruCell(params_, "dec2", 2 * h, h, rng);
    dec3_ = GruCell(params_, "dec3", h, h, rng);
  }
}

void Model::set_training(bool on, double dropout_rate, Rng* rng) {
  if (on && dropout_rate > 0 && rng == nullptr) {
    throw std::logic_error("dropout needs an rng");
  }
  training_ = on;
  dropout_rate_ = dropout_rate;
  dropout_rng_ = rng;
}

Tensor Model::embed_src(int id) const {
  if (id < 0 || id >= src_vocab_.size()) {
    throw std::out_of_range("source id " + std::to_string(id) + " outside vocabulary");
  }
  return row(src_emb_, id);
}

Tensor Model::embed_tgt(int id) const {
  if (id < 0 || id >= tgt_vocab_.size()) {
    throw std::out_of_range("target id " + std::to_string(id) + " outside vocabulary");
  }
  return row(tgt_emb_, id);
}

Tensor Model::maybe_drop(const Tensor& x) {
  if (!training_ || dropout_rate_ <= 0) return x;
  return dropout(x, dropout_rate_, true, *dropout_rng_);
}

std::vector<int> Model::source_ids(const std::string& line) const {
  std::vector<int> ids;
  for (const auto& sym : bpe_.apply_line(line)) ids.push_back(src_vocab_.id(sym));
  return ids;
}

std::vector<int> Model::atomic_target_ids(const std::string& line) const {
  std::vector<int> ids;
  if (config_.variant == Variant::Subword) {
    for (const auto& sym : bpe_.apply_line(line)) ids.push_back(tgt_vocab_.id(sym));
  } else if (config_.variant == Variant::Char) {
    for (const auto& cp : codepoints(line)) ids.push_back(tgt_vocab_.id(cp));
  } else {
    throw std::logic_error("atomic_target_ids applies to the atomic variants only");
  }
  return ids;
}

std::vector<std::vector<int>> Model::word_target_ids(const std::string& line) const {
  if (!hierarchical_family(config_.variant)) {
    throw std::logic_error("word_target_ids applies to the hierarchical variants only");
  }
  std::vector<std::vector<int>> words;
  for (const auto& w : split_ws(line)) {
    std::vector<int> ids;
    ids.reserve(w.size() + 1);
    for (const auto& cp : codepoints(w)) ids.push_back(tgt_vocab_.id(cp));
    ids.push_back(kEow);
    words.push_back(std::move(ids));
  }
  return words;
}

EncodedSource Model::encode(const std::vector<int>& src_ids) {
  if (src_ids.empty()) throw std::invalid_argument("cannot encode an empty source");
  std::vector<Tensor> xs;
  xs.reserve(src_ids.size());
  for (int id : src_ids) xs.push_back(maybe_drop(embed_src(id)));

  std::vector<Tensor> raw = bi_rnn_encode(enc_fwd_, enc_bwd_, xs);
  std::vector<Tensor> bridged;
  bridged.reserve(raw.size());
  Tensor mean_raw = raw[0];
  for (size_t i = 1; i < raw.size(); ++i) mean_raw = add(mean_raw, raw[i]);
  mean_raw = mul(mean_raw, 1.0 / static_cast<double>(raw.size()));
  for (const auto& s : raw) bridged.push_back(enc_bridge_(s));

  EncodedSource out;
  out.enc = stack_rows(bridged);
  out.dec_init = init_bridge_(mean_raw);
  return out;
}

// --- atomic path ---

AtomicState Model::atomic_init(const EncodedSource& src) const {
  AtomicState s;
  s.h1 = s.h2 = s.h3 = src.dec_init;
  s.hhat = Tensor::zeros({config_.hidden});
  return s;
}

AtomicStep Model::atomic_step(const EncodedSource& src, const AtomicState& prev, int prev_id) {
  Tensor x = concat({maybe_drop(embed_tgt(prev_id)), prev.hhat});
  AtomicStep out;
  out.state.h1 = dec1_.step(x, prev.h1);
  out.att = att_(out.state.h1, src.enc);
  out.state.h2 = dec2_.step(concat({out.state.h1, out.att.context}), prev.h2);
  out.state.h3 = dec3_.step(out.state.h2, prev.h3);
  out.state.hhat = out.att.hhat;
  out.log_probs = log_softmax(matvec(tgt_emb_, out.state.h3));
  return out;
}

// --- word level ---

WordState Model::word_init(const EncodedSource& src) const {
  WordState s;
  s.h1 = s.h2 = src.dec_init;
  s.hhat = Tensor::zeros({config_.hidden});
  return s;
}

LatentWordState Model::make_latents(const Tensor& h2, LatentMode mode, Rng* rng,
                                    const LatentOverride* override_latents) {
  const int k = config_.features;
  LatentWordState ls;
  ls.has_latents = true;
  ls.u = loc_head_(h2);
  ls.s = scale_head_(h2);

  if (override_latents && override_latents->z) {
    if (override_latents->z->size() != config_.lemma_dim) {
      throw std::invalid_argument("overridden z has the wrong dimension");
    }
    ls.z = *override_latents->z;
  } else if (mode == LatentMode::Sample) {
    if (!rng) throw std::logic_error("sampling latents needs an rng");
    ls.z = gaussian_sample({ls.u, ls.s}, gaussian_noise(config_.lemma_dim, *rng));
  } else {
    ls.z = ls.u;
  }

  // Dropout on the lemma input of the downstream heads keeps the lemma from
  // monopolizing the word representation, pushing complementary information
  // into the sparse features. Identity when dropout is off.
  Tensor z_in = maybe_drop(ls.z);
  if (k > 0) {
    Tensor ab = ab_head_(concat({z_in, h2}));
    ls.a = max_const(slice(ab, 0, k), 1e-6);
    ls.b = max_const(slice(ab, k, k), 1e-6);
    if (override_latents && override_latents->f) {
      if (override_latents->f->size() != k) {
        throw std::invalid_argument("overridden f has the wrong dimension");
      }
      ls.f = *override_latents->f;
    } else if (mode == LatentMode::Sample) {
      Tensor c = kuma_sample({ls.a, ls.b}, kuma_noise(k, *rng));
      ls.f = stretch_rectify(c, kSupportLo, kSupportHi);
    } else {
      std::vector<double> fv(k);
      for (int i = 0; i < k; ++i) {
        fv[i] = hardkuma_point_summary(ls.a.value(i), ls.b.value(i), kSupportLo, kSupportHi);
      }
      ls.f = Tensor::from({k}, std::move(fv));
    }
    ls.t = comp_head_(concat({z_in, ls.f}));
  } else {
    ls.t = comp_head_(z_in);
  }
  return ls;
}

WordAdvance Model::word_advance(const EncodedSource& src, const WordState& prev,
                                const std::vector<int>& prev_spelling, LatentMode mode,
                                Rng* rng, const LatentOverride* override_latents) {
  if (!hierarchical_family(config_.variant)) {
    throw std::logic_error("word_advance applies to the hierarchical variants only");
  }
  if (prev_spelling.empty()) throw std::invalid_argument("previous word spelling is empty");

  std::vector<Tensor> char_embs;
  char_embs.reserve(prev_spelling.size());
  for (int id : prev_spelling) char_embs.push_back(embed_tgt(id));
  Tensor w = maybe_drop(compose_(char_embs));

  WordAdvance out;
  out.state.h1 = word1_.step(concat({w, prev.hhat}), prev.h1);
  out.state.h2 = word2_.step(out.state.h1, prev.h2);
  out.att = att_(out.state.h2, src.enc);
  out.state.hhat = out.att.hhat;

  if (config_.variant == Variant::Lmm) {
    out.latents = make_latents(out.state.h2, mode, rng, override_latents);
  } else {
    out.latents.t = out.state.h2;
    out.latents.has_latents = false;
  }
  return out;
}

// --- char level ---

Tensor Model::char_init(const Tensor& t, const Tensor& context) {
  return char_init_(concat({t, context}));
}

CharStepOut Model::char_step(const Tensor& h_prev, int prev_char) {
  CharStepOut out;
  out.h = char_rnn_.step(maybe_drop(embed_tgt(prev_char)), h_prev);
  out.log_probs = log_softmax(matvec(tgt_emb_, out.h));
  return out;
}

Tensor Model::word_log_prob(const WordAdvance& adv, const std::vector<int>& spelling) {
  if (spelling.empty()) throw std::invalid_argument("cannot score an empty spelling");
  Tensor h = char_init(adv.latents.t, adv.att.context);
  Tensor total = Tensor::scalar(0.0);
  int prev = kBos;
  for (int id : spelling) {
    CharStepOut step = char_step(h, prev);
    total = add(total, pick(step.log_probs, id));
    h = step.h;
    prev = id;
  }
  return total;
}

GeneratedWord Model::greedy_word(const WordAdvance& adv) {
  GeneratedWord out;
  Tensor h = char_init(adv.latents.t, adv.att.context);
  int prev = kBos;
  for (int j = 0; j < config_.max_word_len; ++j) {
    CharStepOut step = char_step(h, prev);
    h = step.h;
    int best = -1;
    double best_lp = 0;
    for (int id = 0; id < tgt_vocab_.size(); ++id) {
      if (!char_emission_allowed(id, j)) continue;
      double lp = step.log_probs.value(id);
      if (best < 0 || lp > best_lp) {
        best = id;
        best_lp = lp;
      }
    }
    out.log_prob += best_lp;
    out.spelling.push_back(best);
    if (best == kEow || (best == kEos && j == 0)) return out;
    prev = best;
  }
  out.truncated = true;
  return out;
}

Tensor Model::word_regularizer(const WordAdvance& adv) {
  if (config_.variant != Variant::Lmm || config_.features == 0) {
    return Tensor::scalar(0.0);
  }
  const int k = config_.features;
  Tensor ab = ab_head_(concat({adv.latents.z.detach(), adv.state.h2.detach()}));
  HardKumaParams p;
  p.kuma.a = max_const(slice(ab, 0, k), 1e-6);
  p.kuma.b = max_const(slice(ab, k, k), 1e-6);
  p.support_lo = kSupportLo;
  p.support_hi = kSupportHi;
  return sum(hardkuma_masses(p).p_cont);
}

double Model::mean_p_cont(const LatentWordState& latents) const {
  if (!latents.has_latents || config_.features == 0) return 0.0;
  double total = 0;
  for (int i = 0; i < config_.features; ++i) {
    total += hardkuma_masses(latents.a.value(i), latents.b.value(i), kSupportLo, kSupportHi)
                 .p_cont;
  }
  return total / config_.features;
}

// --- checkpoint ---

namespace {

std::string escape_symbol(const std::string& s) {
  std::string out;
  for (unsigned char ch : s) {
    switch (ch) {
      case '%': out += "%25"; break;
      case ' ': out += "%20"; break;
      case '\t': out += "%09"; break;
      case '\n': out += "%0A"; break;
      case '\r': out += "%0D"; break;
      default: out += static_cast<char>(ch);
    }
  }
  return out;
}

std::string unescape_symbol(const std::string& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      int hi = std::isdigit(s[i + 1]) ? s[i + 1] - '0' : std::toupper(s[i + 1]) - 'A' + 10;
      int lo = std::isdigit(s[i + 2]) ? s[i + 2] - '0' : std::toupper(s[i + 2]) - 'A' + 10;
      out += static_cast<char>(hi * 16 + lo);
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

void write_u32(std::ostream& out, uint32_t v) {
  char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                   static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

uint32_t read_u32(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw std::runtime_error("checkpoint truncated");
  return static_cast<uint32_t>(bytes[0]) | (static_cast<uint32_t>(bytes[1]) << 8) |
         (static_cast<uint32_t>(bytes[2]) << 16) | (static_cast<uint32_t>(bytes[3]) << 24);
}

void write_f32(std::ostream& out, float f) { write_u32(out, std::bit_cast<uint32_t>(f)); }

float read_f32(std::istream& in) { return std::bit_cast<float>(read_u32(in)); }

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream in(line);
  std::string t;
  while (in >> t) toks.push_back(t);
  return toks;
}

}  // namespace

void Model::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "LMMCKPT v1\n";
  out << "variant\t" << variant_name(config_.variant) << '\n';
  out << "embedding\t" << config_.embedding << '\n';
  out << "hidden\t" << config_.hidden << '\n';
  out << "lemma_dim\t" << config_.lemma_dim << '\n';
  out << "features\t" << config_.features << '\n';
  out << "mlp_hidden\t" << config_.mlp_hidden << '\n';
  out << "max_word_len\t" << config_.max_word_len << '\n';
  out << "seed\t" << config_.seed << '\n';

  auto vocab_line = [](const Vocab& v) {
    std::string line;
    for (int i = 0; i < v.size(); ++i) {
      if (i) line += ' ';
      line += escape_symbol(v.symbol(i));
    }
    return line;
  };
  out << "src_vocab\t" << vocab_line(src_vocab_) << '\n';
  out << "tgt_vocab\t" << vocab_line(tgt_vocab_) << '\n';
  std::string merges;
  for (const auto& [l, r] : bpe_.merges) {
    if (!merges.empty()) merges += ' ';
    merges += escape_symbol(l) + ' ' + escape_symbol(r);
  }
  out << "bpe_merges\t" << merges << '\n';

  out << "tensors\t" << params_.entries().size() << '\n';
  for (const auto& [name, t] : params_.entries()) {
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) write_u32(out, static_cast<uint32_t>(t.dim(i)));
    for (int64_t i = 0; i < t.size(); ++i) {
      write_f32(out, static_cast<float>(t.value(i)));
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

Model Model::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != "LMMCKPT v1") {
    throw std::runtime_error(path + ": not an LMMCKPT v1 checkpoint");
  }

  ModelConfig config;
  Vocab src_vocab, tgt_vocab;
  BpeModel bpe;
  int64_t n_tensors = -1;
  while (n_tensors < 0 && std::getline(in, line)) {
    size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(path + ": malformed metadata line: " + line);
    }
    std::string key = line.substr(0, tab);
    std::string value = line.substr(tab + 1);
    if (key == "variant") {
      config.variant = parse_variant(value);
    } else if (key == "embedding") {
      config.embedding = std::stoi(value);
    } else if (key == "hidden") {
      config.hidden = std::stoi(value);
    } else if (key == "lemma_dim") {
      config.lemma_dim = std::stoi(value);
    } else if (key == "features") {
      config.features = std::stoi(value);
    } else if (key == "mlp_hidden") {
      config.mlp_hidden = std::stoi(value);
    } else if (key == "max_word_len") {
      config.max_word_len = std::stoi(value);
    } else if (key == "seed") {
      config.seed = std::stoull(value);
    } else if (key == "src_vocab" || key == "tgt_vocab") {
      Vocab v;
      auto toks = split_tokens(value);
      if (toks.size() < 5) throw std::runtime_error(path + ": vocab too small");
      for (size_t i = 0; i < toks.size(); ++i) {
        std::string sym = unescape_symbol(toks[i]);
        if (i < 5) {
          if (sym != kReserved[i]) {
            throw std::runtime_error(path + ": reserved vocab prefix corrupted");
          }
        } else {
          v.add(sym);
        }
      }
      (key == "src_vocab" ? src_vocab : tgt_vocab) = v;
    } else if (key == "bpe_merges") {
      auto toks = split_tokens(value);
      if (toks.size() % 2 != 0) throw std::runtime_error(path + ": odd merge token count");
      for (size_t i = 0; i < toks.size(); i += 2) {
        bpe.merges.emplace_back(unescape_symbol(toks[i]), unescape_symbol(toks[i + 1]));
      }
    } else if (key == "tensors") {
      n_tensors = std::stoll(value);
    } else {
      throw std::runtime_error(path + ": unknown metadata key " + key);
    }
  }
  if (n_tensors < 0) throw std::runtime_error(path + ": tensor section missing");

  Model model(config, std::move(src_vocab), std::move(tgt_vocab), std::move(bpe));
  const auto& entries = model.params_.entries();
  if (static_cast<size_t>(n_tensors) != entries.size()) {
    throw std::runtime_error(path + ": checkpoint holds " + std::to_string(n_tensors) +
                             " tensors, model expects " + std::to_string(entries.size()));
  }
  for (const auto& [name, t] : entries) {
    uint32_t name_len = read_u32(in);
    std::string stored(name_len, '\0');
    in.read(stored.data(), name_len);
    if (!in || stored != name) {
      throw std::runtime_error(path + ": tensor order mismatch, expected " + name);
    }
    uint32_t rank = read_u32(in);
    if (rank != static_cast<uint32_t>(t.rank())) {
      throw std::runtime_error(path + ": rank mismatch for " + name);
    }
    int64_t n = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      uint32_t dim = read_u32(in);
      if (dim != static_cast<uint32_t>(t.dim(static_cast<int>(i)))) {
        throw std::runtime_error(path + ": shape mismatch for " + name);
      }
      n *= dim;
    }
    Tensor target = t;
    for (int64_t i = 0; i < n; ++i) {
      target.values()[static_cast<size_t>(i)] = static_cast<double>(read_f32(in));
    }
  }
  return model;
}

}  // namespace lmm
