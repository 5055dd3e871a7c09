#include "lmm/config.hpp"

#include <fstream>

namespace lmm {

namespace {

std::string trim(const std::string& s) {
  size_t lo = s.find_first_not_of(" \t\r");
  if (lo == std::string::npos) return "";
  size_t hi = s.find_last_not_of(" \t\r");
  return s.substr(lo, hi - lo + 1);
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' needs an integer, got '" + value + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' needs an unsigned integer, got '" + value +
                      "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' needs a number, got '" + value + "'");
  }
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    size_t eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        " is not key=value: '" + trim(line) + "'");
    }
    cfg.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "variant") variant = value;
  else if (key == "embedding") embedding = parse_int(key, value);
  else if (key == "hidden") hidden = parse_int(key, value);
  else if (key == "lemma_dim") lemma_dim = parse_int(key, value);
  else if (key == "features") features = parse_int(key, value);
  else if (key == "mlp_hidden") mlp_hidden = parse_int(key, value);
  else if (key == "max_word_len") max_word_len = parse_int(key, value);
  else if (key == "lr") lr = parse_real(key, value);
  else if (key == "lr_decay") lr_decay = parse_real(key, value);
  else if (key == "dropout") dropout = parse_real(key, value);
  else if (key == "rho") rho = parse_real(key, value);
  else if (key == "clip_norm") clip_norm = parse_real(key, value);
  else if (key == "batch") batch = parse_int(key, value);
  else if (key == "epochs") epochs = parse_int(key, value);
  else if (key == "seed") seed = parse_u64(key, value);
  else if (key == "beam") beam = parse_int(key, value);
  else if (key == "bpe_merges") bpe_merges = parse_int(key, value);
  else if (key == "train_src") train_src = value;
  else if (key == "train_tgt") train_tgt = value;
  else if (key == "dev_src") dev_src = value;
  else if (key == "dev_tgt") dev_tgt = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "log") log = value;
  else throw ConfigError("unknown config key '" + key + "'");
  specified.insert(key);
}

void RunConfig::set_kv(const std::string& key_eq_value) {
  size_t eq = key_eq_value.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override must be key=value, got '" + key_eq_value + "'");
  }
  set(trim(key_eq_value.substr(0, eq)), trim(key_eq_value.substr(eq + 1)));
}

void RunConfig::validate() const {
  Variant v;
  try {
    v = parse_variant(variant);
  } catch (const std::exception&) {
    throw ConfigError("config key 'variant' must be one of subword, char, hierarchical, "
                      "lmm; got '" + variant + "'");
  }
  if (v != Variant::Lmm) {
    for (const char* key : {"lemma_dim", "features", "rho"}) {
      if (specified.count(key)) {
        throw ConfigError("config key '" + std::string(key) +
                          "' applies only to the lmm variant");
      }
    }
  }
  auto positive = [](const char* key, double value) {
    if (!(value > 0)) throw ConfigError(std::string("config key '") + key + "' must be positive");
  };
  positive("embedding", embedding);
  positive("hidden", hidden);
  positive("mlp_hidden", mlp_hidden);
  positive("max_word_len", max_word_len);
  positive("lr", lr);
  positive("clip_norm", clip_norm);
  positive("batch", batch);
  positive("epochs", epochs);
  positive("beam", beam);
  if (v == Variant::Lmm) {
    positive("lemma_dim", lemma_dim);
    if (features < 0) throw ConfigError("config key 'features' must be nonnegative");
    if (rho < 0) throw ConfigError("config key 'rho' must be nonnegative");
  }
  if (embedding != hidden) {
    throw ConfigError("config keys 'embedding' and 'hidden' must match: the output "
                      "logits tie the embedding table against the hidden state");
  }
  if (!(lr_decay > 0 && lr_decay <= 1)) {
    throw ConfigError("config key 'lr_decay' must be in (0, 1]");
  }
  if (!(dropout >= 0 && dropout < 1)) {
    throw ConfigError("config key 'dropout' must be in [0, 1)");
  }
  if (bpe_merges < 0) throw ConfigError("config key 'bpe_merges' must be nonnegative");
}

ModelConfig RunConfig::model_config() const {
  ModelConfig c;
  c.variant = parse_variant(variant);
  c.embedding = embedding;
  c.hidden = hidden;
  c.lemma_dim = lemma_dim;
  c.features = features;
  c.mlp_hidden = mlp_hidden;
  c.max_word_len = max_word_len;
  c.seed = seed;
  return c;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions t;
  t.lr = lr;
  t.lr_decay = lr_decay;
  t.rho = parse_variant(variant) == Variant::Lmm ? rho : 0.0;
  t.dropout = dropout;
  t.clip_norm = clip_norm;
  t.batch = batch;
  t.seed = seed;
  return t;
}

}  // namespace lmm
