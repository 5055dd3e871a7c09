#pragma once

// Run configuration: a flat key=value text file ('#' comments, blank
// lines ignored) plus command-line overrides applied on top, so flags
// always win. Keys that only make sense for the latent-variable
// variant are rejected when another variant names them explicitly.

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>

#include "lmm/model.hpp"
#include "lmm/training.hpp"

namespace lmm {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  // model
  std::string variant = "lmm";
  int embedding = 32;
  int hidden = 32;
  int lemma_dim = 16;
  int features = 6;
  int mlp_hidden = 64;
  int max_word_len = 50;
  // training
  double lr = 4e-4;
  double lr_decay = 0.8;
  double dropout = 0.2;
  double rho = 0.4;
  double clip_norm = 5.0;
  int batch = 16;
  int epochs = 10;
  uint64_t seed = 1;
  // inference and data
  int beam = 5;
  int bpe_merges = 0;
  std::string train_src, train_tgt, dev_src, dev_tgt;
  std::string checkpoint = "model.ckpt";
  std::string log;  // empty: checkpoint path + ".log"

  // Keys assigned so far, by file or override; drives the
  // variant-dependence checks in validate().
  std::set<std::string> specified;

  static RunConfig from_file(const std::string& path);

  // "key" and "value" separately, or a single "key=value" string.
  void set(const std::string& key, const std::string& value);
  void set_kv(const std::string& key_eq_value);

  void validate() const;  // throws ConfigError naming the offending key

  std::string log_path() const { return log.empty() ? checkpoint + ".log" : log; }
  ModelConfig model_config() const;
  TrainOptions train_options() const;
};

}  // namespace lmm
