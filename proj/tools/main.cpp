// Command-line entrypoint. One process per command; every command is
// deterministic given its flags and seed.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error
// (missing or malformed files, mismatched corpora), 3 training
// divergence (the last good parameters are still checkpointed).

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <lmm/config.hpp>
#include <lmm/metrics.hpp>
#include <lmm/model.hpp>
#include <lmm/search.hpp>
#include <lmm/tokenization.hpp>
#include <lmm/toygen.hpp>
#include <lmm/training.hpp>

using namespace lmm;

namespace {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const auto& line : lines) out << line << '\n';
}

struct Corpora {
  std::vector<std::string> train_src, train_tgt, dev_src, dev_tgt;
};

Corpora read_corpora(const RunConfig& cfg) {
  Corpora c;
  c.train_src = read_lines(cfg.train_src);
  c.train_tgt = read_lines(cfg.train_tgt);
  c.dev_src = read_lines(cfg.dev_src);
  c.dev_tgt = read_lines(cfg.dev_tgt);
  return c;
}

// Subword table learned jointly over both sides; the source is always
// segmented with it, the target only under the subword variant.
Model build_model(const RunConfig& cfg, const Corpora& data) {
  BpeModel bpe;
  if (cfg.bpe_merges > 0) {
    std::vector<std::string> joint = data.train_src;
    joint.insert(joint.end(), data.train_tgt.begin(), data.train_tgt.end());
    bpe = bpe_learn(count_words(joint), cfg.bpe_merges);
  }
  std::vector<std::vector<std::string>> src_units;
  for (const auto& line : data.train_src) src_units.push_back(bpe.apply_line(line));
  Vocab src_vocab = build_unit_vocab(src_units);

  Vocab tgt_vocab;
  if (parse_variant(cfg.variant) == Variant::Subword) {
    std::vector<std::vector<std::string>> tgt_units;
    for (const auto& line : data.train_tgt) tgt_units.push_back(bpe.apply_line(line));
    tgt_vocab = build_unit_vocab(tgt_units);
  } else {
    tgt_vocab = build_char_vocab(data.train_tgt);
  }
  return Model(cfg.model_config(), src_vocab, tgt_vocab, bpe);
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& sets) {
  RunConfig cfg = RunConfig::from_file(path);
  for (const auto& kv : sets) cfg.set_kv(kv);
  cfg.validate();
  return cfg;
}

// Runs the full schedule, echoing each epoch line to stdout and the log
// file. On divergence the last good parameters are written to the
// checkpoint before the error continues up.
void run_training(Model& model, const RunConfig& cfg, const Corpora& data) {
  Trainer trainer(model, cfg.train_options(), data.train_src, data.train_tgt, data.dev_src,
                  data.dev_tgt);
  std::ofstream log(cfg.log_path());
  if (!log) throw DataError("cannot write '" + cfg.log_path() + "'");
  try {
    for (int e = 0; e < cfg.epochs; ++e) {
      std::string line = format_epoch(trainer.run_epoch());
      std::cout << line << '\n';
      log << line << '\n';
    }
  } catch (const DivergenceError&) {
    trainer.restore_last_good();
    model.save(cfg.checkpoint);
    throw;
  }
  model.save(cfg.checkpoint);
}

int cmd_gen_toy(uint64_t seed, int size, const std::string& out) {
  toy::write_corpus(toy::gen_corpus(seed, size), out);
  return 0;
}

int cmd_bpe_learn(const std::string& in, int merges, const std::string& out) {
  bpe_learn(count_words(read_lines(in)), merges).save(out);
  return 0;
}

int cmd_bpe_apply(const std::string& model_path, const std::string& in,
                  const std::string& out) {
  BpeModel bpe = BpeModel::load(model_path);
  std::vector<std::string> applied;
  for (const auto& line : read_lines(in)) {
    std::string joined;
    for (const auto& unit : bpe.apply_line(line)) {
      if (!joined.empty()) joined += ' ';
      joined += unit;
    }
    applied.push_back(joined);
  }
  write_lines(out, applied);
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets) {
  RunConfig cfg = load_run_config(config_path, sets);
  Corpora data = read_corpora(cfg);
  Model model = build_model(cfg, data);
  run_training(model, cfg, data);
  return 0;
}

int cmd_translate(const std::string& ckpt, const std::string& in, const std::string& out,
                  int beam) {
  Model model = Model::load(ckpt);
  write_lines(out, translate_lines(model, read_lines(in), beam));
  return 0;
}

int cmd_evaluate(const std::string& hyp_path, const std::string& ref_path,
                 const std::string& train_tgt_path, const std::string& seg_path) {
  std::vector<std::string> hyp = read_lines(hyp_path);
  std::vector<std::string> ref = read_lines(ref_path);
  if (hyp.size() != ref.size()) {
    throw DataError("hypothesis and reference line counts differ: " +
                    std::to_string(hyp.size()) + " vs " + std::to_string(ref.size()));
  }
  Vocab train_vocab = build_word_vocab(read_lines(train_tgt_path));
  std::printf("bleu\t%.4f\n", bleu(hyp, ref));
  std::printf("chrf3\t%.6f\n", chrf3(hyp, ref));
  std::printf("char_trigram_kl\t%.6f\n", char_trigram_kl(ref, hyp));
  std::printf("oov_rate\t%.4f\n", oov_rate(hyp, train_vocab));
  if (!seg_path.empty()) {
    std::vector<std::string> seg = read_lines(seg_path);
    if (seg.size() != hyp.size()) {
      throw DataError("segmentation and hypothesis line counts differ: " +
                      std::to_string(seg.size()) + " vs " + std::to_string(hyp.size()));
    }
    std::printf("t_bleu\t%.4f\n", toy_tbleu(hyp, seg));
  }
  return 0;
}

std::string format_features(const std::vector<double>& f) {
  std::string out;
  char buf[32];
  for (double v : f) {
    if (!out.empty()) out += ',';
    std::snprintf(buf, sizeof buf, "%g", v);
    out += buf;
  }
  return out;
}

std::string surface_of(const Model& model, const GeneratedWord& w) {
  std::string out;
  for (int id : w.spelling) {
    if (id == kEow || id == kEos) break;
    out += model.tgt_vocab().symbol(id);
  }
  return out;
}

int cmd_probe(const std::string& ckpt, const std::string& word,
              const std::string& features_csv, bool zero_features, bool enumerate_corners) {
  int modes = (!features_csv.empty() ? 1 : 0) + (zero_features ? 1 : 0) +
              (enumerate_corners ? 1 : 0);
  if (modes != 1) {
    throw ConfigError("pick exactly one of --features, --zero-features, --enumerate");
  }
  Model model = Model::load(ckpt);
  if (model.config().variant != Variant::Lmm) {
    throw DataError("checkpoint '" + ckpt + "' is not a latent-morphology model");
  }
  const int k = model.config().features;

  std::vector<std::vector<double>> rows;
  if (zero_features) {
    rows.push_back(std::vector<double>(k, 0.0));
  } else if (enumerate_corners) {
    if (k > 12) throw ConfigError("--enumerate needs at most 12 features");
    for (int mask = 0; mask < (1 << k); ++mask) {
      std::vector<double> f(k);
      for (int i = 0; i < k; ++i) f[i] = (mask >> i) & 1 ? 1.0 : 0.0;
      rows.push_back(std::move(f));
    }
  } else {
    std::vector<double> f;
    std::string item;
    std::istringstream ss(features_csv);
    while (std::getline(ss, item, ',')) f.push_back(std::stod(item));
    if (static_cast<int>(f.size()) != k) {
      throw ConfigError("--features needs " + std::to_string(k) + " comma-separated values");
    }
    for (double v : f) {
      if (!(v >= 0 && v <= 1)) throw ConfigError("--features values must lie in [0, 1]");
    }
    rows.push_back(std::move(f));
  }

  // The lemma for the word: decode state at the first target position
  // of the single-word sentence, point latents.
  std::vector<int> src_ids = model.source_ids(word);
  if (src_ids.empty()) throw ConfigError("--lemma-from needs a non-empty word");
  EncodedSource src = model.encode(src_ids);
  WordState start = model.word_init(src);
  WordAdvance first = model.word_advance(src, start, {kBos}, LatentMode::Point);

  std::printf("features\tsurface\n");
  for (const auto& f : rows) {
    LatentOverride fix;
    fix.z = first.latents.z;
    fix.f = Tensor::from({k}, f);
    WordAdvance adv = model.word_advance(src, start, {kBos}, LatentMode::Point, nullptr, &fix);
    std::printf("%s\t%s\n", format_features(f).c_str(),
                surface_of(model, model.greedy_word(adv)).c_str());
  }
  return 0;
}

std::vector<int> parse_int_list(const std::string& flag, const std::string& csv) {
  std::vector<int> out;
  std::string item;
  std::istringstream ss(csv);
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError(flag + " needs a comma-separated integer list, got '" + csv + "'");
    }
  }
  if (out.empty()) throw ConfigError(flag + " needs at least one value");
  return out;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& dims_csv, const std::string& fdims_csv) {
  RunConfig base = load_run_config(config_path, sets);
  if (parse_variant(base.variant) != Variant::Lmm) {
    throw ConfigError("sweep varies the latent dimensions, so 'variant' must be lmm");
  }
  std::vector<int> dims = parse_int_list("--dims", dims_csv);
  std::vector<int> fdims = parse_int_list("--feature-dims", fdims_csv);
  Corpora data = read_corpora(base);

  std::printf("lemma_dim\tfeatures\tdev_chrf3\tdev_ppl\n");
  int cell = 0;
  for (int d : dims) {
    for (int k : fdims) {
      RunConfig cfg = base;
      cfg.lemma_dim = d;
      cfg.features = k;
      cfg.seed = Rng::mix(base.seed, 1000 + cell);
      cfg.validate();
      Model model = build_model(cfg, data);
      Trainer trainer(model, cfg.train_options(), data.train_src, data.train_tgt,
                      data.dev_src, data.dev_tgt);
      for (int e = 0; e < cfg.epochs; ++e) trainer.run_epoch();
      double ppl = corpus_perplexity(model, data.dev_src, data.dev_tgt);
      double f3 = chrf3(translate_lines(model, data.dev_src, cfg.beam), data.dev_tgt);
      std::printf("%d\t%d\t%.6f\t%.6f\n", d, k, f3, ppl);
      ++cell;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-morphology translation toolkit"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-toy", "write a synthetic parallel corpus");
  uint64_t gen_seed = 1;
  int gen_size = 1000;
  std::string gen_out = "toy";
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--size", gen_size, "number of sentence pairs")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "output path stem (.src/.tgt/.seg)");

  auto* learn = app.add_subcommand("bpe-learn", "learn a subword merge table");
  std::string learn_in, learn_out = "bpe.model";
  int learn_merges = 0;
  learn->add_option("--in", learn_in, "training text")->required();
  learn->add_option("--merges", learn_merges, "number of merges")
      ->check(CLI::NonNegativeNumber);
  learn->add_option("--out", learn_out, "merge table path");

  auto* apply = app.add_subcommand("bpe-apply", "segment text with a merge table");
  std::string apply_model, apply_in, apply_out;
  apply->add_option("--model", apply_model, "merge table path")->required();
  apply->add_option("--in", apply_in, "input text")->required();
  apply->add_option("--out", apply_out, "segmented output")->required();

  auto* train = app.add_subcommand("train", "train a model from a config file");
  std::string train_config;
  std::vector<std::string> train_sets;
  train->add_option("--config", train_config, "key=value config file")->required();
  train->add_option("--set", train_sets, "override, key=value (repeatable; wins)");

  auto* translate = app.add_subcommand("translate", "decode a file with a checkpoint");
  std::string tr_ckpt, tr_in, tr_out;
  int tr_beam = 5;
  translate->add_option("--checkpoint", tr_ckpt)->required();
  translate->add_option("--in", tr_in, "source text")->required();
  translate->add_option("--out", tr_out, "translation output")->required();
  translate->add_option("--beam", tr_beam, "beam width")->check(CLI::PositiveNumber);

  auto* evaluate = app.add_subcommand("evaluate", "score hypotheses against references");
  std::string ev_hyp, ev_ref, ev_train_tgt, ev_seg;
  evaluate->add_option("--hyp", ev_hyp)->required();
  evaluate->add_option("--ref", ev_ref)->required();
  evaluate->add_option("--train-tgt", ev_train_tgt, "training targets, for the OOV rate")
      ->required();
  evaluate->add_option("--seg", ev_seg, "gold segmentations: adds the morph-level score");

  auto* probe = app.add_subcommand("probe",
                                   "decode one lemma under chosen inflectional features");
  std::string pr_ckpt, pr_word, pr_features;
  bool pr_zero = false, pr_enum = false;
  probe->add_option("--checkpoint", pr_ckpt)->required();
  probe->add_option("--lemma-from", pr_word, "source word whose lemma vector to use")
      ->required();
  probe->add_option("--features", pr_features, "comma-separated feature values in [0,1]");
  probe->add_flag("--zero-features", pr_zero, "decode with every feature at 0");
  probe->add_flag("--enumerate", pr_enum, "decode every 0/1 corner of the feature cube");

  auto* sweep = app.add_subcommand("sweep", "grid over lemma and feature dimensions");
  std::string sw_config, sw_dims, sw_fdims;
  std::vector<std::string> sw_sets;
  sweep->add_option("--config", sw_config)->required();
  sweep->add_option("--set", sw_sets, "override, key=value (repeatable; wins)");
  sweep->add_option("--dims", sw_dims, "lemma dimensions, comma-separated")->required();
  sweep->add_option("--feature-dims", sw_fdims, "feature counts, comma-separated")
      ->required();

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen_toy(gen_seed, gen_size, gen_out);
    if (learn->parsed()) return cmd_bpe_learn(learn_in, learn_merges, learn_out);
    if (apply->parsed()) return cmd_bpe_apply(apply_model, apply_in, apply_out);
    if (train->parsed()) return cmd_train(train_config, train_sets);
    if (translate->parsed()) return cmd_translate(tr_ckpt, tr_in, tr_out, tr_beam);
    if (evaluate->parsed()) return cmd_evaluate(ev_hyp, ev_ref, ev_train_tgt, ev_seg);
    if (probe->parsed()) return cmd_probe(pr_ckpt, pr_word, pr_features, pr_zero, pr_enum);
    if (sweep->parsed()) return cmd_sweep(sw_config, sw_sets, sw_dims, sw_fdims);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
