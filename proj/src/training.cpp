#include <lmm/training.hpp>

#include <lmm/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace lmm {

namespace {

bool atomic_variant(Variant v) { return v == Variant::Subword || v == Variant::Char; }

int argmax_value(const Tensor& t) {
  int best = 0;
  for (int64_t i = 1; i < t.size(); ++i) {
    if (t.value(i) > t.value(best)) best = static_cast<int>(i);
  }
  return best;
}

void check_corpus(const std::vector<std::string>& src, const std::vector<std::string>& tgt,
                  const char* what) {
  if (src.empty() || src.size() != tgt.size()) {
    throw std::invalid_argument(std::string(what) + " corpus is empty or misaligned");
  }
}

}  // namespace

LossTerms sentence_loss(Model& m, const std::string& src_line, const std::string& tgt_line,
                        double rho, LatentMode mode, Rng* rng) {
  LossTerms out;
  out.rho = rho;

  EncodedSource src = m.encode(m.source_ids(src_line));
  Tensor nll = Tensor::scalar(0.0);
  Tensor reg = Tensor::scalar(0.0);

  if (atomic_variant(m.config().variant)) {
    std::vector<int> ids = m.atomic_target_ids(tgt_line);
    if (ids.empty()) throw std::invalid_argument("empty target sentence");
    ids.push_back(kEos);
    AtomicState st = m.atomic_init(src);
    int prev = kBos;
    for (int id : ids) {
      AtomicStep step = m.atomic_step(src, st, prev);
      nll = sub(nll, pick(step.log_probs, id));
      st = step.state;
      prev = id;
    }
    out.segments = static_cast<int>(ids.size());
  } else {
    std::vector<std::vector<int>> words = m.word_target_ids(tgt_line);
    if (words.empty()) throw std::invalid_argument("empty target sentence");
    words.push_back({kEos});
    WordState st = m.word_init(src);
    std::vector<int> prev = {kBos};
    for (const auto& spelling : words) {
      WordAdvance adv = m.word_advance(src, st, prev, mode, rng);
      nll = sub(nll, m.word_log_prob(adv, spelling));
      reg = add(reg, m.word_regularizer(adv));
      st = adv.state;
      prev = spelling;
      out.segments += static_cast<int>(spelling.size());
    }
  }

  out.nll = nll;
  out.reg = reg;
  out.total = add(nll, mul(reg, rho));
  return out;
}

double corpus_perplexity(Model& m, const std::vector<std::string>& src_lines,
                         const std::vector<std::string>& tgt_lines) {
  check_corpus(src_lines, tgt_lines, "perplexity");
  double nll = 0;
  int64_t segments = 0;
  for (size_t i = 0; i < src_lines.size(); ++i) {
    LossTerms lt = sentence_loss(m, src_lines[i], tgt_lines[i], 0.0, LatentMode::Point);
    nll += lt.nll.item();
    segments += lt.segments;
  }
  return perplexity(nll, segments);
}

double corpus_mean_p_cont(Model& m, const std::vector<std::string>& src_lines,
                          const std::vector<std::string>& tgt_lines) {
  check_corpus(src_lines, tgt_lines, "feature-mass");
  if (m.config().variant != Variant::Lmm || m.config().features == 0) return 0.0;
  double sum = 0;
  int64_t words_seen = 0;
  for (size_t i = 0; i < src_lines.size(); ++i) {
    EncodedSource src = m.encode(m.source_ids(src_lines[i]));
    std::vector<std::vector<int>> words = m.word_target_ids(tgt_lines[i]);
    if (words.empty()) throw std::invalid_argument("empty target sentence");
    words.push_back({kEos});
    WordState st = m.word_init(src);
    std::vector<int> prev = {kBos};
    for (const auto& spelling : words) {
      WordAdvance adv = m.word_advance(src, st, prev, LatentMode::Point);
      sum += m.mean_p_cont(adv.latents);
      ++words_seen;
      st = adv.state;
      prev = spelling;
    }
  }
  return sum / static_cast<double>(words_seen);
}

double teacher_forced_accuracy(Model& m, const std::vector<std::string>& src_lines,
                               const std::vector<std::string>& tgt_lines) {
  check_corpus(src_lines, tgt_lines, "accuracy");
  int64_t hits = 0, total = 0;
  for (size_t i = 0; i < src_lines.size(); ++i) {
    EncodedSource src = m.encode(m.source_ids(src_lines[i]));
    if (atomic_variant(m.config().variant)) {
      std::vector<int> ids = m.atomic_target_ids(tgt_lines[i]);
      if (ids.empty()) throw std::invalid_argument("empty target sentence");
      ids.push_back(kEos);
      AtomicState st = m.atomic_init(src);
      int prev = kBos;
      for (int id : ids) {
        AtomicStep step = m.atomic_step(src, st, prev);
        hits += argmax_value(step.log_probs) == id;
        ++total;
        st = step.state;
        prev = id;
      }
    } else {
      std::vector<std::vector<int>> words = m.word_target_ids(tgt_lines[i]);
      if (words.empty()) throw std::invalid_argument("empty target sentence");
      words.push_back({kEos});
      WordState st = m.word_init(src);
      std::vector<int> prev = {kBos};
      for (const auto& spelling : words) {
        WordAdvance adv = m.word_advance(src, st, prev, LatentMode::Point);
        Tensor h = m.char_init(adv.latents.t, adv.att.context);
        int prev_char = kBos;
        for (int id : spelling) {
          CharStepOut step = m.char_step(h, prev_char);
          hits += argmax_value(step.log_probs) == id;
          ++total;
          h = step.h;
          prev_char = id;
        }
        st = adv.state;
        prev = spelling;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

double global_grad_norm(const std::vector<Tensor>& params) {
  double s = 0;
  for (const auto& p : params) {
    for (double g : p.impl()->grad) s += g * g;
  }
  return std::sqrt(s);
}

double clip_global_norm(const std::vector<Tensor>& params, double max_norm) {
  double norm = global_grad_norm(params);
  if (norm > max_norm) {
    double f = max_norm / norm;
    scale_grads(params, f);
  }
  return norm;
}

void scale_grads(const std::vector<Tensor>& params, double factor) {
  for (const auto& p : params) {
    for (double& g : p.impl()->grad) g *= factor;
  }
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr_ <= 0) throw std::invalid_argument("learning rate must be positive");
  m1_.reserve(params_.size());
  m2_.reserve(params_.size());
  for (const auto& p : params_) {
    m1_.emplace_back(p.size(), 0.0);
    m2_.emplace_back(p.size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    p.impl()->ensure_grad();
    std::fill(p.impl()->grad.begin(), p.impl()->grad.end(), 0.0);
  }
}

void Adam::set_lr(double lr) {
  if (lr <= 0) throw std::invalid_argument("learning rate must be positive");
  lr_ = lr;
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    params_[pi].impl()->ensure_grad();
    const auto& g = params_[pi].impl()->grad;
    auto& value = params_[pi].impl()->value;
    auto& m1 = m1_[pi];
    auto& m2 = m2_[pi];
    for (size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) throw DivergenceError("non-finite gradient in optimizer step");
      m1[i] = beta1_ * m1[i] + (1.0 - beta1_) * g[i];
      m2[i] = beta2_ * m2[i] + (1.0 - beta2_) * g[i] * g[i];
      value[i] -= lr_ * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps_);
    }
  }
}

std::string format_epoch(const EpochStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.6f\t%.8f\t%.6f", s.epoch, s.train_loss, s.dev_ppl,
                s.lr, s.mean_p_cont);
  return buf;
}

Trainer::Trainer(Model& model, const TrainOptions& opt, std::vector<std::string> train_src,
                 std::vector<std::string> train_tgt, std::vector<std::string> dev_src,
                 std::vector<std::string> dev_tgt)
    : model_(model),
      opt_(opt),
      train_src_(std::move(train_src)),
      train_tgt_(std::move(train_tgt)),
      dev_src_(std::move(dev_src)),
      dev_tgt_(std::move(dev_tgt)),
      adam_(model.params().tensors(), opt.lr),
      shuffle_rng_(Rng::mix(opt.seed, 1)),
      dropout_rng_(Rng::mix(opt.seed, 2)),
      latent_rng_(Rng::mix(opt.seed, 3)) {
  check_corpus(train_src_, train_tgt_, "training");
  check_corpus(dev_src_, dev_tgt_, "dev");
  if (opt_.batch < 1) throw std::invalid_argument("batch size must be at least 1");
  if (opt_.rho < 0) throw std::invalid_argument("penalty weight must be nonnegative");
  plateau_.factor = opt_.lr_decay;
  // Surface bad sentences (empty after tokenization) before any epoch
  // runs, so that op-level non-finite errors during training can be
  // attributed to divergence alone.
  for (size_t i = 0; i < train_src_.size(); ++i) {
    sentence_loss(model_, train_src_[i], train_tgt_[i], 0.0, LatentMode::Point);
  }
  for (size_t i = 0; i < dev_src_.size(); ++i) {
    sentence_loss(model_, dev_src_[i], dev_tgt_[i], 0.0, LatentMode::Point);
  }
  snapshot();
}

void Trainer::snapshot() {
  last_good_.clear();
  for (const auto& p : model_.params().tensors()) last_good_.push_back(p.values());
}

void Trainer::restore_last_good() {
  std::vector<Tensor> params = model_.params().tensors();
  for (size_t i = 0; i < params.size(); ++i) params[i].values() = last_good_[i];
}

EpochStats Trainer::run_epoch() {
  ++epoch_;
  std::vector<Tensor> params = model_.params().tensors();
  std::vector<size_t> order(train_src_.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[shuffle_rng_.below(i)]);
  }

  double loss_sum = 0;
  model_.set_training(true, opt_.dropout, &dropout_rng_);
  try {
    for (size_t start = 0; start < order.size(); start += opt_.batch) {
      size_t n = std::min(order.size() - start, static_cast<size_t>(opt_.batch));
      adam_.zero_grad();
      for (size_t j = 0; j < n; ++j) {
        Tape tape;
        LossTerms lt = sentence_loss(model_, train_src_[order[start + j]],
                                     train_tgt_[order[start + j]], opt_.rho, LatentMode::Sample,
                                     &latent_rng_);
        if (!std::isfinite(lt.total.item())) throw DivergenceError("non-finite training loss");
        loss_sum += lt.total.item();
        tape.backward(lt.total);
      }
      scale_grads(params, 1.0 / static_cast<double>(n));
      clip_global_norm(params, opt_.clip_norm);
      adam_.step();
    }
  } catch (const std::invalid_argument& e) {
    // Inputs were validated up front, so a non-finite-operand error mid
    // epoch means the parameters blew up.
    model_.set_training(false);
    throw DivergenceError(std::string("diverged: ") + e.what());
  } catch (...) {
    model_.set_training(false);
    throw;
  }
  model_.set_training(false);

  EpochStats s;
  s.epoch = epoch_;
  s.train_loss = loss_sum / static_cast<double>(train_src_.size());
  try {
    s.dev_ppl = corpus_perplexity(model_, dev_src_, dev_tgt_);
    s.mean_p_cont = corpus_mean_p_cont(model_, dev_src_, dev_tgt_);
  } catch (const std::invalid_argument& e) {
    throw DivergenceError(std::string("diverged: ") + e.what());
  }
  s.lr = adam_.lr();
  if (!std::isfinite(s.dev_ppl)) throw DivergenceError("non-finite dev perplexity");
  adam_.set_lr(plateau_.apply(adam_.lr(), s.dev_ppl));
  log_.push_back(s);
  snapshot();
  return s;
}

}  // namespace lmm
