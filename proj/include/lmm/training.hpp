#pragma once

#include <lmm/model.hpp>

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace lmm {

// Thrown when optimization hits non-finite numbers; callers map this to
// the "restore the last good parameters and stop" path.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Loss pieces for one sentence pair.  The objective is teacher-forced
// reconstruction plus the weighted sparsity penalty and NOTHING ELSE:
// the approximate posterior over the latents is defined to equal the
// parameterized prior, so their divergence is identically zero and no
// such term belongs in this loss.  Do not add one.
struct LossTerms {
  Tensor nll;        // summed -log p over scored units
  Tensor reg;        // summed continuous-mass penalty; identically 0 unless lmm
  double rho = 0;    // penalty weight
  Tensor total;      // nll + rho * reg, on the same graph
  int segments = 0;  // scored units (subwords or characters, terminators included)
};

// One latent sample per word in Sample mode; Point mode is the
// deterministic evaluation path.  rng is required only by lmm sampling.
LossTerms sentence_loss(Model& m, const std::string& src_line, const std::string& tgt_line,
                        double rho, LatentMode mode, Rng* rng = nullptr);

// Teacher-forced corpus statistics, all with point latents and whatever
// training/dropout mode the model is currently in (the trainer evaluates
// with training off).
double corpus_perplexity(Model& m, const std::vector<std::string>& src_lines,
                         const std::vector<std::string>& tgt_lines);
// Mean continuous mass per feature, averaged over every word position
// (sentence terminator included, matching the penalty's sum); 0 for
// variants without sparse features.
double corpus_mean_p_cont(Model& m, const std::vector<std::string>& src_lines,
                          const std::vector<std::string>& tgt_lines);
// Fraction of teacher-forced positions whose unmasked argmax equals the
// gold unit.
double teacher_forced_accuracy(Model& m, const std::vector<std::string>& src_lines,
                               const std::vector<std::string>& tgt_lines);

// Gradient-buffer utilities over a parameter list (registration order).
double global_grad_norm(const std::vector<Tensor>& params);
// Scales gradients down to max_norm when they exceed it; returns the
// pre-clip norm.
double clip_global_norm(const std::vector<Tensor>& params, double max_norm);
void scale_grads(const std::vector<Tensor>& params, double factor);

// Bias-corrected Adam over the gradient buffers of its parameter list.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void zero_grad();
  void step();  // throws DivergenceError on a non-finite gradient

  double lr() const { return lr_; }
  void set_lr(double lr);
  int64_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m1_, m2_;
  double lr_;
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// lr <- factor * lr whenever the tracked perplexity fails to improve on
// the best seen so far ("does not decrease" includes staying equal).
struct PlateauDecay {
  double factor = 0.8;
  double best = std::numeric_limits<double>::infinity();

  double apply(double lr, double dev_perplexity) {
    if (dev_perplexity < best) {
      best = dev_perplexity;
      return lr;
    }
    return lr * factor;
  }
};

struct TrainOptions {
  double lr = 4e-4;
  double lr_decay = 0.8;
  double rho = 0.4;
  double dropout = 0.2;
  double clip_norm = 5.0;
  int batch = 16;
  uint64_t seed = 1;
};

struct EpochStats {
  int epoch = 0;          // 1-based
  double train_loss = 0;  // mean per-sentence total loss
  double dev_ppl = 0;
  double lr = 0;  // rate in effect during this epoch (decay applies after)
  double mean_p_cont = 0;
};

// "epoch<TAB>train_loss<TAB>dev_ppl<TAB>lr<TAB>mean_p_cont"
std::string format_epoch(const EpochStats& s);

// Epoch loop: shuffled batches, mean-loss gradients, global-norm clip,
// Adam, dev perplexity, plateau decay.  Batch order, dropout masks, and
// latent noise are all derived streams of the one run seed.
class Trainer {
 public:
  Trainer(Model& model, const TrainOptions& opt, std::vector<std::string> train_src,
          std::vector<std::string> train_tgt, std::vector<std::string> dev_src,
          std::vector<std::string> dev_tgt);

  EpochStats run_epoch();  // throws DivergenceError; model keeps the bad values
  void restore_last_good();  // parameters from the last finished epoch (or init)

  const std::vector<EpochStats>& log() const { return log_; }
  Adam& optimizer() { return adam_; }

 private:
  void snapshot();

  Model& model_;
  TrainOptions opt_;
  std::vector<std::string> train_src_, train_tgt_, dev_src_, dev_tgt_;
  Adam adam_;
  PlateauDecay plateau_;
  Rng shuffle_rng_, dropout_rng_, latent_rng_;
  std::vector<EpochStats> log_;
  std::vector<std::vector<double>> last_good_;
  int epoch_ = 0;
};

}  // namespace lmm
