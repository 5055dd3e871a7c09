#pragma once

// Network building blocks shared by the model variants: dense layers,
// GRU cells, the bidirectional encoder pass, dot-product attention and
// the character composition of word embeddings.
//
// Layers own their parameter tensors. Construction takes an Rng so that
// initialization order (and therefore every downstream value) is fixed
// by the run seed: matrices are uniform in [-0.08, 0.08), biases start
// at zero.

#include <vector>

#include "lmm/rng.hpp"
#include "lmm/tensor.hpp"

namespace lmm {

// Collects every learnable tensor under a stable dotted name. The
// registration order defines the checkpoint layout and the optimizer's
// slot order.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor t);
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  Tensor find(const std::string& name) const;  // undefined handle if absent

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Width-scaled uniform init: bound = sqrt(6 / (rows + cols)), so activation and
// gradient variance stay roughly constant across layers of different sizes.
Tensor init_matrix(ParamStore& ps, const std::string& name, int rows, int cols, Rng& rng);
Tensor init_vector(ParamStore& ps, const std::string& name, int n);  // zeros

enum class Act { None, Tanh, Softplus };

// y = act(W x + b)
struct Dense {
  Dense() = default;
  Dense(ParamStore& ps, const std::string& name, int in, int out, Act act, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  Tensor W, b;
  Act act = Act::None;
};

// Two-layer perceptron with a tanh hidden layer; the output activation
// is per-head (None for locations, Softplus for positive parameters).
struct Mlp2 {
  Mlp2() = default;
  Mlp2(ParamStore& ps, const std::string& name, int in, int hidden, int out, Act out_act,
       Rng& rng);
  Tensor operator()(const Tensor& x) const;
  Dense l1, l2;
};

// Gated recurrent unit:
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   hc = tanh(W x + U (r * h) + b)
//   h' = (1 - z) * h + z * hc
struct GruCell {
  GruCell() = default;
  GruCell(ParamStore& ps, const std::string& name, int in, int hidden, Rng& rng);
  Tensor step(const Tensor& x, const Tensor& h) const;
  int hidden() const { return Wz.dim(0); }
  Tensor Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh;
};

// Run fwd over the sequence and bwd over its reverse; output per
// position is [fwd_state ; bwd_state].
std::vector<Tensor> bi_rnn_encode(const GruCell& fwd, const GruCell& bwd,
                                  const std::vector<Tensor>& xs);

struct AttentionState {
  Tensor weights;  // softmax over source positions
  Tensor context;  // weighted sum of encoder states
  Tensor hhat;     // tanh(W [context ; h])
};

// Dot-product attention: scores are plain inner products between the
// query and each encoder state (rows of enc), so both must share one
// dimensionality.
struct Attention {
  Attention() = default;
  Attention(ParamStore& ps, const std::string& name, int dim, Rng& rng);
  AttentionState operator()(const Tensor& h, const Tensor& enc) const;  // enc: [n, dim]
  Tensor W, b;  // [dim, 2 dim]
};

// Word embedding composed from a character bi-RNN over the word's
// spelling: w = Wf hf + Wb hb + bias, where hf/hb are the final states
// of the two directions.
struct CharCompose {
  CharCompose() = default;
  CharCompose(ParamStore& ps, const std::string& name, int char_emb_dim, int hidden, int out,
              Rng& rng);
  Tensor operator()(const std::vector<Tensor>& char_embs) const;
  GruCell fwd, bwd;
  Tensor Wf, Wb, bias;
};

// Inverted dropout: keep with probability 1 - rate and scale by
// 1 / (1 - rate) so expectations match at decode time, where this is a
// no-op. The mask is drawn from rng, one uniform per element.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

}  // namespace lmm
