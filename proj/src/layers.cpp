#include "lmm/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace lmm {

Tensor ParamStore::add(const std::string& name, Tensor t) {
  for (const auto& [n, unused] : entries_)
    if (n == name) throw std::logic_error("duplicate parameter name: " + name);
  t.set_requires_grad(true);
  entries_.emplace_back(name, t);
  return t;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [n, t] : entries_) out.push_back(t);
  return out;
}

Tensor ParamStore::find(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  return {};
}

Tensor init_matrix(ParamStore& ps, const std::string& name, int rows, int cols, Rng& rng) {
  double bound = std::sqrt(6.0 / (rows + cols));
  return ps.add(name, Tensor::uniform({rows, cols}, -bound, bound, rng));
}

Tensor init_vector(ParamStore& ps, const std::string& name, int n) {
  return ps.add(name, Tensor::zeros({n}));
}

namespace {
Tensor apply_act(const Tensor& x, Act act) {
  switch (act) {
    case Act::None: return x;
    case Act::Tanh: return tanh(x);
    case Act::Softplus: return softplus(x);
  }
  return x;
}
}  // namespace

Dense::Dense(ParamStore& ps, const std::string& name, int in, int out, Act act_, Rng& rng)
    : W(init_matrix(ps, name + ".W", out, in, rng)),
      b(init_vector(ps, name + ".b", out)),
      act(act_) {}

Tensor Dense::operator()(const Tensor& x) const {
  return apply_act(add(matvec(W, x), b), act);
}

Mlp2::Mlp2(ParamStore& ps, const std::string& name, int in, int hidden, int out, Act out_act,
           Rng& rng)
    : l1(ps, name + ".l1", in, hidden, Act::Tanh, rng),
      l2(ps, name + ".l2", hidden, out, out_act, rng) {}

Tensor Mlp2::operator()(const Tensor& x) const { return l2(l1(x)); }

GruCell::GruCell(ParamStore& ps, const std::string& name, int in, int hidden, Rng& rng)
    : Wz(init_matrix(ps, name + ".Wz", hidden, in, rng)),
      Uz(init_matrix(ps, name + ".Uz", hidden, hidden, rng)),
      bz(init_vector(ps, name + ".bz", hidden)),
      Wr(init_matrix(ps, name + ".Wr", hidden, in, rng)),
      Ur(init_matrix(ps, name + ".Ur", hidden, hidden, rng)),
      br(init_vector(ps, name + ".br", hidden)),
      Wh(init_matrix(ps, name + ".Wh", hidden, in, rng)),
      Uh(init_matrix(ps, name + ".Uh", hidden, hidden, rng)),
      bh(init_vector(ps, name + ".bh", hidden)) {}

Tensor GruCell::step(const Tensor& x, const Tensor& h) const {
  Tensor z = sigmoid(add(add(matvec(Wz, x), matvec(Uz, h)), bz));
  Tensor r = sigmoid(add(add(matvec(Wr, x), matvec(Ur, h)), br));
  Tensor hc = tanh(add(add(matvec(Wh, x), matvec(Uh, mul(r, h))), bh));
  return add(mul(sub(1.0, z), h), mul(z, hc));
}

std::vector<Tensor> bi_rnn_encode(const GruCell& fwd, const GruCell& bwd,
                                  const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("bi_rnn_encode: empty sequence");
  const int n = static_cast<int>(xs.size());
  std::vector<Tensor> f(n), g(n);
  Tensor hf = Tensor::zeros({fwd.hidden()});
  for (int i = 0; i < n; ++i) {
    hf = fwd.step(xs[i], hf);
    f[i] = hf;
  }
  Tensor hb = Tensor::zeros({bwd.hidden()});
  for (int i = n - 1; i >= 0; --i) {
    hb = bwd.step(xs[i], hb);
    g[i] = hb;
  }
  std::vector<Tensor> out(n);
  for (int i = 0; i < n; ++i) out[i] = concat({f[i], g[i]});
  return out;
}

Attention::Attention(ParamStore& ps, const std::string& name, int dim, Rng& rng)
    : W(init_matrix(ps, name + ".W", dim, 2 * dim, rng)), b(init_vector(ps, name + ".b", dim)) {}

AttentionState Attention::operator()(const Tensor& h, const Tensor& enc) const {
  if (enc.rank() != 2 || enc.dim(1) != h.dim(0))
    throw std::invalid_argument("attention: query " + shape_str(h.shape()) +
                                " does not dot with encoder states " + shape_str(enc.shape()));
  AttentionState st;
  st.weights = softmax(matvec(enc, h));
  st.context = tmatvec(enc, st.weights);
  st.hhat = tanh(add(matvec(W, concat({st.context, h})), b));
  return st;
}

CharCompose::CharCompose(ParamStore& ps, const std::string& name, int char_emb_dim, int hidden,
                         int out, Rng& rng)
    : fwd(ps, name + ".fwd", char_emb_dim, hidden, rng),
      bwd(ps, name + ".bwd", char_emb_dim, hidden, rng),
      Wf(init_matrix(ps, name + ".Wf", out, hidden, rng)),
      Wb(init_matrix(ps, name + ".Wb", out, hidden, rng)),
      bias(init_vector(ps, name + ".bias", out)) {}

Tensor CharCompose::operator()(const std::vector<Tensor>& char_embs) const {
  if (char_embs.empty()) throw std::invalid_argument("char_compose: empty spelling");
  Tensor hf = Tensor::zeros({fwd.hidden()});
  for (const auto& e : char_embs) hf = fwd.step(e, hf);
  Tensor hb = Tensor::zeros({bwd.hidden()});
  for (auto it = char_embs.rbegin(); it != char_embs.rend(); ++it) hb = bwd.step(*it, hb);
  return add(add(matvec(Wf, hf), matvec(Wb, hb)), bias);
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (!training || rate == 0.0) return x;
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  std::vector<double> mask(x.size());
  const double scale = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : scale;
  return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

}  // namespace lmm
