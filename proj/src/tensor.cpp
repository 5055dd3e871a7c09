#include "lmm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lmm {

namespace {
thread_local Precision g_precision = Precision::Float64;
thread_local Tape* g_active_tape = nullptr;

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

// Gradient accumulation honours the numeric mode as well, so that a
// Float32 run never holds values outside binary32.
inline void acc(std::vector<double>& g, int64_t i, double v) {
  g[i] = g_precision == Precision::Float32 ? static_cast<double>(static_cast<float>(g[i] + v))
                                           : g[i] + v;
}
}  // namespace

Precision precision() { return g_precision; }
void set_precision(Precision p) { g_precision = p; }

double narrow(double v) {
  return g_precision == Precision::Float32 ? static_cast<double>(static_cast<float>(v)) : v;
}

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? " x " : "") << s[i];
  os << "]";
  return os.str();
}

// ---- Tensor ----

Tensor Tensor::make(std::vector<int> shape) {
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("tensor dimensions must be nonnegative, got " +
                                           shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->value.assign(shape_numel(shape), 0.0);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor op_output(std::vector<int> shape) { return Tensor::make(std::move(shape)); }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t = make(std::move(shape));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
  Tensor t = make(std::move(shape));
  std::fill(t.values().begin(), t.values().end(), narrow(v));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) { return full({}, v, requires_grad); }

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size()))
    throw std::invalid_argument("tensor shape " + shape_str(shape) + " does not hold " +
                                std::to_string(values.size()) + " values");
  Tensor t = make(std::move(shape));
  for (size_t i = 0; i < values.size(); ++i) t.values()[i] = narrow(values[i]);
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::uniform(std::vector<int> shape, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  Tensor t = make(std::move(shape));
  for (auto& v : t.values()) v = narrow(rng.uniform(lo, hi));
  t.set_requires_grad(requires_grad);
  return t;
}

double Tensor::item() const {
  if (!impl_ || impl_->size() != 1)
    throw std::invalid_argument("item() needs a single-element tensor, got " +
                                (impl_ ? shape_str(shape()) : std::string("undefined")));
  return impl_->value[0];
}

Tensor Tensor::detach() const {
  Tensor t = make(impl_->shape);
  t.values() = impl_->value;
  return t;
}

// ---- Tape ----

Tape::Tape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> adjoint) { records_.push_back(std::move(adjoint)); }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward() needs a single-element loss");
  if (loss.impl()->producer != this)
    throw std::invalid_argument("backward() loss was not produced on this tape");
  if (used_) throw std::logic_error("backward() may run only once per tape");
  used_ = true;
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

// ---- op plumbing ----

namespace {

void finish(Tensor& out, std::initializer_list<Tensor> inputs, std::function<void()> adjoint) {
  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.requires_grad();
  Tape* tape = Tape::active();
  if (needs && tape) {
    out.set_requires_grad(true);
    out.impl()->producer = tape;
    tape->record(std::move(adjoint));
  }
}

void finish(Tensor& out, const std::vector<Tensor>& inputs, std::function<void()> adjoint) {
  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.requires_grad();
  Tape* tape = Tape::active();
  if (needs && tape) {
    out.set_requires_grad(true);
    out.impl()->producer = tape;
    tape->record(std::move(adjoint));
  }
}

void check_defined(const Tensor& a, const char* name) {
  if (!a.defined()) throw std::invalid_argument(std::string(name) + ": undefined operand");
}

// Operands must have equal shapes, or one of them must be a single
// element (broadcast against every element of the other).
void check_binary(const Tensor& a, const Tensor& b, const char* name) {
  check_defined(a, name);
  check_defined(b, name);
  if (a.shape() == b.shape()) return;
  if (a.size() == 1 || b.size() == 1) return;
  throw std::invalid_argument(std::string(name) + ": shape mismatch " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
}

const std::vector<int>& out_shape(const Tensor& a, const Tensor& b) {
  return a.size() >= b.size() ? a.shape() : b.shape();
}

using UnaryFn = double (*)(double x);
using UnaryDf = double (*)(double x, double y);  // input value, output value

Tensor unary_op(const Tensor& a, UnaryFn f, UnaryDf df, const char* name) {
  check_defined(a, name);
  Tensor out = op_output(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  for (int64_t i = 0; i < a.size(); ++i) ov[i] = narrow(f(av[i]));
  finish(out, {a}, [a, out, df] {
    if (!out.has_grad() || !a.requires_grad()) return;
    a.impl()->ensure_grad();
    auto& ag = a.impl()->grad;
    const auto& og = out.impl()->grad;
    const auto& av = a.values();
    const auto& ov = out.values();
    for (int64_t i = 0; i < out.size(); ++i) acc(ag, i, og[i] * df(av[i], ov[i]));
  });
  return out;
}

using UnaryKFn = double (*)(double x, double k);
using UnaryKDf = double (*)(double x, double y, double k);

Tensor unary_const_op(const Tensor& a, double k, UnaryKFn f, UnaryKDf df, const char* name) {
  check_defined(a, name);
  Tensor out = op_output(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  for (int64_t i = 0; i < a.size(); ++i) ov[i] = narrow(f(av[i], k));
  finish(out, {a}, [a, out, df, k] {
    if (!out.has_grad() || !a.requires_grad()) return;
    a.impl()->ensure_grad();
    auto& ag = a.impl()->grad;
    const auto& og = out.impl()->grad;
    const auto& av = a.values();
    const auto& ov = out.values();
    for (int64_t i = 0; i < out.size(); ++i) acc(ag, i, og[i] * df(av[i], ov[i], k));
  });
  return out;
}

using BinFn = double (*)(double x, double y);
using BinDf = double (*)(double x, double y, double o);  // d(out)/d(operand)

Tensor binary_op(const Tensor& a, const Tensor& b, BinFn f, BinDf da, BinDf db,
                 const char* name) {
  check_binary(a, b, name);
  const bool sa = a.size() == 1, sb = b.size() == 1;
  Tensor out = op_output(out_shape(a, b));
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (int64_t i = 0; i < out.size(); ++i) ov[i] = narrow(f(av[sa ? 0 : i], bv[sb ? 0 : i]));
  finish(out, {a, b}, [a, b, out, da, db] {
    if (!out.has_grad()) return;
    const auto& og = out.impl()->grad;
    const auto& av = a.values();
    const auto& bv = b.values();
    const auto& ov = out.values();
    const bool sa = a.size() == 1, sb = b.size() == 1;
    if (a.requires_grad()) {
      a.impl()->ensure_grad();
      auto& ag = a.impl()->grad;
      for (int64_t i = 0; i < out.size(); ++i) {
        int64_t ia = sa ? 0 : i, ib = sb ? 0 : i;
        acc(ag, ia, og[i] * da(av[ia], bv[ib], ov[i]));
      }
    }
    if (b.requires_grad()) {
      b.impl()->ensure_grad();
      auto& bg = b.impl()->grad;
      for (int64_t i = 0; i < out.size(); ++i) {
        int64_t ia = sa ? 0 : i, ib = sb ? 0 : i;
        acc(bg, ib, og[i] * db(av[ia], bv[ib], ov[i]));
      }
    }
  });
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; },
      "mul");
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); }, "div");
}

Tensor neg(const Tensor& a) {
  return unary_op(
      a, [](double x) { return -x; }, [](double, double) { return -1.0; }, "neg");
}

Tensor add(const Tensor& a, double c) {
  return unary_const_op(
      a, c, [](double x, double k) { return x + k; },
      [](double, double, double) { return 1.0; }, "add");
}

Tensor sub(const Tensor& a, double c) { return add(a, -c); }

Tensor sub(double c, const Tensor& a) {
  return unary_const_op(
      a, c, [](double x, double k) { return k - x; },
      [](double, double, double) { return -1.0; }, "sub");
}

Tensor mul(const Tensor& a, double c) {
  return unary_const_op(
      a, c, [](double x, double k) { return x * k; },
      [](double, double, double k) { return k; }, "mul");
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, [](double x) { return stable_sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      a, [](double x) { return stable_softplus(x); },
      [](double x, double) { return stable_sigmoid(x); }, "softplus");
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

Tensor log(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }, "log");
}

Tensor pow(const Tensor& a, double p) {
  return unary_const_op(
      a, p, [](double x, double k) { return std::pow(x, k); },
      [](double x, double, double k) { return k * std::pow(x, k - 1.0); }, "pow");
}

Tensor pow(const Tensor& a, const Tensor& p) {
  return binary_op(
      a, p, [](double x, double y) { return std::pow(x, y); },
      [](double x, double y, double) { return y * std::pow(x, y - 1.0); },
      [](double x, double, double o) { return o * std::log(x); }, "pow");
}

// The subgradient at the kink and in the clamped region is 0: strict
// comparison below.
Tensor min_const(const Tensor& a, double c) {
  return unary_const_op(
      a, c, [](double x, double k) { return x < k ? x : k; },
      [](double x, double, double k) { return x < k ? 1.0 : 0.0; }, "min_const");
}

Tensor max_const(const Tensor& a, double c) {
  return unary_const_op(
      a, c, [](double x, double k) { return x > k ? x : k; },
      [](double x, double, double k) { return x > k ? 1.0 : 0.0; }, "max_const");
}

Tensor clamp(const Tensor& a, double lo, double hi) { return min_const(max_const(a, lo), hi); }

// ---- reductions / structure ----

Tensor sum(const Tensor& a) {
  check_defined(a, "sum");
  double s = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) s += a.value(i);
  Tensor out = op_output({});
  out.values()[0] = narrow(s);
  finish(out, {a}, [a, out] {
    if (!out.has_grad() || !a.requires_grad()) return;
    a.impl()->ensure_grad();
    auto& ag = a.impl()->grad;
    double g = out.impl()->grad[0];
    for (int64_t i = 0; i < a.size(); ++i) acc(ag, i, g);
  });
  return out;
}

Tensor mean(const Tensor& a) {
  check_defined(a, "mean");
  if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
  return mul(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor pick(const Tensor& a, int64_t i) {
  check_defined(a, "pick");
  if (i < 0 || i >= a.size())
    throw std::out_of_range("pick: index " + std::to_string(i) + " outside tensor of " +
                            std::to_string(a.size()) + " elements");
  Tensor out = op_output({});
  out.values()[0] = a.value(i);
  finish(out, {a}, [a, out, i] {
    if (!out.has_grad() || !a.requires_grad()) return;
    a.impl()->ensure_grad();
    acc(a.impl()->grad, i, out.impl()->grad[0]);
  });
  return out;
}

Tensor slice(const Tensor& a, int64_t start, int64_t len) {
  check_defined(a, "slice");
  if (a.rank() != 1) throw std::invalid_argument("slice: rank-1 tensor expected");
  if (start < 0 || len < 0 || start + len > a.size())
    throw std::out_of_range("slice: [" + std::to_string(start) + ", " +
                            std::to_string(start + len) + ") outside tensor of " +
                            std::to_string(a.size()) + " elements");
  Tensor out = op_output({static_cast<int>(len)});
  for (int64_t i = 0; i < len; ++i) out.values()[i] = a.value(start + i);
  finish(out, {a}, [a, out, start, len] {
    if (!out.has_grad() || !a.requires_grad()) return;
    a.impl()->ensure_grad();
    auto& ag = a.impl()->grad;
    const auto& og = out.impl()->grad;
    for (int64_t i = 0; i < len; ++i) acc(ag, start + i, og[i]);
  });
  return out;
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no operands");
  int64_t total = 0;
  for (const auto& p : parts) {
    check_defined(p, "concat");
    if (p.rank() != 1) throw std::invalid_argument("concat: rank-1 tensors expected");
    total += p.size();
  }
  Tensor out = op_output({static_cast<int>(total)});
  int64_t at = 0;
  for (const auto& p : parts)
    for (int64_t i = 0; i < p.size(); ++i) out.values()[at++] = p.value(i);
  finish(out, parts, [parts, out] {
    if (!out.has_grad()) return;
    const auto& og = out.impl()->grad;
    int64_t at = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) {
        p.impl()->ensure_grad();
        auto& pg = p.impl()->grad;
        for (int64_t i = 0; i < p.size(); ++i) acc(pg, i, og[at + i]);
      }
      at += p.size();
    }
  });
  return out;
}

Tensor row(const Tensor& m, int64_t id) {
  check_defined(m, "row");
  if (m.rank() != 2) throw std::invalid_argument("row: rank-2 tensor expected");
  int64_t n = m.dim(0), d = m.dim(1);
  if (id < 0 || id >= n)
    throw std::out_of_range("row: index " + std::to_string(id) + " outside " + shape_str(m.shape()));
  Tensor out = op_output({static_cast<int>(d)});
  for (int64_t j = 0; j < d; ++j) out.values()[j] = m.value(id * d + j);
  finish(out, {m}, [m, out, id, d] {
    if (!out.has_grad() || !m.requires_grad()) return;
    m.impl()->ensure_grad();
    auto& mg = m.impl()->grad;
    const auto& og = out.impl()->grad;
    for (int64_t j = 0; j < d; ++j) acc(mg, id * d + j, og[j]);
  });
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no operands");
  int64_t d = rows[0].size();
  for (const auto& r : rows) {
    check_defined(r, "stack_rows");
    if (r.rank() != 1 || r.size() != d)
      throw std::invalid_argument("stack_rows: rank-1 tensors of equal length expected");
  }
  Tensor out = op_output({static_cast<int>(rows.size()), static_cast<int>(d)});
  for (size_t i = 0; i < rows.size(); ++i)
    for (int64_t j = 0; j < d; ++j) out.values()[i * d + j] = rows[i].value(j);
  finish(out, rows, [rows, out, d] {
    if (!out.has_grad()) return;
    const auto& og = out.impl()->grad;
    for (size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].requires_grad()) continue;
      rows[i].impl()->ensure_grad();
      auto& rg = rows[i].impl()->grad;
      for (int64_t j = 0; j < d; ++j) acc(rg, j, og[i * d + j]);
    }
  });
  return out;
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = op_output({static_cast<int>(m), static_cast<int>(n)});
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int64_t l = 0; l < k; ++l) s += av[i * k + l] * bv[l * n + j];
      ov[i * n + j] = narrow(s);
    }
  finish(out, {a, b}, [a, b, out, m, k, n] {
    if (!out.has_grad()) return;
    const auto& og = out.impl()->grad;
    const auto& av = a.values();
    const auto& bv = b.values();
    if (a.requires_grad()) {
      a.impl()->ensure_grad();
      auto& ag = a.impl()->grad;
      for (int64_t i = 0; i < m; ++i)
        for (int64_t l = 0; l < k; ++l) {
          double s = 0.0;
          for (int64_t j = 0; j < n; ++j) s += og[i * n + j] * bv[l * n + j];
          acc(ag, i * k + l, s);
        }
    }
    if (b.requires_grad()) {
      b.impl()->ensure_grad();
      auto& bg = b.impl()->grad;
      for (int64_t l = 0; l < k; ++l)
        for (int64_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (int64_t i = 0; i < m; ++i) s += av[i * k + l] * og[i * n + j];
          acc(bg, l * n + j, s);
        }
    }
  });
  return out;
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  check_defined(a, "matvec");
  check_defined(x, "matvec");
  if (a.rank() != 2 || x.rank() != 1 || a.dim(1) != x.dim(0))
    throw std::invalid_argument("matvec: incompatible shapes " + shape_str(a.shape()) + " and " +
                                shape_str(x.shape()));
  int64_t m = a.dim(0), k = a.dim(1);
  Tensor out = op_output({static_cast<int>(m)});
  const auto& av = a.values();
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (int64_t l = 0; l < k; ++l) s += av[i * k + l] * xv[l];
    ov[i] = narrow(s);
  }
  finish(out, {a, x}, [a, x, out, m, k] {
    if (!out.has_grad()) return;
    const auto& og = out.impl()->grad;
    const auto& av = a.values();
    const auto& xv = x.values();
    if (a.requires_grad()) {
      a.impl()->ensure_grad();
      auto& ag = a.impl()->grad;
      for (int64_t i = 0; i < m; ++i)
        for (int64_t l = 0; l < k; ++l) acc(ag, i * k + l, og[i] * xv[l]);
    }
    if (x.requires_grad()) {
      x.impl()->ensure_grad();
      auto& xg = x.impl()->grad;
      for (int64_t l = 0; l < k; ++l) {
        double s = 0.0;
        for (int64_t i = 0; i < m; ++i) s += og[i] * av[i * k + l];
        acc(xg, l, s);
      }
    }
  });
  return out;
}

Tensor tmatvec(const Tensor& a, const Tensor& w) {
  check_defined(a, "tmatvec");
  check_defined(w, "tmatvec");
  if (a.rank() != 2 || w.rank() != 1 || a.dim(0) != w.dim(0))
    throw std::invalid_argument("tmatvec: incompatible shapes " + shape_str(a.shape()) + " and " +
                                shape_str(w.shape()));
  int64_t m = a.dim(0), k = a.dim(1);
  Tensor out = op_output({static_cast<int>(k)});
  const auto& av = a.values();
  const auto& wv = w.values();
  auto& ov = out.values();
  for (int64_t l = 0; l < k; ++l) {
    double s = 0.0;
    for (int64_t i = 0; i < m; ++i) s += av[i * k + l] * wv[i];
    ov[l] = narrow(s);
  }
  finish(out, {a, w}, [a, w, out, m, k] {
    if (!out.has_grad()) return;
    const auto& og = out.impl()->grad;
    const auto& av = a.values();
    const auto& wv = w.values();
    if (a.requires_grad()) {
      a.impl()->ensure_grad();
      auto& ag = a.impl()->grad;
      for (int64_t i = 0; i < m; ++i)
        for (int64_t l = 0; l < k; ++l) acc(ag, i * k + l, wv[i] * og[l]);
    }
    if (w.requires_grad()) {
      w.impl()->ensure_grad();
      auto& wg = w.impl()->grad;
      for (int64_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (int64_t l = 0; l < k; ++l) s += av[i * k + l] * og[l];
        acc(wg, i, s);
      }
    }
  });
  return out;
}

Tensor softmax(const Tensor& a) {
  check_defined(a, "softmax");
  if (a.rank() != 1 || a.size() == 0)
    throw std::invalid_argument("softmax: nonempty rank-1 tensor expected");
  double m = a.value(0);
  for (int64_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a.value(i))) throw std::invalid_argument("softmax: non-finite input");
    m = std::max(m, a.value(i));
  }
  Tensor out = op_output(a.shape());
  auto& ov = out.values();
  double s = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    ov[i] = std::exp(a.value(i) - m);
    s += ov[i];
  }
  for (int64_t i = 0; i < a.size(); ++i) ov[i] = narrow(ov[i] / s);
  finish(out, {a}, [a, out] {
    if (!out.has_grad() || !a.requires_grad()) return;
    a.impl()->ensure_grad();
    auto& ag = a.impl()->grad;
    const auto& og = out.impl()->grad;
    const auto& ov = out.values();
    double dot = 0.0;
    for (int64_t i = 0; i < out.size(); ++i) dot += og[i] * ov[i];
    for (int64_t i = 0; i < out.size(); ++i) acc(ag, i, ov[i] * (og[i] - dot));
  });
  return out;
}

Tensor log_softmax(const Tensor& a) {
  check_defined(a, "log_softmax");
  if (a.rank() != 1 || a.size() == 0)
    throw std::invalid_argument("log_softmax: nonempty rank-1 tensor expected");
  double m = a.value(0);
  for (int64_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a.value(i))) throw std::invalid_argument("log_softmax: non-finite input");
    m = std::max(m, a.value(i));
  }
  // a - (m + log sum exp(a - m)); the max enters as a constant shift, so
  // the gradient of the composition is exactly I - softmax.
  Tensor shifted = sub(a, m);
  Tensor lse = add(log(sum(exp(shifted))), m);
  return sub(a, lse);
}

// ---- gradient checking ----

// Central differences lose ~|f|*eps/(2h) to cancellation (~1e-11 for h=1e-5),
// so the error is normalized with an absolute floor: components where both
// sides sit below the noise floor must not dominate the report.
constexpr double kGradCheckFloor = 1e-6;

// The floor scales with the magnitude of the function being differenced:
// two evaluations of size |f| taken 2h apart carry O(|f| eps / h)
// cancellation noise, so slopes below that scale are indistinguishable
// from zero and must not dominate the reported error.
double gradcheck_rel(double analytic, double numeric, double f_scale) {
  double floor = kGradCheckFloor * std::max(1.0, f_scale);
  return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + floor);
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h) {
  PrecisionGuard g64(Precision::Float64);
  Tensor xg = Tensor::from(x.shape(), x.values(), true);
  std::vector<double> analytic;
  double f_scale = 0.0;
  {
    Tape tape;
    Tensor loss = f(xg);
    if (loss.size() != 1)
      throw std::invalid_argument("finite_diff_check: f must produce a single-element tensor");
    f_scale = std::abs(loss.item());
    tape.backward(loss);
    xg.impl()->ensure_grad();
    analytic = xg.impl()->grad;
  }
  double worst = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) {
    Tensor xp = Tensor::from(x.shape(), x.values());
    xp.values()[i] += h;
    double fp = f(xp).item();
    Tensor xm = Tensor::from(x.shape(), x.values());
    xm.values()[i] -= h;
    double fm = f(xm).item();
    double numeric = (fp - fm) / (2.0 * h);
    worst = std::max(worst, gradcheck_rel(analytic[i], numeric, f_scale));
  }
  return worst;
}

double finite_diff_check_params(const std::function<Tensor()>& builder,
                                const std::vector<Tensor>& params, double h) {
  PrecisionGuard g64(Precision::Float64);
  for (const auto& p : params) {
    p.impl()->ensure_grad();
    std::fill(p.impl()->grad.begin(), p.impl()->grad.end(), 0.0);
  }
  double f_scale = 0.0;
  {
    Tape tape;
    Tensor loss = builder();
    if (loss.size() != 1)
      throw std::invalid_argument("finite_diff_check_params: builder must produce a scalar");
    f_scale = std::abs(loss.item());
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.push_back(p.impl()->grad);

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].impl()->value;
    for (size_t i = 0; i < vals.size(); ++i) {
      double saved = vals[i];
      vals[i] = saved + h;
      double fp = builder().item();
      vals[i] = saved - h;
      double fm = builder().item();
      vals[i] = saved;
      double numeric = (fp - fm) / (2.0 * h);
      worst = std::max(worst, gradcheck_rel(analytic[pi][i], numeric, f_scale));
    }
  }
  return worst;
}

}  // namespace lmm
