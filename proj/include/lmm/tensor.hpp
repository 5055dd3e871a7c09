#pragma once

// Dense tensors with tape-based reverse-mode differentiation.
//
// The design is deliberately small: flat row-major buffers, an explicit
// gradient tape that records one adjoint callback per executed op, and a
// single backward() that walks the records in reverse execution order.
// There is no graph pruning, no broadcasting beyond scalars, and no
// higher-order differentiation — exactly what the models here need.
//
// A Tape is active for the current thread between its construction and
// destruction. Ops executed while a tape is active record their adjoints
// on it when any input requires gradients; with no active tape the same
// ops run as plain inference arithmetic. Tapes and the tensors recorded
// on them belong to one logical thread; independent threads may each run
// their own tape.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lmm/rng.hpp"

namespace lmm {

// Numeric width for all tensor arithmetic on the current thread.
// Float32 rounds every op result through IEEE-754 binary32, so training
// runs and checkpoints are exactly representable in single precision;
// Float64 keeps full double width and is what gradient checks use.
enum class Precision { Float32, Float64 };

Precision precision();
void set_precision(Precision p);

struct PrecisionGuard {
  explicit PrecisionGuard(Precision p) : saved(precision()) { set_precision(p); }
  ~PrecisionGuard() { set_precision(saved); }
  Precision saved;
};

// Round v to the current numeric width.
double narrow(double v);

struct Shape : std::vector<int> {
  using std::vector<int>::vector;
};

std::string shape_str(const std::vector<int>& s);

class Tape;

struct TensorImpl {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first use
  bool requires_grad = false;
  Tape* producer = nullptr;  // tape that recorded the op producing this tensor

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

// Value-semantic handle to a shared tensor payload. Copies alias the
// same storage, which is what both the tape and beam-search state
// snapshots rely on.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> values,
                     bool requires_grad = false);
  // Entries i.i.d. uniform in [lo, hi).
  static Tensor uniform(std::vector<int> shape, double lo, double hi, Rng& rng,
                        bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int64_t size() const { return impl_->size(); }
  int dim(int i) const { return impl_->shape[i]; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }

  const std::vector<double>& values() const { return impl_->value; }
  std::vector<double>& values() { return impl_->value; }
  double value(int64_t i) const { return impl_->value[i]; }
  // Value of a single-element tensor.
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  std::vector<double>& grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad() {
    if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }

  // Copy of the values with gradient tracking severed.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  static Tensor make(std::vector<int> shape);
  std::shared_ptr<TensorImpl> impl_;

  friend Tensor op_output(std::vector<int> shape);
};

// Gradient tape. Construction pushes this tape as the thread's active
// tape, destruction pops it. backward(loss) seeds d(loss)/d(loss) = 1 and
// runs the recorded adjoints once, newest to oldest; each call after the
// first would accumulate duplicate gradients, so a tape is backward()ed
// at most once.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> adjoint);
  // loss must be a single-element tensor produced on this tape.
  void backward(const Tensor& loss);
  size_t n_records() const { return records_.size(); }

  static Tape* active();

 private:
  std::vector<std::function<void()>> records_;
  Tape* prev_ = nullptr;
  bool used_ = false;
};

// ---- elementwise ops (shapes equal, or one operand a single element) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);

Tensor add(const Tensor& a, double c);
Tensor sub(const Tensor& a, double c);
Tensor sub(double c, const Tensor& a);
Tensor mul(const Tensor& a, double c);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// a^p elementwise; a must be positive where p has a gradient path.
Tensor pow(const Tensor& a, double p);
Tensor pow(const Tensor& a, const Tensor& p);
// min/max against a constant. The subgradient at the kink (and in the
// flat region) is 0, which is what the rectifier in the latent model
// expects.
Tensor min_const(const Tensor& a, double c);
Tensor max_const(const Tensor& a, double c);
Tensor clamp(const Tensor& a, double lo, double hi);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return sub(a, c); }
inline Tensor operator-(double c, const Tensor& a) { return sub(c, a); }
inline Tensor operator*(const Tensor& a, double c) { return mul(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- reductions / structure ----
Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar
// Single element by flat index -> scalar.
Tensor pick(const Tensor& a, int64_t i);
// Rank-1 slice [start, start+len).
Tensor slice(const Tensor& a, int64_t start, int64_t len);
// Concatenate rank-1 tensors.
Tensor concat(const std::vector<Tensor>& parts);
// Row id of a [n, d] matrix -> [d]. Gradient scatters into that row.
Tensor row(const Tensor& m, int64_t id);
// Stack rank-1 tensors of equal length into a [n, d] matrix.
Tensor stack_rows(const std::vector<Tensor>& rows);

// ---- linear algebra ----
// [m, k] x [k, n] -> [m, n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m, k] x [k] -> [m]
Tensor matvec(const Tensor& a, const Tensor& x);
// A^T w: [m, k] x [m] -> [k]
Tensor tmatvec(const Tensor& a, const Tensor& w);

// Stabilized softmax over a rank-1 tensor (max subtracted before exp).
// Rejects non-finite inputs.
Tensor softmax(const Tensor& a);
// log softmax, assembled from primitive ops with the max handled as a
// constant shift, so it is exact and stable in both directions.
Tensor log_softmax(const Tensor& a);

// ---- gradient checking ----
// Max over coordinates of the relative error between the analytic
// gradient and central finite differences of step h. The denominator
// carries a noise floor scaled by the magnitude of the differenced
// value: two O(|f|) evaluations taken 2h apart cannot resolve slopes
// below their O(|f| eps / h) cancellation noise, so such coordinates
// must not dominate. f must build a fresh single-element result from
// its argument on every call and be deterministic. Runs in Float64
// regardless of the ambient mode.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h = 1e-5);

// Same check for a loss over several parameters used in place: builder()
// must recompute the loss from the current parameter values each call.
double finite_diff_check_params(const std::function<Tensor()>& builder,
                                const std::vector<Tensor>& params, double h = 1e-5);

}  // namespace lmm
