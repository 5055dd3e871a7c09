#include "lmm/distributions.hpp"

#include <cmath>
#include <stdexcept>

namespace lmm {

namespace {
void check_support(double lo, double hi) {
  if (!(lo < 0.0 && hi > 1.0))
    throw std::invalid_argument("stretch support must satisfy lo < 0 < 1 < hi, got lo=" +
                                std::to_string(lo) + " hi=" + std::to_string(hi));
}
}  // namespace

Tensor gaussian_sample(const GaussianParams& g, const Tensor& eps) {
  return add(g.loc, mul(eps, g.scale));
}

Tensor gaussian_noise(int n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return Tensor::from({n}, std::move(v));
}

// 1 - (1 - x^a)^b assembled from exp/log so both parameters keep
// gradients: x^a = exp(a ln x). The inner base is kept away from 0 so
// the outer log stays finite for extreme parameters.
Tensor kuma_cdf(double x, const KumaParams& k) {
  if (!(x >= 0.0 && x <= 1.0))
    throw std::invalid_argument("kuma_cdf: x must lie in [0, 1], got " + std::to_string(x));
  if (x == 0.0) return mul(k.a, 0.0);  // zeros shaped like a
  if (x == 1.0) return add(mul(k.a, 0.0), 1.0);
  Tensor xa = exp(mul(k.a, std::log(x)));                 // x^a in (0, 1)
  Tensor base = max_const(sub(1.0, xa), 1e-300);          // 1 - x^a
  return sub(1.0, exp(mul(k.b, log(base))));              // 1 - (1 - x^a)^b
}

double kuma_cdf(double x, double a, double b) {
  if (!(x >= 0.0 && x <= 1.0))
    throw std::invalid_argument("kuma_cdf: x must lie in [0, 1], got " + std::to_string(x));
  return 1.0 - std::pow(1.0 - std::pow(x, a), b);
}

Tensor kuma_sample(const KumaParams& k, const Tensor& eps) {
  if (eps.size() != k.a.size())
    throw std::invalid_argument("kuma_sample: noise length " + std::to_string(eps.size()) +
                                " does not match parameter length " + std::to_string(k.a.size()));
  // Clamp noise away from both endpoints, as a plain constant.
  std::vector<double> e(eps.size());
  for (int64_t i = 0; i < eps.size(); ++i)
    e[i] = std::min(1.0 - 1e-7, std::max(1e-7, eps.value(i)));
  Tensor ec = Tensor::from(eps.shape(), std::move(e));

  // c = (1 - (1 - eps)^(1/b))^(1/a)
  Tensor inv_b = div(Tensor::scalar(1.0), k.b);
  Tensor inv_a = div(Tensor::scalar(1.0), k.a);
  std::vector<double> log1me(eps.size());
  for (int64_t i = 0; i < eps.size(); ++i) log1me[i] = std::log1p(-ec.value(i));
  Tensor t = exp(mul(inv_b, Tensor::from(eps.shape(), std::move(log1me))));  // (1-eps)^(1/b)
  Tensor base = max_const(sub(1.0, t), 1e-300);
  return exp(mul(inv_a, log(base)));
}

Tensor kuma_noise(int n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = std::min(1.0 - 1e-7, std::max(1e-7, rng.uniform()));
  return Tensor::from({n}, std::move(v));
}

double kuma_mean(double a, double b) {
  if (!(a > 0.0 && b > 0.0))
    throw std::invalid_argument("kuma_mean: parameters must be positive");
  // b * B(1 + 1/a, b)
  double p = 1.0 + 1.0 / a;
  return b * std::exp(std::lgamma(p) + std::lgamma(b) - std::lgamma(p + b));
}

Tensor stretch_rectify(const Tensor& c, double support_lo, double support_hi) {
  check_support(support_lo, support_hi);
  Tensor stretched = add(mul(c, support_hi - support_lo), support_lo);
  return clamp(stretched, 0.0, 1.0);
}

SparseMassTriple hardkuma_masses(const HardKumaParams& p) {
  check_support(p.support_lo, p.support_hi);
  const double l = p.support_lo, r = p.support_hi;
  Tensor p_zero = kuma_cdf(-l / (r - l), p.kuma);
  Tensor p_one = sub(1.0, kuma_cdf((1.0 - l) / (r - l), p.kuma));
  Tensor p_cont = sub(sub(1.0, p_zero), p_one);
  return {p_zero, p_one, p_cont};
}

SparseMassValues hardkuma_masses(double a, double b, double support_lo, double support_hi) {
  check_support(support_lo, support_hi);
  const double l = support_lo, r = support_hi;
  double p_zero = kuma_cdf(-l / (r - l), a, b);
  double p_one = 1.0 - kuma_cdf((1.0 - l) / (r - l), a, b);
  return {p_zero, p_one, 1.0 - p_zero - p_one};
}

double hardkuma_point_summary(double a, double b, double support_lo, double support_hi,
                              bool stretched_mean) {
  SparseMassValues m = hardkuma_masses(a, b, support_lo, support_hi);
  // Ties resolve toward 0, then 1, then the continuous summary.
  double best = m.p_zero;
  int which = 0;
  if (m.p_one > best) {
    best = m.p_one;
    which = 1;
  }
  if (m.p_cont > best) which = 2;
  if (which == 0) return 0.0;
  if (which == 1) return 1.0;
  double mu = kuma_mean(a, b);
  if (!stretched_mean) return mu;
  double s = support_lo + (support_hi - support_lo) * mu;
  return std::min(1.0, std::max(0.0, s));
}

}  // namespace lmm
