#pragma once

// Reparameterized distributions for the latent word model.
//
// Two families: a diagonal Gaussian for the dense lemma vector, and the
// Kumaraswamy distribution — stretched over (l, r) ⊃ [0, 1] and rectified
// back onto [0, 1] — for the sparse inflectional features. The stretched
// rectified form places point masses pi0 at exactly 0 and pi1 at exactly
// 1 plus a continuous density in between; both masses are closed-form in
// the Kumaraswamy CDF, which keeps them differentiable in (a, b).
//
// Everything that participates in training takes tensors; scalar
// overloads serve decode-time point summaries and tests.

#include "lmm/rng.hpp"
#include "lmm/tensor.hpp"

namespace lmm {

struct GaussianParams {
  Tensor loc;    // u
  Tensor scale;  // s, positive (softplus upstream)
};

struct KumaParams {
  Tensor a;  // both positive, elementwise
  Tensor b;
};

// Kumaraswamy stretched over (support_lo, support_hi) and rectified.
struct HardKumaParams {
  KumaParams kuma;
  double support_lo = -0.1;  // l
  double support_hi = 1.1;   // r
};

struct SparseMassTriple {
  Tensor p_zero;  // mass at exactly 0
  Tensor p_one;   // mass at exactly 1
  Tensor p_cont;  // mass of the open interval (0, 1)
};

struct SparseMassValues {
  double p_zero, p_one, p_cont;
};

// z = loc + eps * scale, elementwise; eps is standard normal noise.
Tensor gaussian_sample(const GaussianParams& g, const Tensor& eps);
// Noise helper: standard normal vector of length n.
Tensor gaussian_noise(int n, Rng& rng);

// CDF F(x; a, b) = 1 - (1 - x^a)^b on 0 <= x <= 1.
Tensor kuma_cdf(double x, const KumaParams& k);
double kuma_cdf(double x, double a, double b);

// Inverse-CDF sample c = (1 - (1 - eps)^(1/b))^(1/a), differentiable in
// (a, b). eps entries are clamped into [1e-7, 1 - 1e-7] before use.
Tensor kuma_sample(const KumaParams& k, const Tensor& eps);
// Noise helper: uniforms in [0, 1), pre-clamped for kuma_sample.
Tensor kuma_noise(int n, Rng& rng);

// E[Kuma(a, b)] = b * B(1 + 1/a, b), via log-gamma.
double kuma_mean(double a, double b);

// f = min(1, max(0, l + (r - l) c)): affine stretch then rectify. The
// clamp's subgradient is 0 outside (0, 1), so gradients flow only
// through the unclamped region.
Tensor stretch_rectify(const Tensor& c, double support_lo, double support_hi);

// Closed-form masses of the rectified variable:
//   p_zero = F(-l / (r - l); a, b)
//   p_one  = 1 - F((1 - l) / (r - l); a, b)
//   p_cont = 1 - p_zero - p_one   (complement, so the triple sums to 1)
SparseMassTriple hardkuma_masses(const HardKumaParams& p);
SparseMassValues hardkuma_masses(double a, double b, double support_lo, double support_hi);

// Decode-time summary: the highest-mass of the three configurations.
// 0 -> 0.0, 1 -> 1.0; the continuous case returns the mean of the
// underlying Kumaraswamy (or, when stretched_mean is set, that mean
// stretched onto (l, r) and clamped to [0, 1]). Ties resolve in the
// order 0, then 1, then continuous.
double hardkuma_point_summary(double a, double b, double support_lo, double support_hi,
                              bool stretched_mean = false);

}  // namespace lmm
