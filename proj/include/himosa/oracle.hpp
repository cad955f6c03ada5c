#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "himosa/image.hpp"
#include "himosa/tensor.hpp"

namespace himosa {

// Verification-only reference implementations. Everything here is written as
// straight-line loops sharing no kernels with the production modules; the
// independence is what makes the comparisons meaningful.

struct OracleReport {
  std::string op;
  double max_abs = 0.0;
  double max_rel = 0.0;
  double tolerance = 0.0;
  bool pass = false;

  // `op<TAB>max_abs<TAB>max_rel<TAB>PASS|FAIL`
  std::string line() const;
};

// Relative error with a small-denominator floor: |a-b| / max(|a|,|b|,1e-4).
// The floor keeps finite-difference noise on near-zero gradient entries from
// registering as huge relative errors.
OracleReport compare_values(std::string op, std::span<const double> a,
                            std::span<const double> b, double rel_tol);

// Central differences (f(x+h·e_i) − f(x−h·e_i)) / 2h per element. f is
// evaluated with graph recording off; x is perturbed in place and restored.
// A non-finite probe value reports the offending index.
std::vector<double> finite_diff_grad(const std::function<double(Tensor&)>& f,
                                     Tensor x, double h = 1e-5);

// Same-padded cross-correlation written as the definition: one scalar
// accumulator per output pixel, quadruple loop. Detached output.
Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b);

// Per-channel variant of the above. w is [C×1×k×k].
Tensor naive_depthwise_conv2d(const Tensor& x, const Tensor& w);

// Metric references written from the definitions with deliberately different
// arithmetic: the PSNR oracle distributes the luma weights over per-channel
// differences, and the SSIM oracle uses raw second moments instead of
// centered sums. Agreement within 1e-9 checks the formulas, not the
// floating-point schedule.
double naive_psnr_oracle(const ImageBuffer& a, const ImageBuffer& b,
                         int64_t border);
double naive_ssim_oracle(const ImageBuffer& a, const ImageBuffer& b,
                         int64_t border);

// Direct per-output-pixel evaluation of the stretched Catmull-Rom resample.
// Horizontal tap sums complete per source row before the vertical
// accumulation — the same association as the separable production pass — so
// agreement is byte-exact, while the windowing/clamp/normalization logic is
// re-derived from the definition.
ImageBuffer naive_bicubic_oracle(const ImageBuffer& buf, int64_t r);

// Multi-head attention over ALL n tokens, written as the textbook formula:
// sum over heads of softmax(X·Wq·(X·Wk)ᵀ/√d')·X·Wv·Wo. No selection, no
// gating, no shared kernels — per-head weight matrices are passed as flat
// row-major values. Detached [n×d] output.
struct DenseHeadWeights {
  std::vector<double> wq, wk, wv;  // each [d×d'] row-major
  std::vector<double> wo;          // [d'×d] row-major
};
Tensor dense_mha_oracle(const Tensor& x,
                        const std::vector<DenseHeadWeights>& heads,
                        int64_t head_dim);

}  // namespace himosa
