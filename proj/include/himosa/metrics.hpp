#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "himosa/image.hpp"
#include "himosa/model.hpp"

namespace himosa {

// Reconstruction quality on the BT.601 full-range luma plane
// (0.299R + 0.587G + 0.114B, unquantized floats), with `border` pixels
// shaved from every side first.

// 10·log10(255²/MSE); identical images return +infinity (the distinguished
// "identical" value; format_psnr prints it as "identical").
double psnr(const ImageBuffer& a, const ImageBuffer& b, int64_t border);
std::string format_psnr(double db);

// Mean SSIM over every 11×11 window (Gaussian σ=1.5, K1=0.01, K2=0.03,
// L=255) that fits inside the shaved region. Identical images give exactly
// 1.0; symmetric in its arguments.
double ssim(const ImageBuffer& a, const ImageBuffer& b, int64_t border);

// Closed-form parameter count; equals the scalar count of an instantiated
// HimosaWeights exactly.
int64_t count_params(const ModelConfig& cfg);

// Analytic multiply-accumulate costs, ×2 per the FLOPs = 2·MAC convention.
// Softmax, activations, norms, and elementwise products are excluded; only
// projections and convolutions count.
//
// Routed window attention over n tokens with k selected per expert:
// scoring 2·n·d·m plus, per expert, QKV 3·2·k·d·d', attention 2·2·k²·d',
// and output 2·k·d'·d. The dense baseline replaces k with n and drops the
// scoring term.
int64_t carsa_window_flops(int64_t d, int64_t dp, int64_t m, int64_t n,
                           int64_t k);
int64_t dense_window_flops(int64_t d, int64_t dp, int64_t m, int64_t n);

struct CostRow {
  std::string module;
  int64_t params = 0;
  int64_t flops = 0;
};

struct CostReport {
  std::vector<CostRow> rows;
  int64_t total_params = 0;
  int64_t total_flops = 0;

  // `module<TAB>params<TAB>flops` per row, then a `total` line.
  std::string text() const;
};

// Full-network cost at an h×w input, mirroring the forward pass's padding
// (block-global pad to the largest window, per-layer re-pad where a window
// size does not divide). Row params sum to count_params(cfg) exactly.
CostReport count_flops(const ModelConfig& cfg, int64_t h, int64_t w);

struct TimingReport {
  double median_ms = 0.0;
  double iqr_ms = 0.0;
  int64_t repeats = 0;
  int64_t threads = 0;  // thread budget the timed runs executed under
};

// Wall-clock forward timing on a fixed random input: one untimed warm-up
// run, then `repeats` timed runs; median and interquartile range.
TimingReport time_inference(const HimosaWeights& w, int64_t h, int64_t wd,
                            int64_t repeats);

}  // namespace himosa
