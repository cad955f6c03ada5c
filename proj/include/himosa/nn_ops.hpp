#pragma once

#include <cstdint>
#include <vector>

#include "himosa/tensor.hpp"

namespace himosa {

// Window bookkeeping for partition/merge. original_hw records what the caller
// had before any padding; partition itself requires already-padded input.
struct WindowLayout {
  int64_t orig_h = 0, orig_w = 0;
  int64_t padded_h = 0, padded_w = 0;
  int64_t ws = 0;
  int64_t grid_h = 0, grid_w = 0;
  int64_t channels = 0;
  int64_t windows() const { return grid_h * grid_w; }
  int64_t tokens() const { return ws * ws; }
};

// Same-padded cross-correlation. x [C_in×H×W], w [C_out×C_in×k×k] with k odd,
// b [C_out]; output [C_out×H×W], zero padding at the borders.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);

// Per-channel same-padded cross-correlation. x [C×H×W], w [C×1×k×k], k odd.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w);

// [(r²·C)×H×W] -> [C×(rH)×(rW)]; out[c][i·r+u][j·r+v] = in[c·r²+u·r+v][i][j].
Tensor pixel_shuffle(const Tensor& x, int64_t r);

// [C×H'×W'] with ws | H', ws | W' -> [nw×n×C], n = ws²; windows row-major over
// the grid, tokens row-major within a window, channels last.
Tensor window_partition(const Tensor& x, int64_t ws, WindowLayout* layout);

// Exact inverse of window_partition for a consistent layout.
Tensor window_merge(const Tensor& windows, const WindowLayout& layout);

// Indices of the k largest entries; ties go to the lower index; result ordered
// by descending score, then ascending index.
std::vector<int64_t> topk_select(const Tensor& scores, int64_t k);

// x [n×d], idx values in [0,n) -> [k×d]. Gradient scatters back by index.
Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx);

// acc [n×d] plus rows [k×d] added at idx (duplicates accumulate) -> [n×d].
Tensor scatter_add_rows(const Tensor& acc, const std::vector<int64_t>& idx,
                        const Tensor& rows);

// [C×H×W] -> [C] per-channel spatial mean.
Tensor global_avg_pool(const Tensor& x);

// Per-row standardization (ε=1e-6) then affine: x [n×d], gain [d], shift [d].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift);

// Reflect-pads bottom/right up to (target_h, target_w). Reflection is
// symmetric (edge sample repeated: ...x[H-1], x[H-1], x[H-2]...) and folds for
// targets beyond 2H, so any source size ≥ 1 works.
Tensor pad_reflect(const Tensor& x, int64_t target_h, int64_t target_w);

// Top-left crop of [C×H×W] to [C×h×w].
Tensor crop2d(const Tensor& x, int64_t h, int64_t w);

// Rank-3 plumbing used around per-window processing.
Tensor slice0(const Tensor& x, int64_t i);               // [A×B×C] -> [B×C]
Tensor stack0(const std::vector<Tensor>& slices);        // A×[B×C] -> [A×B×C]

// [C×H×W] -> [HW×C] row-major tokens, and back.
Tensor chw_to_tokens(const Tensor& x);
Tensor tokens_to_chw(const Tensor& t, int64_t c, int64_t h, int64_t w);

// Column j of [n×m] as [n].
Tensor column(const Tensor& x, int64_t j);

// Row i of x scaled by s[i]: x [n×d], s [n].
Tensor row_scale(const Tensor& x, const Tensor& s);

// Channel c of x scaled by s[c]: x [C×H×W], s [C].
Tensor channel_scale(const Tensor& x, const Tensor& s);

}  // namespace himosa
