#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "himosa/nn_ops.hpp"
#include "himosa/tensor.hpp"

namespace himosa {

enum class Selection { content_aware, random, sequential };

std::string selection_name(Selection s);
Selection selection_from_name(const std::string& name);

struct ModelConfig {
  int64_t n_blocks = 4;
  int64_t n_layers = 6;
  int64_t channels = 60;
  int64_t base_window = 8;
  std::vector<double> ratios{0.5, 1, 2, 4, 6, 8};
  std::vector<int64_t> sparsity{1, 1, 2, 4, 8, 12};
  int64_t n_experts = 8;
  int64_t expert_dim = 0;  // 0 = follow channels; validate() resolves it
  int64_t scale = 4;
  bool use_norm = true;
  bool use_gate = true;
  double glu_expand = 2.0;
  int64_t cab_reduction = 16;
  Selection selection_strategy = Selection::content_aware;

  // Checks every structural invariant and resolves defaults (expert_dim=0
  // becomes channels). Throws ConfigError with the offending field named.
  void validate();

  int64_t glu_hidden() const {
    return static_cast<int64_t>(std::llround(glu_expand * channels));
  }
  int64_t max_window() const;
};

// ws_i = α_i · ws_B. Non-integer products are configuration errors.
int64_t window_size_schedule(const ModelConfig& cfg, int64_t i);

// k_i = floor(n/ρ_i), clamped to at least one token.
int64_t k_schedule(const ModelConfig& cfg, int64_t i, int64_t n);

// Selection affinities r = σ(X·W_r), one column per expert.
Tensor route_scores(const Tensor& x, const Tensor& w_r);

struct RouterSelection {
  std::vector<std::vector<int64_t>> indices;  // per expert, k selected tokens
  std::vector<Tensor> gates;                  // per expert [k], slices of r
};

// Per-expert token choice. content_aware takes the top-k of each expert's
// score column; random draws k distinct indices from a generator seeded with
// `seed`; sequential takes tokens 0..k-1. Gates always read from r.
RouterSelection select_tokens(const Tensor& r, int64_t k, Selection strategy,
                              uint64_t seed = 0);

struct ExpertWeights {
  Tensor wq, wk, wv, wo;  // [d×d'], [d×d'], [d×d'], [d'×d]
};

struct LayerWeights {
  Tensor norm_attn_g, norm_attn_s;
  Tensor norm_glu_g, norm_glu_s;
  Tensor router_w;  // [d×m]
  std::vector<ExpertWeights> experts;
  Tensor cab_c1_w, cab_c1_b, cab_c2_w, cab_c2_b;
  Tensor cab_se1_w;  // [C × C/red]
  Tensor cab_se2_w;  // [C/red × C]
  Tensor glu_val_w, glu_val_b;
  Tensor glu_gate_w, glu_gate_b;
  Tensor glu_dw_w;
  Tensor glu_out_w, glu_out_b;
};

struct HimosaWeights {
  ModelConfig cfg;
  Tensor shallow_w, shallow_b;
  std::vector<std::vector<LayerWeights>> layers;  // [block][layer]
  Tensor body_w, body_b;
  Tensor head_w, head_b;

  // Parameters in canonical (checkpoint) order with their path names.
  std::vector<std::pair<std::string, Tensor>> named_params() const;
};

// Fresh weights: truncated-normal σ=0.02 (cut at ±2σ) for projections and
// conv kernels, zero biases, unit gains. Each tensor draws from its own
// stream keyed by (seed, path), so values do not depend on creation order.
HimosaWeights init_weights(const ModelConfig& cfg, uint64_t seed);

// Sparse routed window attention over one window's tokens. Per expert:
// gather → QKV projections → scaled softmax attention → output projection,
// gated by router scores when use_gate, scatter-added at the selected rows.
Tensor carsa_window(const Tensor& x, const std::vector<ExpertWeights>& experts,
                    const RouterSelection& sel, bool use_gate);

// conv3×3 → GELU → conv3×3, then squeeze-excite channel rescaling.
Tensor channel_attention(const Tensor& x, const LayerWeights& w,
                         int64_t cab_reduction);

// Gated convolutional feed-forward: (depthwise∘pointwise value branch)
// modulated by a GELU pointwise gate branch, projected back to C channels.
Tensor conv_glu(const Tensor& x, const LayerWeights& w);

// Selections recorded during a forward pass, for the routing-mask renderer.
struct LayerTrace {
  int64_t block = 0, layer = 0;
  WindowLayout layout;
  // [window][expert] -> selected token ids within that window
  std::vector<std::vector<std::vector<int64_t>>> selected;
};
struct RoutingTrace {
  std::vector<LayerTrace> layers;
};

// One hierarchical layer: X + CARSA(X) + CAB(X), then X + ConvGLU(X), with
// optional pre-normalization on both attention and GLU inputs. Window sizes
// that do not divide the incoming extents trigger an internal reflect-pad
// pass that is cropped away before the residual add.
Tensor hierarchical_layer(const Tensor& x_map, const ModelConfig& cfg,
                          int64_t layer_idx, const LayerWeights& w,
                          uint64_t select_seed, LayerTrace* trace = nullptr);

// Full network: shallow conv → reflect-pad to the largest window → N×M
// hierarchical layers → body conv + global residual → head conv → pixel
// shuffle → crop to r·h × r·w.
Tensor himosa_forward(const Tensor& i_lr, const HimosaWeights& w,
                      uint64_t run_seed = 0, RoutingTrace* trace = nullptr);

}  // namespace himosa
