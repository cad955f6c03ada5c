#include "himosa/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "himosa/rng.hpp"
#include "himosa/threading.hpp"

namespace himosa {

std::string selection_name(Selection s) {
  switch (s) {
    case Selection::content_aware: return "content_aware";
    case Selection::random: return "random";
    case Selection::sequential: return "sequential";
  }
  throw ContractError("unknown selection strategy");
}

Selection selection_from_name(const std::string& name) {
  if (name == "content_aware") return Selection::content_aware;
  if (name == "random") return Selection::random;
  if (name == "sequential") return Selection::sequential;
  throw ConfigError("selection_strategy must be content_aware, random, or "
                    "sequential; got '" + name + "'");
}

void ModelConfig::validate() {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (n_blocks < 1) fail("n_blocks must be >= 1");
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (channels < 1) fail("channels must be >= 1");
  if (base_window < 1) fail("base_window must be >= 1");
  if (scale != 2 && scale != 4) fail("scale must be 2 or 4");
  if (static_cast<int64_t>(ratios.size()) != n_layers) {
    fail("ratios has " + std::to_string(ratios.size()) + " entries for " +
         std::to_string(n_layers) + " layers");
  }
  if (static_cast<int64_t>(sparsity.size()) != n_layers) {
    fail("sparsity has " + std::to_string(sparsity.size()) + " entries for " +
         std::to_string(n_layers) + " layers");
  }
  for (int64_t i = 0; i < n_layers; ++i) {
    double prod = ratios[i] * static_cast<double>(base_window);
    if (!(ratios[i] > 0) || std::abs(prod - std::llround(prod)) > 1e-9 ||
        std::llround(prod) < 1) {
      fail("ratios[" + std::to_string(i) + "]=" + std::to_string(ratios[i]) +
           " times base_window=" + std::to_string(base_window) +
           " is not a positive integer");
    }
    if (sparsity[i] < 1) fail("sparsity entries must be >= 1");
    if (i > 0 && sparsity[i] < sparsity[i - 1]) {
      fail("sparsity must be non-decreasing");
    }
  }
  if (n_experts < 1) fail("n_experts must be >= 1");
  if (expert_dim == 0) expert_dim = channels;
  if (expert_dim < 1) fail("expert_dim must be >= 1");
  if (!(glu_expand > 0) || glu_hidden() < 1) {
    fail("glu_expand must give a positive hidden width");
  }
  if (cab_reduction < 1) fail("cab_reduction must be >= 1");
  if (channels % cab_reduction != 0) {
    fail("channels=" + std::to_string(channels) +
         " not divisible by cab_reduction=" + std::to_string(cab_reduction));
  }
}

int64_t window_size_schedule(const ModelConfig& cfg, int64_t i) {
  if (i < 0 || i >= cfg.n_layers) {
    throw ConfigError("layer index " + std::to_string(i) + " outside [0, " +
                      std::to_string(cfg.n_layers) + ")");
  }
  double prod = cfg.ratios[i] * static_cast<double>(cfg.base_window);
  int64_t ws = std::llround(prod);
  if (std::abs(prod - static_cast<double>(ws)) > 1e-9 || ws < 1) {
    throw ConfigError("ratio " + std::to_string(cfg.ratios[i]) +
                      " gives non-integer window for base_window " +
                      std::to_string(cfg.base_window));
  }
  return ws;
}

int64_t ModelConfig::max_window() const {
  int64_t mw = 1;
  for (int64_t i = 0; i < n_layers; ++i)
    mw = std::max(mw, window_size_schedule(*this, i));
  return mw;
}

int64_t k_schedule(const ModelConfig& cfg, int64_t i, int64_t n) {
  if (i < 0 || i >= cfg.n_layers) {
    throw ConfigError("layer index " + std::to_string(i) + " outside [0, " +
                      std::to_string(cfg.n_layers) + ")");
  }
  return std::max<int64_t>(1, n / cfg.sparsity[i]);
}

Tensor route_scores(const Tensor& x, const Tensor& w_r) {
  return sigmoid(matmul(x, w_r));
}

RouterSelection select_tokens(const Tensor& r, int64_t k, Selection strategy,
                              uint64_t seed) {
  if (r.rank() != 2) {
    throw ShapeError("select_tokens: scores must be [n×m], got " +
                     shape_str(r.shape()));
  }
  const int64_t n = r.dim(0), m = r.dim(1);
  if (k < 1 || k > n) {
    throw ContractError("select_tokens: k=" + std::to_string(k) +
                        " outside [1, " + std::to_string(n) + "]");
  }
  RouterSelection sel;
  sel.indices.resize(static_cast<size_t>(m));
  sel.gates.reserve(static_cast<size_t>(m));
  const auto rv = r.values();
  std::mt19937_64 gen(seed);
  for (int64_t h = 0; h < m; ++h) {
    std::vector<int64_t>& idx = sel.indices[static_cast<size_t>(h)];
    switch (strategy) {
      case Selection::content_aware: {
        std::vector<double> col(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) col[i] = rv[i * m + h];
        idx = topk_select(Tensor::from_values({n}, std::move(col)), k);
        break;
      }
      case Selection::random: {
        std::vector<int64_t> pool(static_cast<size_t>(n));
        std::iota(pool.begin(), pool.end(), 0);
        for (int64_t t = 0; t < k; ++t) {
          int64_t j = t + static_cast<int64_t>(rng_below(gen, n - t));
          std::swap(pool[t], pool[j]);
        }
        idx.assign(pool.begin(), pool.begin() + k);
        break;
      }
      case Selection::sequential: {
        idx.resize(static_cast<size_t>(k));
        std::iota(idx.begin(), idx.end(), 0);
        break;
      }
    }
    sel.gates.push_back(
        reshape(gather_rows(reshape(column(r, h), {n, 1}), idx), {k}));
  }
  return sel;
}

Tensor carsa_window(const Tensor& x, const std::vector<ExpertWeights>& experts,
                    const RouterSelection& sel, bool use_gate) {
  const int64_t n = x.dim(0), d = x.dim(1);
  if (sel.indices.size() != experts.size() ||
      sel.gates.size() != experts.size()) {
    throw ShapeError("carsa_window: selection covers " +
                     std::to_string(sel.indices.size()) + " experts, have " +
                     std::to_string(experts.size()));
  }
  Tensor acc = Tensor::zeros({n, d});
  for (size_t h = 0; h < experts.size(); ++h) {
    const ExpertWeights& e = experts[h];
    const double dk = static_cast<double>(e.wq.dim(1));
    Tensor xs = gather_rows(x, sel.indices[h]);
    Tensor q = matmul(xs, e.wq);
    Tensor kk = matmul(xs, e.wk);
    Tensor v = matmul(xs, e.wv);
    Tensor a = softmax_rows(scale(matmul(q, transpose(kk)), 1.0 / std::sqrt(dk)));
    Tensor o = matmul(matmul(a, v), e.wo);
    if (use_gate) o = row_scale(o, sel.gates[h]);
    acc = scatter_add_rows(acc, sel.indices[h], o);
  }
  return acc;
}

Tensor channel_attention(const Tensor& x, const LayerWeights& w,
                         int64_t cab_reduction) {
  const int64_t c = x.dim(0);
  if (cab_reduction < 1 || c % cab_reduction != 0) {
    throw ConfigError("channel_attention: " + std::to_string(c) +
                      " channels not divisible by cab_reduction=" +
                      std::to_string(cab_reduction));
  }
  Tensor y = conv2d(gelu(conv2d(x, w.cab_c1_w, w.cab_c1_b)), w.cab_c2_w,
                    w.cab_c2_b);
  Tensor pooled = reshape(global_avg_pool(y), {1, c});
  Tensor s = sigmoid(matmul(gelu(matmul(pooled, w.cab_se1_w)), w.cab_se2_w));
  return channel_scale(y, reshape(s, {c}));
}

Tensor conv_glu(const Tensor& x, const LayerWeights& w) {
  Tensor value = depthwise_conv2d(conv2d(x, w.glu_val_w, w.glu_val_b),
                                  w.glu_dw_w);
  Tensor gate = gelu(conv2d(x, w.glu_gate_w, w.glu_gate_b));
  return conv2d(mul(value, gate), w.glu_out_w, w.glu_out_b);
}

Tensor hierarchical_layer(const Tensor& x_map, const ModelConfig& cfg,
                          int64_t layer_idx, const LayerWeights& w,
                          uint64_t select_seed, LayerTrace* trace) {
  const int64_t c = x_map.dim(0), h = x_map.dim(1), wd = x_map.dim(2);
  const int64_t ws = window_size_schedule(cfg, layer_idx);

  Tensor x_cab = channel_attention(x_map, w, cfg.cab_reduction);

  // Window sizes from the schedule may not divide extents already padded to
  // the block-global maximum (e.g. 48 against 64); re-pad for this layer only.
  const int64_t ph = (h + ws - 1) / ws * ws;
  const int64_t pw = (wd + ws - 1) / ws * ws;
  Tensor xp = pad_reflect(x_map, ph, pw);
  WindowLayout lay;
  Tensor wins = window_partition(xp, ws, &lay);
  lay.orig_h = h;
  lay.orig_w = wd;

  const int64_t n = lay.tokens();
  const int64_t k = k_schedule(cfg, layer_idx, n);
  const int64_t nw = lay.windows();

  std::vector<Tensor> outs(static_cast<size_t>(nw));
  std::vector<std::vector<std::vector<int64_t>>> picked(
      static_cast<size_t>(nw));
  parallel_for(nw, [&](int64_t wi) {
    Tensor tokens = slice0(wins, wi);
    Tensor t_in = cfg.use_norm
                      ? layer_norm(tokens, w.norm_attn_g, w.norm_attn_s)
                      : tokens;
    Tensor scores = route_scores(t_in, w.router_w);
    RouterSelection sel = select_tokens(scores, k, cfg.selection_strategy,
                                        mix_seed(select_seed, wi));
    picked[static_cast<size_t>(wi)] = sel.indices;
    outs[static_cast<size_t>(wi)] =
        carsa_window(t_in, w.experts, sel, cfg.use_gate);
  });
  Tensor x_carsa = crop2d(window_merge(stack0(outs), lay), h, wd);
  if (trace) {
    trace->layout = lay;
    trace->selected = std::move(picked);
  }

  Tensor x1 = add(add(x_map, x_carsa), x_cab);

  Tensor glu_in = x1;
  if (cfg.use_norm) {
    glu_in = tokens_to_chw(
        layer_norm(chw_to_tokens(x1), w.norm_glu_g, w.norm_glu_s), c, h, wd);
  }
  return add(x1, conv_glu(glu_in, w));
}

Tensor himosa_forward(const Tensor& i_lr, const HimosaWeights& w,
                      uint64_t run_seed, RoutingTrace* trace) {
  const ModelConfig& cfg = w.cfg;
  if (i_lr.rank() != 3 || i_lr.dim(0) != 3) {
    throw ShapeError("himosa_forward: input must be [3×h×w], got " +
                     shape_str(i_lr.shape()));
  }
  const int64_t h = i_lr.dim(1), wd = i_lr.dim(2);
  Tensor x0 = conv2d(i_lr, w.shallow_w, w.shallow_b);

  const int64_t mw = cfg.max_window();
  const int64_t ph = (h + mw - 1) / mw * mw;
  const int64_t pw = (wd + mw - 1) / mw * mw;
  Tensor xp = pad_reflect(x0, ph, pw);

  if (trace) {
    trace->layers.assign(
        static_cast<size_t>(cfg.n_blocks * cfg.n_layers), LayerTrace{});
  }
  Tensor x = xp;
  for (int64_t b = 0; b < cfg.n_blocks; ++b) {
    for (int64_t l = 0; l < cfg.n_layers; ++l) {
      LayerTrace* lt = nullptr;
      if (trace) {
        lt = &trace->layers[static_cast<size_t>(b * cfg.n_layers + l)];
        lt->block = b;
        lt->layer = l;
      }
      x = hierarchical_layer(
          x, cfg, l, w.layers[static_cast<size_t>(b)][static_cast<size_t>(l)],
          mix_seed(run_seed, static_cast<uint64_t>(b * 4096 + l)), lt);
    }
  }
  x = add(xp, conv2d(x, w.body_w, w.body_b));
  x = pixel_shuffle(conv2d(x, w.head_w, w.head_b), cfg.scale);
  return crop2d(x, cfg.scale * h, cfg.scale * wd);
}

// ---- weights ----

namespace {

Tensor init_normal(Shape shape, uint64_t seed, const std::string& path) {
  std::mt19937_64 g(mix_seed(seed, hash_name(path)));
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (double& x : v) x = rng_trunc_normal(g, 0.02, 2.0);
  return Tensor::from_values(std::move(shape), std::move(v), true);
}

Tensor init_const(Shape shape, double value) {
  return Tensor::full(std::move(shape), value, true);
}

}  // namespace

HimosaWeights init_weights(const ModelConfig& cfg_in, uint64_t seed) {
  ModelConfig cfg = cfg_in;
  cfg.validate();
  const int64_t d = cfg.channels, dp = cfg.expert_dim, m = cfg.n_experts;
  const int64_t hidden = cfg.glu_hidden(), red = d / cfg.cab_reduction;

  HimosaWeights w;
  w.cfg = cfg;
  w.shallow_w = init_normal({d, 3, 3, 3}, seed, "shallow.w");
  w.shallow_b = init_const({d}, 0.0);
  w.layers.resize(static_cast<size_t>(cfg.n_blocks));
  for (int64_t b = 0; b < cfg.n_blocks; ++b) {
    auto& block = w.layers[static_cast<size_t>(b)];
    block.resize(static_cast<size_t>(cfg.n_layers));
    for (int64_t l = 0; l < cfg.n_layers; ++l) {
      LayerWeights& lw = block[static_cast<size_t>(l)];
      const std::string p =
          "b" + std::to_string(b) + ".l" + std::to_string(l) + ".";
      lw.norm_attn_g = init_const({d}, 1.0);
      lw.norm_attn_s = init_const({d}, 0.0);
      lw.norm_glu_g = init_const({d}, 1.0);
      lw.norm_glu_s = init_const({d}, 0.0);
      lw.router_w = init_normal({d, m}, seed, p + "router.w");
      lw.experts.resize(static_cast<size_t>(m));
      for (int64_t e = 0; e < m; ++e) {
        const std::string ep = p + "e" + std::to_string(e) + ".";
        ExpertWeights& ew = lw.experts[static_cast<size_t>(e)];
        ew.wq = init_normal({d, dp}, seed, ep + "wq");
        ew.wk = init_normal({d, dp}, seed, ep + "wk");
        ew.wv = init_normal({d, dp}, seed, ep + "wv");
        ew.wo = init_normal({dp, d}, seed, ep + "wo");
      }
      lw.cab_c1_w = init_normal({d, d, 3, 3}, seed, p + "cab.c1.w");
      lw.cab_c1_b = init_const({d}, 0.0);
      lw.cab_c2_w = init_normal({d, d, 3, 3}, seed, p + "cab.c2.w");
      lw.cab_c2_b = init_const({d}, 0.0);
      lw.cab_se1_w = init_normal({d, red}, seed, p + "cab.se1.w");
      lw.cab_se2_w = init_normal({red, d}, seed, p + "cab.se2.w");
      lw.glu_val_w = init_normal({hidden, d, 1, 1}, seed, p + "glu.val.w");
      lw.glu_val_b = init_const({hidden}, 0.0);
      lw.glu_gate_w = init_normal({hidden, d, 1, 1}, seed, p + "glu.gate.w");
      lw.glu_gate_b = init_const({hidden}, 0.0);
      lw.glu_dw_w = init_normal({hidden, 1, 3, 3}, seed, p + "glu.dw.w");
      lw.glu_out_w = init_normal({d, hidden, 1, 1}, seed, p + "glu.out.w");
      lw.glu_out_b = init_const({d}, 0.0);
    }
  }
  w.body_w = init_normal({d, d, 3, 3}, seed, "body_conv.w");
  w.body_b = init_const({d}, 0.0);
  const int64_t head_out = cfg.scale * cfg.scale * 3;
  w.head_w = init_normal({head_out, d, 3, 3}, seed, "head.w");
  w.head_b = init_const({head_out}, 0.0);
  return w;
}

std::vector<std::pair<std::string, Tensor>> HimosaWeights::named_params()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("shallow.w", shallow_w);
  out.emplace_back("shallow.b", shallow_b);
  for (size_t b = 0; b < layers.size(); ++b) {
    for (size_t l = 0; l < layers[b].size(); ++l) {
      const LayerWeights& lw = layers[b][l];
      const std::string p =
          "b" + std::to_string(b) + ".l" + std::to_string(l) + ".";
      out.emplace_back(p + "norm_attn.g", lw.norm_attn_g);
      out.emplace_back(p + "norm_attn.s", lw.norm_attn_s);
      out.emplace_back(p + "norm_glu.g", lw.norm_glu_g);
      out.emplace_back(p + "norm_glu.s", lw.norm_glu_s);
      out.emplace_back(p + "router.w", lw.router_w);
      for (size_t e = 0; e < lw.experts.size(); ++e) {
        const std::string ep = p + "e" + std::to_string(e) + ".";
        out.emplace_back(ep + "wq", lw.experts[e].wq);
        out.emplace_back(ep + "wk", lw.experts[e].wk);
        out.emplace_back(ep + "wv", lw.experts[e].wv);
        out.emplace_back(ep + "wo", lw.experts[e].wo);
      }
      out.emplace_back(p + "cab.c1.w", lw.cab_c1_w);
      out.emplace_back(p + "cab.c1.b", lw.cab_c1_b);
      out.emplace_back(p + "cab.c2.w", lw.cab_c2_w);
      out.emplace_back(p + "cab.c2.b", lw.cab_c2_b);
      out.emplace_back(p + "cab.se1.w", lw.cab_se1_w);
      out.emplace_back(p + "cab.se2.w", lw.cab_se2_w);
      out.emplace_back(p + "glu.val.w", lw.glu_val_w);
      out.emplace_back(p + "glu.val.b", lw.glu_val_b);
      out.emplace_back(p + "glu.gate.w", lw.glu_gate_w);
      out.emplace_back(p + "glu.gate.b", lw.glu_gate_b);
      out.emplace_back(p + "glu.dw.w", lw.glu_dw_w);
      out.emplace_back(p + "glu.out.w", lw.glu_out_w);
      out.emplace_back(p + "glu.out.b", lw.glu_out_b);
    }
  }
  out.emplace_back("body_conv.w", body_w);
  out.emplace_back("body_conv.b", body_b);
  out.emplace_back("head.w", head_w);
  out.emplace_back("head.b", head_b);
  return out;
}

}  // namespace himosa
