#include "himosa/checks.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "himosa/data.hpp"
#include "himosa/metrics.hpp"
#include "himosa/model.hpp"
#include "himosa/nn_ops.hpp"
#include "himosa/rng.hpp"
#include "himosa/trainer.hpp"

namespace himosa {

namespace {

Tensor rnd(Shape s, std::mt19937_64& g, bool requires_grad = true) {
  std::vector<double> v(static_cast<size_t>(shape_numel(s)));
  for (double& x : v) x = 0.5 * rng_normal(g);
  return Tensor::from_values(std::move(s), std::move(v), requires_grad);
}

// Values bounded away from zero, for ops with a kink at the origin.
Tensor rnd_away(Shape s, std::mt19937_64& g, double margin) {
  std::vector<double> v(static_cast<size_t>(shape_numel(s)));
  for (double& x : v) {
    const double sign = rng_below(g, 2) ? 1.0 : -1.0;
    x = sign * (margin + rng_unit(g));
  }
  return Tensor::from_values(std::move(s), std::move(v), true);
}

ImageBuffer rnd_image(int64_t w, int64_t h, std::mt19937_64& g) {
  ImageBuffer buf = make_image(w, h);
  for (uint8_t& b : buf.data) b = static_cast<uint8_t>(rng_below(g, 256));
  return buf;
}

// Scalarizes an op output against a fixed projection so every element's
// sensitivity shows up in the loss.
Tensor project(const Tensor& out, const Tensor& w) {
  return sum(mul(out, w));
}

struct GradCase {
  std::function<Tensor()> forward;  // rebuilds the loss from current leaves
  std::vector<Tensor> leaves;       // requires_grad inputs to probe
};
using CaseMaker = std::function<GradCase(std::mt19937_64&)>;

OracleReport run_grad_case(const std::string& name, const CaseMaker& make,
                           int seeds = 5, double tol = 1e-4) {
  OracleReport rep;
  rep.op = name;
  rep.tolerance = tol;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 g(mix_seed(hash_name(name), static_cast<uint64_t>(s)));
    GradCase c = make(g);
    for (Tensor& leaf : c.leaves) leaf.zero_grad();
    Tensor loss = c.forward();
    backward(loss);
    for (Tensor& leaf : c.leaves) {
      std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
      std::vector<double> fd = finite_diff_grad(
          [&](Tensor&) {
            Tensor l = c.forward();
            return l.values()[0];
          },
          leaf, 1e-5);
      OracleReport r = compare_values(name, analytic, fd, tol);
      rep.max_abs = std::max(rep.max_abs, r.max_abs);
      rep.max_rel = std::max(rep.max_rel, r.max_rel);
    }
  }
  rep.pass = rep.max_rel <= tol;
  return rep;
}

// A one-layer single-block config small enough for finite differences.
ModelConfig fd_config() {
  ModelConfig cfg;
  cfg.n_blocks = 1;
  cfg.n_layers = 2;
  cfg.channels = 8;
  cfg.base_window = 2;
  cfg.ratios = {1.0, 2.0};
  cfg.sparsity = {1, 2};
  cfg.n_experts = 2;
  cfg.expert_dim = 4;
  cfg.scale = 2;
  cfg.glu_expand = 1.5;
  cfg.cab_reduction = 4;
  cfg.selection_strategy = Selection::sequential;
  return cfg;
}

}  // namespace

std::vector<OracleReport> run_grad_suite() {
  std::vector<OracleReport> reports;
  auto push = [&](const std::string& name, const CaseMaker& make) {
    reports.push_back(run_grad_case(name, make));
  };

  push("grad/add", [](std::mt19937_64& g) {
    Tensor a = rnd({3, 4}, g), b = rnd({3, 4}, g), w = rnd({3, 4}, g, false);
    return GradCase{[=] { return project(add(a, b), w); }, {a, b}};
  });
  push("grad/sub", [](std::mt19937_64& g) {
    Tensor a = rnd({3, 4}, g), b = rnd({3, 4}, g), w = rnd({3, 4}, g, false);
    return GradCase{[=] { return project(sub(a, b), w); }, {a, b}};
  });
  push("grad/mul", [](std::mt19937_64& g) {
    Tensor a = rnd({3, 4}, g), b = rnd({3, 4}, g), w = rnd({3, 4}, g, false);
    return GradCase{[=] { return project(mul(a, b), w); }, {a, b}};
  });
  push("grad/scale", [](std::mt19937_64& g) {
    Tensor a = rnd({2, 5}, g), w = rnd({2, 5}, g, false);
    return GradCase{[=] { return project(scale(a, -1.37), w); }, {a}};
  });
  push("grad/sigmoid", [](std::mt19937_64& g) {
    Tensor a = rnd({2, 5}, g), w = rnd({2, 5}, g, false);
    return GradCase{[=] { return project(sigmoid(a), w); }, {a}};
  });
  push("grad/gelu", [](std::mt19937_64& g) {
    Tensor a = rnd({2, 5}, g), w = rnd({2, 5}, g, false);
    return GradCase{[=] { return project(gelu(a), w); }, {a}};
  });
  push("grad/abs", [](std::mt19937_64& g) {
    Tensor a = rnd_away({3, 3}, g, 0.05), w = rnd({3, 3}, g, false);
    return GradCase{[=] { return project(abs(a), w); }, {a}};
  });
  push("grad/sum", [](std::mt19937_64& g) {
    Tensor a = rnd({4, 3}, g);
    return GradCase{[=] { return sum(a); }, {a}};
  });
  push("grad/mean", [](std::mt19937_64& g) {
    Tensor a = rnd({4, 3}, g);
    return GradCase{[=] { return mean(a); }, {a}};
  });
  push("grad/reduce_max", [](std::mt19937_64& g) {
    // Gaps well above 2h so the argmax cannot flip under the probe.
    std::vector<double> v(9);
    for (size_t i = 0; i < v.size(); ++i) {
      v[i] = 0.1 * static_cast<double>(i) + 0.04 * rng_unit(g);
    }
    std::shuffle(v.begin(), v.end(), g);
    Tensor a = Tensor::from_values({3, 3}, std::move(v), true);
    return GradCase{[=] { return reduce_max(a); }, {a}};
  });
  push("grad/matmul", [](std::mt19937_64& g) {
    Tensor a = rnd({3, 4}, g), b = rnd({4, 2}, g), w = rnd({3, 2}, g, false);
    return GradCase{[=] { return project(matmul(a, b), w); }, {a, b}};
  });
  push("grad/transpose", [](std::mt19937_64& g) {
    Tensor a = rnd({3, 4}, g), w = rnd({4, 3}, g, false);
    return GradCase{[=] { return project(transpose(a), w); }, {a}};
  });
  push("grad/reshape", [](std::mt19937_64& g) {
    Tensor a = rnd({2, 6}, g), w = rnd({3, 4}, g, false);
    return GradCase{[=] { return project(reshape(a, {3, 4}), w); }, {a}};
  });
  push("grad/softmax_rows", [](std::mt19937_64& g) {
    Tensor a = rnd({3, 5}, g), w = rnd({3, 5}, g, false);
    return GradCase{[=] { return project(softmax_rows(a), w); }, {a}};
  });
  push("grad/conv2d", [](std::mt19937_64& g) {
    Tensor x = rnd({2, 4, 5}, g), w = rnd({3, 2, 3, 3}, g), b = rnd({3}, g);
    Tensor p = rnd({3, 4, 5}, g, false);
    return GradCase{[=] { return project(conv2d(x, w, b), p); }, {x, w, b}};
  });
  push("grad/depthwise_conv2d", [](std::mt19937_64& g) {
    Tensor x = rnd({3, 4, 4}, g), w = rnd({3, 1, 3, 3}, g);
    Tensor p = rnd({3, 4, 4}, g, false);
    return GradCase{[=] { return project(depthwise_conv2d(x, w), p); },
                    {x, w}};
  });
  push("grad/pixel_shuffle", [](std::mt19937_64& g) {
    Tensor x = rnd({8, 3, 3}, g), p = rnd({2, 6, 6}, g, false);
    return GradCase{[=] { return project(pixel_shuffle(x, 2), p); }, {x}};
  });
  push("grad/window_partition", [](std::mt19937_64& g) {
    Tensor x = rnd({2, 4, 4}, g), p = rnd({4, 4, 2}, g, false);
    return GradCase{[=] {
                      WindowLayout lay;
                      return project(window_partition(x, 2, &lay), p);
                    },
                    {x}};
  });
  push("grad/window_merge", [](std::mt19937_64& g) {
    Tensor x = rnd({2, 4, 4}, g), p = rnd({2, 4, 4}, g, false);
    return GradCase{[=] {
                      WindowLayout lay;
                      Tensor wp = window_partition(x, 2, &lay);
                      return project(window_merge(wp, lay), p);
                    },
                    {x}};
  });
  push("grad/gather_rows", [](std::mt19937_64& g) {
    Tensor x = rnd({6, 3}, g), p = rnd({4, 3}, g, false);
    const std::vector<int64_t> idx{0, 2, 2, 5};  // duplicate on purpose
    return GradCase{[=] { return project(gather_rows(x, idx), p); }, {x}};
  });
  push("grad/scatter_add_rows", [](std::mt19937_64& g) {
    Tensor acc = rnd({6, 3}, g), rows = rnd({4, 3}, g);
    Tensor p = rnd({6, 3}, g, false);
    const std::vector<int64_t> idx{1, 4, 4, 0};
    return GradCase{
        [=] { return project(scatter_add_rows(acc, idx, rows), p); },
        {acc, rows}};
  });
  push("grad/global_avg_pool", [](std::mt19937_64& g) {
    Tensor x = rnd({3, 4, 5}, g), p = rnd({3}, g, false);
    return GradCase{[=] { return project(global_avg_pool(x), p); }, {x}};
  });
  push("grad/layer_norm", [](std::mt19937_64& g) {
    Tensor x = rnd({4, 6}, g), gain = rnd({6}, g), shift = rnd({6}, g);
    Tensor p = rnd({4, 6}, g, false);
    return GradCase{[=] { return project(layer_norm(x, gain, shift), p); },
                    {x, gain, shift}};
  });
  push("grad/pad_reflect", [](std::mt19937_64& g) {
    Tensor x = rnd({2, 3, 4}, g), p = rnd({2, 5, 7}, g, false);
    return GradCase{[=] { return project(pad_reflect(x, 5, 7), p); }, {x}};
  });
  push("grad/crop2d", [](std::mt19937_64& g) {
    Tensor x = rnd({2, 5, 6}, g), p = rnd({2, 3, 4}, g, false);
    return GradCase{[=] { return project(crop2d(x, 3, 4), p); }, {x}};
  });
  push("grad/tokens_roundtrip", [](std::mt19937_64& g) {
    Tensor x = rnd({3, 2, 4}, g), p = rnd({3, 2, 4}, g, false);
    return GradCase{
        [=] { return project(tokens_to_chw(chw_to_tokens(x), 3, 2, 4), p); },
        {x}};
  });
  push("grad/column", [](std::mt19937_64& g) {
    Tensor x = rnd({5, 4}, g), p = rnd({5}, g, false);
    return GradCase{[=] { return project(column(x, 2), p); }, {x}};
  });
  push("grad/row_scale", [](std::mt19937_64& g) {
    Tensor x = rnd({4, 3}, g), s = rnd({4}, g), p = rnd({4, 3}, g, false);
    return GradCase{[=] { return project(row_scale(x, s), p); }, {x, s}};
  });
  push("grad/channel_scale", [](std::mt19937_64& g) {
    Tensor x = rnd({3, 4, 4}, g), s = rnd({3}, g);
    Tensor p = rnd({3, 4, 4}, g, false);
    return GradCase{[=] { return project(channel_scale(x, s), p); }, {x, s}};
  });
  push("grad/slice_stack", [](std::mt19937_64& g) {
    Tensor x = rnd({3, 2, 4}, g), p = rnd({2, 2, 4}, g, false);
    return GradCase{
        [=] { return project(stack0({slice0(x, 2), slice0(x, 0)}), p); },
        {x}};
  });
  push("grad/l1_loss", [](std::mt19937_64& g) {
    Tensor pred = rnd({3, 4}, g);
    // Targets offset by at least 0.05 so no probe crosses a tie.
    std::vector<double> tv(pred.values().begin(), pred.values().end());
    for (double& v : tv) {
      v += (rng_below(g, 2) ? 1.0 : -1.0) * (0.05 + rng_unit(g));
    }
    Tensor target = Tensor::from_values({3, 4}, std::move(tv));
    return GradCase{[=] { return l1_loss(pred, target); }, {pred}};
  });
  push("grad/carsa_window", [](std::mt19937_64& g) {
    const int64_t n = 9, d = 6, dp = 3, m = 2, k = 5;
    Tensor x = rnd({n, d}, g);
    Tensor wr = rnd({d, m}, g);
    std::vector<ExpertWeights> experts(static_cast<size_t>(m));
    for (auto& e : experts) {
      e.wq = rnd({d, dp}, g);
      e.wk = rnd({d, dp}, g);
      e.wv = rnd({d, dp}, g);
      e.wo = rnd({dp, d}, g);
    }
    Tensor p = rnd({n, d}, g, false);
    auto fwd = [=] {
      Tensor r = route_scores(x, wr);
      RouterSelection sel = select_tokens(r, k, Selection::sequential);
      return project(carsa_window(x, experts, sel, true), p);
    };
    return GradCase{fwd,
                    {x, wr, experts[0].wq, experts[0].wk, experts[0].wv,
                     experts[0].wo}};
  });
  push("grad/channel_attention", [](std::mt19937_64& g) {
    const int64_t d = 4;
    LayerWeights lw;
    lw.cab_c1_w = rnd({d, d, 3, 3}, g);
    lw.cab_c1_b = rnd({d}, g);
    lw.cab_c2_w = rnd({d, d, 3, 3}, g);
    lw.cab_c2_b = rnd({d}, g);
    lw.cab_se1_w = rnd({d, 2}, g);
    lw.cab_se2_w = rnd({2, d}, g);
    Tensor x = rnd({d, 4, 4}, g), p = rnd({d, 4, 4}, g, false);
    return GradCase{[=] { return project(channel_attention(x, lw, 2), p); },
                    {x, lw.cab_c1_w, lw.cab_se1_w, lw.cab_se2_w}};
  });
  push("grad/conv_glu", [](std::mt19937_64& g) {
    const int64_t d = 4, hid = 6;
    LayerWeights lw;
    lw.glu_val_w = rnd({hid, d, 1, 1}, g);
    lw.glu_val_b = rnd({hid}, g);
    lw.glu_gate_w = rnd({hid, d, 1, 1}, g);
    lw.glu_gate_b = rnd({hid}, g);
    lw.glu_dw_w = rnd({hid, 1, 3, 3}, g);
    lw.glu_out_w = rnd({d, hid, 1, 1}, g);
    lw.glu_out_b = rnd({d}, g);
    Tensor x = rnd({d, 4, 4}, g), p = rnd({d, 4, 4}, g, false);
    return GradCase{[=] { return project(conv_glu(x, lw), p); },
                    {x, lw.glu_gate_w, lw.glu_dw_w, lw.glu_out_w}};
  });
  push("grad/hierarchical_layer", [](std::mt19937_64& g) {
    ModelConfig cfg = fd_config();
    cfg.validate();
    HimosaWeights w = init_weights(cfg, g());
    const LayerWeights& lw = w.layers[0][0];
    Tensor x = rnd({cfg.channels, 4, 4}, g);
    Tensor p = rnd({cfg.channels, 4, 4}, g, false);
    return GradCase{
        [=] { return project(hierarchical_layer(x, cfg, 0, lw, 0x9E1D), p); },
        {x, lw.router_w, lw.experts[0].wq, lw.norm_attn_g, lw.cab_se1_w}};
  });
  {
    // Composed one-block network: probe the input plus one weight tensor
    // from every stage of the pipeline.
    auto make = [](std::mt19937_64& g) {
      ModelConfig cfg = fd_config();
      cfg.validate();
      HimosaWeights w = init_weights(cfg, g());
      Tensor x = rnd({3, 4, 4}, g, true);
      Tensor p = rnd({3, 8, 8}, g, false);
      const LayerWeights& l0 = w.layers[0][0];
      return GradCase{[=] { return project(himosa_forward(x, w, 0xF00D), p); },
                      {x, w.shallow_b, l0.router_w, l0.experts[0].wq,
                       l0.cab_se1_w, w.head_b}};
    };
    reports.push_back(run_grad_case("grad/himosa_forward", make));
  }
  return reports;
}

std::vector<OracleReport> run_oracle_suite() {
  std::vector<OracleReport> reports;

  {  // Routed attention at full density against the dense reference.
    OracleReport rep;
    rep.op = "carsa_rho1_vs_dense_mha";
    rep.tolerance = 1e-8;
    for (int draw = 0; draw < 20; ++draw) {
      std::mt19937_64 g(mix_seed(0xCA25A, static_cast<uint64_t>(draw)));
      const int64_t n_opts[3] = {4, 16, 64};
      const int64_t n = n_opts[rng_below(g, 3)];
      const int64_t d = 4 + static_cast<int64_t>(rng_below(g, 7));
      const int64_t dp = 3 + static_cast<int64_t>(rng_below(g, 6));
      const int64_t m = 1 + static_cast<int64_t>(rng_below(g, 4));
      Tensor x = rnd({n, d}, g, false);
      Tensor wr = rnd({d, m}, g, false);
      std::vector<ExpertWeights> experts(static_cast<size_t>(m));
      std::vector<DenseHeadWeights> heads(static_cast<size_t>(m));
      for (int64_t h = 0; h < m; ++h) {
        auto& e = experts[static_cast<size_t>(h)];
        e.wq = rnd({d, dp}, g, false);
        e.wk = rnd({d, dp}, g, false);
        e.wv = rnd({d, dp}, g, false);
        e.wo = rnd({dp, d}, g, false);
        auto& hd = heads[static_cast<size_t>(h)];
        hd.wq.assign(e.wq.values().begin(), e.wq.values().end());
        hd.wk.assign(e.wk.values().begin(), e.wk.values().end());
        hd.wv.assign(e.wv.values().begin(), e.wv.values().end());
        hd.wo.assign(e.wo.values().begin(), e.wo.values().end());
      }
      Tensor r = route_scores(x, wr);
      RouterSelection sel =
          select_tokens(r, n, Selection::content_aware);
      Tensor ours = carsa_window(x, experts, sel, /*use_gate=*/false);
      Tensor ref = dense_mha_oracle(x, heads, dp);
      OracleReport one =
          compare_values(rep.op, ours.values(), ref.values(), rep.tolerance);
      rep.max_abs = std::max(rep.max_abs, one.max_abs);
      rep.max_rel = std::max(rep.max_rel, one.max_rel);
    }
    rep.pass = rep.max_rel <= rep.tolerance;
    reports.push_back(rep);
  }

  {  // Convolutions against the quadruple-loop references.
    OracleReport rc, rd;
    rc.op = "conv2d_vs_loops";
    rd.op = "depthwise_vs_loops";
    rc.tolerance = rd.tolerance = 1e-8;
    for (int draw = 0; draw < 5; ++draw) {
      std::mt19937_64 g(mix_seed(0xC04, static_cast<uint64_t>(draw)));
      const int64_t ci = 1 + static_cast<int64_t>(rng_below(g, 3));
      const int64_t co = 1 + static_cast<int64_t>(rng_below(g, 4));
      const int64_t h = 3 + static_cast<int64_t>(rng_below(g, 5));
      const int64_t wd = 3 + static_cast<int64_t>(rng_below(g, 5));
      Tensor x = rnd({ci, h, wd}, g, false);
      Tensor w = rnd({co, ci, 3, 3}, g, false);
      Tensor b = rnd({co}, g, false);
      Tensor mine = conv2d(x, w, b);
      Tensor ref = naive_conv2d(x, w, b);
      OracleReport one =
          compare_values(rc.op, mine.values(), ref.values(), rc.tolerance);
      rc.max_abs = std::max(rc.max_abs, one.max_abs);
      rc.max_rel = std::max(rc.max_rel, one.max_rel);

      Tensor dw = rnd({ci, 1, 3, 3}, g, false);
      Tensor mine_dw = depthwise_conv2d(x, dw);
      Tensor ref_dw = naive_depthwise_conv2d(x, dw);
      one = compare_values(rd.op, mine_dw.values(), ref_dw.values(),
                           rd.tolerance);
      rd.max_abs = std::max(rd.max_abs, one.max_abs);
      rd.max_rel = std::max(rd.max_rel, one.max_rel);
    }
    rc.pass = rc.max_rel <= rc.tolerance;
    rd.pass = rd.max_rel <= rd.tolerance;
    reports.push_back(rc);
    reports.push_back(rd);
  }

  {  // Bicubic degradation must agree with the per-pixel oracle byte for
     // byte; the comparison is exact.
    OracleReport rep;
    rep.op = "bicubic_vs_perpixel";
    rep.tolerance = 0.0;
    for (int draw = 0; draw < 5; ++draw) {
      std::mt19937_64 g(mix_seed(0xB1C, static_cast<uint64_t>(draw)));
      const int64_t r = 2 + static_cast<int64_t>(rng_below(g, 3));
      const int64_t w = r * (3 + static_cast<int64_t>(rng_below(g, 4)));
      const int64_t h = r * (3 + static_cast<int64_t>(rng_below(g, 4)));
      ImageBuffer img = rnd_image(w, h, g);
      ImageBuffer mine = bicubic_downsample(img, r);
      ImageBuffer ref = naive_bicubic_oracle(img, r);
      for (size_t i = 0; i < mine.data.size(); ++i) {
        const double diff =
            std::abs(double(mine.data[i]) - double(ref.data[i]));
        rep.max_abs = std::max(rep.max_abs, diff);
        rep.max_rel = std::max(rep.max_rel, diff / 255.0);
      }
    }
    rep.pass = rep.max_abs == 0.0;
    reports.push_back(rep);
  }

  {  // PSNR/SSIM against the loop references; 1e-9 absolute.
    OracleReport rp, rs;
    rp.op = "psnr_vs_loop";
    rs.op = "ssim_vs_loop";
    rp.tolerance = rs.tolerance = 1e-9;
    for (int draw = 0; draw < 10; ++draw) {
      std::mt19937_64 g(mix_seed(0x3517, static_cast<uint64_t>(draw)));
      const int64_t w = 16 + static_cast<int64_t>(rng_below(g, 17));
      const int64_t h = 16 + static_cast<int64_t>(rng_below(g, 17));
      const int64_t border = static_cast<int64_t>(rng_below(g, 3));
      ImageBuffer a = rnd_image(w, h, g);
      ImageBuffer b = rnd_image(w, h, g);
      const double dp = std::abs(psnr(a, b, border) -
                                 naive_psnr_oracle(a, b, border));
      const double ds = std::abs(ssim(a, b, border) -
                                 naive_ssim_oracle(a, b, border));
      rp.max_abs = std::max(rp.max_abs, dp);
      rs.max_abs = std::max(rs.max_abs, ds);
      rp.max_rel = std::max(rp.max_rel, dp / 40.0);
      rs.max_rel = std::max(rs.max_rel, ds);
    }
    rp.pass = rp.max_abs <= rp.tolerance;
    rs.pass = rs.max_abs <= rs.tolerance;
    reports.push_back(rp);
    reports.push_back(rs);
  }

  {  // Exact structural invariants: partition/merge round trip and the
     // pixel-shuffle coordinate map.
    OracleReport rep;
    rep.op = "structure_exact";
    rep.tolerance = 0.0;
    std::mt19937_64 g(0x57AC);
    Tensor x = rnd({3, 6, 8}, g, false);
    WindowLayout lay;
    Tensor merged = window_merge(window_partition(x, 2, &lay), lay);
    auto xv = x.values();
    auto mv = merged.values();
    for (size_t i = 0; i < xv.size(); ++i) {
      rep.max_abs = std::max(rep.max_abs, std::abs(xv[i] - mv[i]));
    }

    const int64_t r = 2, c = 2, hh = 3, ww = 4;
    Tensor enc = rnd({r * r * c, hh, ww}, g, false);
    Tensor shuffled = pixel_shuffle(enc, r);
    auto ev = enc.values();
    auto sv = shuffled.values();
    for (int64_t ch = 0; ch < c; ++ch) {
      for (int64_t i = 0; i < hh; ++i) {
        for (int64_t j = 0; j < ww; ++j) {
          for (int64_t u = 0; u < r; ++u) {
            for (int64_t v = 0; v < r; ++v) {
              const double in =
                  ev[size_t(((ch * r * r + u * r + v) * hh + i) * ww + j)];
              const double out = sv[size_t(
                  (ch * (r * hh) + (i * r + u)) * (r * ww) + (j * r + v))];
              rep.max_abs = std::max(rep.max_abs, std::abs(in - out));
            }
          }
        }
      }
    }
    rep.max_rel = rep.max_abs;
    rep.pass = rep.max_abs == 0.0;
    reports.push_back(rep);
  }

  return reports;
}

}  // namespace himosa
