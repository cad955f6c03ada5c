#include "himosa/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "himosa/rng.hpp"
#include "himosa/threading.hpp"

namespace himosa {

namespace {

void require_comparable(const ImageBuffer& a, const ImageBuffer& b,
                        int64_t border) {
  if (a.width != b.width || a.height != b.height) {
    throw ContractError("metric inputs differ in shape: " +
                        std::to_string(a.width) + "×" +
                        std::to_string(a.height) + " vs " +
                        std::to_string(b.width) + "×" +
                        std::to_string(b.height));
  }
  if (border < 0) throw ContractError("metric border must be >= 0");
  if (a.width - 2 * border < 1 || a.height - 2 * border < 1) {
    throw ContractError("border " + std::to_string(border) +
                        " leaves no valid pixels");
  }
}

double luma_at(const ImageBuffer& img, int64_t y, int64_t x) {
  return 0.299 * static_cast<double>(img.at(y, x, 0)) +
         0.587 * static_cast<double>(img.at(y, x, 1)) +
         0.114 * static_cast<double>(img.at(y, x, 2));
}

}  // namespace

double psnr(const ImageBuffer& a, const ImageBuffer& b, int64_t border) {
  require_comparable(a, b, border);
  double sq = 0.0;
  int64_t count = 0;
  for (int64_t y = border; y < a.height - border; ++y) {
    for (int64_t x = border; x < a.width - border; ++x) {
      const double d = luma_at(a, y, x) - luma_at(b, y, x);
      sq += d * d;
      ++count;
    }
  }
  const double mse = sq / static_cast<double>(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

std::string format_psnr(double db) {
  if (std::isinf(db)) return "identical";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", db);
  return buf;
}

double ssim(const ImageBuffer& a, const ImageBuffer& b, int64_t border) {
  require_comparable(a, b, border);
  constexpr int64_t kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);
  const int64_t vw = a.width - 2 * border, vh = a.height - 2 * border;
  if (vw < kWin || vh < kWin) {
    throw ContractError("valid region " + std::to_string(vw) + "×" +
                        std::to_string(vh) + " smaller than the " +
                        std::to_string(kWin) + "×" + std::to_string(kWin) +
                        " SSIM window");
  }

  double g[kWin];
  const int64_t half = kWin / 2;
  for (int64_t i = 0; i < kWin; ++i) {
    const double t = static_cast<double>(i - half);
    g[i] = std::exp(-t * t / (2.0 * kSigma * kSigma));
  }
  double wsum = 0.0;
  double w[kWin][kWin];
  for (int64_t i = 0; i < kWin; ++i) {
    for (int64_t j = 0; j < kWin; ++j) {
      w[i][j] = g[i] * g[j];
      wsum += w[i][j];
    }
  }
  for (int64_t i = 0; i < kWin; ++i) {
    for (int64_t j = 0; j < kWin; ++j) w[i][j] /= wsum;
  }

  double total = 0.0;
  int64_t windows = 0;
  for (int64_t y0 = border; y0 + kWin <= a.height - border; ++y0) {
    for (int64_t x0 = border; x0 + kWin <= a.width - border; ++x0) {
      double mu_a = 0.0, mu_b = 0.0;
      for (int64_t i = 0; i < kWin; ++i) {
        for (int64_t j = 0; j < kWin; ++j) {
          mu_a += w[i][j] * luma_at(a, y0 + i, x0 + j);
          mu_b += w[i][j] * luma_at(b, y0 + i, x0 + j);
        }
      }
      double var_a = 0.0, var_b = 0.0, cov = 0.0;
      for (int64_t i = 0; i < kWin; ++i) {
        for (int64_t j = 0; j < kWin; ++j) {
          const double da = luma_at(a, y0 + i, x0 + j) - mu_a;
          const double db = luma_at(b, y0 + i, x0 + j) - mu_b;
          var_a += w[i][j] * da * da;
          var_b += w[i][j] * db * db;
          // (da·db) first: multiplication commutes bit-exactly, keeping
          // ssim(a,b) == ssim(b,a) to the last ulp.
          cov += w[i][j] * (da * db);
        }
      }
      const double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2);
      const double den =
          (mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2);
      total += num / den;
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

int64_t count_params(const ModelConfig& cfg_in) {
  ModelConfig cfg = cfg_in;
  cfg.validate();
  const int64_t d = cfg.channels, dp = cfg.expert_dim, m = cfg.n_experts;
  const int64_t hid = cfg.glu_hidden(), red = d / cfg.cab_reduction;
  const int64_t layers = cfg.n_blocks * cfg.n_layers;
  const int64_t head_out = cfg.scale * cfg.scale * 3;

  const int64_t shallow = 27 * d + d;
  const int64_t norms = 4 * d;
  const int64_t router = d * m;
  const int64_t experts = 4 * m * d * dp;
  const int64_t cab = 2 * (9 * d * d + d) + 2 * d * red;
  const int64_t glu = 2 * (hid * d + hid) + 9 * hid + (d * hid + d);
  const int64_t body = 9 * d * d + d;
  const int64_t head = 9 * d * head_out + head_out;
  return shallow + layers * (norms + router + experts + cab + glu) + body +
         head;
}

int64_t carsa_window_flops(int64_t d, int64_t dp, int64_t m, int64_t n,
                           int64_t k) {
  const int64_t scoring = 2 * n * d * m;
  const int64_t per_expert = 6 * k * d * dp + 4 * k * k * dp + 2 * k * dp * d;
  return scoring + m * per_expert;
}

int64_t dense_window_flops(int64_t d, int64_t dp, int64_t m, int64_t n) {
  return m * (6 * n * d * dp + 4 * n * n * dp + 2 * n * dp * d);
}

std::string CostReport::text() const {
  std::ostringstream out;
  for (const CostRow& row : rows) {
    out << row.module << '\t' << row.params << '\t' << row.flops << '\n';
  }
  out << "total\t" << total_params << '\t' << total_flops << '\n';
  return out.str();
}

CostReport count_flops(const ModelConfig& cfg_in, int64_t h, int64_t w) {
  ModelConfig cfg = cfg_in;
  cfg.validate();
  if (h < 1 || w < 1) throw ContractError("count_flops: extents must be >= 1");
  const int64_t d = cfg.channels, dp = cfg.expert_dim, m = cfg.n_experts;
  const int64_t hid = cfg.glu_hidden(), red = d / cfg.cab_reduction;
  const int64_t layers = cfg.n_blocks * cfg.n_layers;
  const int64_t head_out = cfg.scale * cfg.scale * 3;
  const int64_t mw = cfg.max_window();
  const int64_t ph = (h + mw - 1) / mw * mw;
  const int64_t pw = (w + mw - 1) / mw * mw;

  CostReport rep;
  auto push = [&](std::string name, int64_t params, int64_t flops) {
    rep.rows.push_back({std::move(name), params, flops});
    rep.total_params += params;
    rep.total_flops += flops;
  };

  push("shallow", 27 * d + d, 2 * 9 * 3 * d * h * w);

  int64_t attn_flops = 0, cab_flops = 0, glu_flops = 0;
  for (int64_t i = 0; i < cfg.n_layers; ++i) {
    const int64_t ws = window_size_schedule(cfg, i);
    const int64_t lh = (ph + ws - 1) / ws * ws;
    const int64_t lw = (pw + ws - 1) / ws * ws;
    const int64_t nw = (lh / ws) * (lw / ws);
    const int64_t n = ws * ws;
    const int64_t k = k_schedule(cfg, i, n);
    attn_flops += nw * carsa_window_flops(d, dp, m, n, k);
    cab_flops += 2 * (2 * 9 * d * d * ph * pw) + 2 * d * red + 2 * red * d;
    glu_flops += 2 * d * hid * ph * pw      // value 1×1
                 + 2 * 9 * hid * ph * pw    // depthwise 3×3
                 + 2 * d * hid * ph * pw    // gate 1×1
                 + 2 * hid * d * ph * pw;   // out 1×1
  }
  attn_flops *= cfg.n_blocks;
  cab_flops *= cfg.n_blocks;
  glu_flops *= cfg.n_blocks;

  push("attention", layers * (d * m + 4 * m * d * dp), attn_flops);
  push("cab", layers * (2 * (9 * d * d + d) + 2 * d * red), cab_flops);
  push("conv_glu", layers * (2 * (hid * d + hid) + 9 * hid + d * hid + d),
       glu_flops);
  push("norms", layers * 4 * d, 0);
  push("body_conv", 9 * d * d + d, 2 * 9 * d * d * ph * pw);
  push("head", 9 * d * head_out + head_out, 2 * 9 * d * head_out * ph * pw);
  return rep;
}

TimingReport time_inference(const HimosaWeights& w, int64_t h, int64_t wd,
                            int64_t repeats) {
  if (repeats < 1) throw ContractError("time_inference: repeats must be >= 1");
  NoGradGuard ng;
  std::mt19937_64 g(0x71AEu);
  std::vector<double> img(static_cast<size_t>(3 * h * wd));
  for (double& v : img) v = rng_unit(g);
  Tensor input = Tensor::from_values({3, h, wd}, std::move(img));

  himosa_forward(input, w);  // warm-up, untimed
  std::vector<double> ms(static_cast<size_t>(repeats));
  for (int64_t i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    himosa_forward(input, w);
    const auto t1 = std::chrono::steady_clock::now();
    ms[static_cast<size_t>(i)] =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  std::sort(ms.begin(), ms.end());
  auto percentile = [&](double q) {
    const double pos = q * static_cast<double>(ms.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, ms.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return ms[lo] + (ms[hi] - ms[lo]) * frac;
  };
  TimingReport rep;
  rep.median_ms = percentile(0.5);
  rep.iqr_ms = percentile(0.75) - percentile(0.25);
  rep.repeats = repeats;
  rep.threads = static_cast<int64_t>(thread_budget());
  return rep;
}

}  // namespace himosa
