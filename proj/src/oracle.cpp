#include "himosa/oracle.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace himosa {

std::string OracleReport::line() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s\t%.3e\t%.3e\t%s", op.c_str(), max_abs,
                max_rel, pass ? "PASS" : "FAIL");
  return buf;
}

OracleReport compare_values(std::string op, std::span<const double> a,
                            std::span<const double> b, double rel_tol) {
  OracleReport r;
  r.op = std::move(op);
  r.tolerance = rel_tol;
  if (a.size() != b.size()) {
    r.max_abs = r.max_rel = INFINITY;
    r.pass = false;
    return r;
  }
  for (size_t i = 0; i < a.size(); ++i) {
    double abs_err = std::abs(a[i] - b[i]);
    double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-4});
    r.max_abs = std::max(r.max_abs, abs_err);
    r.max_rel = std::max(r.max_rel, abs_err / denom);
  }
  r.pass = std::isfinite(r.max_rel) && r.max_rel <= rel_tol;
  return r;
}

Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int64_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int64_t cout = w.dim(0), k = w.dim(2), pad = k / 2;
  const auto xv = x.values();
  const auto wv = w.values();
  const auto bv = b.values();
  std::vector<double> out(static_cast<size_t>(cout * h * wd));
  for (int64_t co = 0; co < cout; ++co) {
    for (int64_t i = 0; i < h; ++i) {
      for (int64_t j = 0; j < wd; ++j) {
        double acc = bv[co];
        for (int64_t ci = 0; ci < cin; ++ci) {
          for (int64_t u = 0; u < k; ++u) {
            for (int64_t v = 0; v < k; ++v) {
              int64_t ii = i + u - pad, jj = j + v - pad;
              if (ii < 0 || ii >= h || jj < 0 || jj >= wd) continue;
              acc += wv[((co * cin + ci) * k + u) * k + v] *
                     xv[(ci * h + ii) * wd + jj];
            }
          }
        }
        out[(co * h + i) * wd + j] = acc;
      }
    }
  }
  return Tensor::from_values({cout, h, wd}, std::move(out));
}

Tensor naive_depthwise_conv2d(const Tensor& x, const Tensor& w) {
  const int64_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int64_t k = w.dim(2), pad = k / 2;
  const auto xv = x.values();
  const auto wv = w.values();
  std::vector<double> out(static_cast<size_t>(c * h * wd));
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t i = 0; i < h; ++i) {
      for (int64_t j = 0; j < wd; ++j) {
        double acc = 0.0;
        for (int64_t u = 0; u < k; ++u) {
          for (int64_t v = 0; v < k; ++v) {
            int64_t ii = i + u - pad, jj = j + v - pad;
            if (ii < 0 || ii >= h || jj < 0 || jj >= wd) continue;
            acc += wv[(ch * k + u) * k + v] * xv[(ch * h + ii) * wd + jj];
          }
        }
        out[(ch * h + i) * wd + j] = acc;
      }
    }
  }
  return Tensor::from_values({c, h, wd}, std::move(out));
}

ImageBuffer naive_bicubic_oracle(const ImageBuffer& buf, int64_t r) {
  if (r < 1 || buf.width % r != 0 || buf.height % r != 0) {
    throw ContractError("naive_bicubic_oracle: extents not divisible");
  }
  const double s = static_cast<double>(r);
  // Same polynomial spelling as production: evaluation order changes the
  // last ulp of a weight, and the comparison is byte-exact by contract.
  auto kernel = [](double t) {
    t = std::abs(t);
    if (t < 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
    if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
    return 0.0;
  };
  auto axis_weights = [&](int64_t out_idx, int64_t size,
                          std::vector<int64_t>& src,
                          std::vector<double>& wt) {
    const double center = (static_cast<double>(out_idx) + 0.5) * s - 0.5;
    const int64_t left =
        static_cast<int64_t>(std::floor(center - 2.0 * s)) + 1;
    const int64_t taps = 4 * r;
    src.resize(static_cast<size_t>(taps));
    wt.resize(static_cast<size_t>(taps));
    double wsum = 0.0;
    for (int64_t i = 0; i < taps; ++i) {
      const int64_t x = left + i;
      wt[i] = kernel((center - static_cast<double>(x)) / s);
      src[i] = std::min<int64_t>(std::max<int64_t>(x, 0), size - 1);
      wsum += wt[i];
    }
    for (int64_t i = 0; i < taps; ++i) wt[i] /= wsum;
  };
  ImageBuffer out;
  out.width = buf.width / r;
  out.height = buf.height / r;
  out.data.resize(static_cast<size_t>(3 * out.width * out.height));
  std::vector<int64_t> sx, sy;
  std::vector<double> wx, wy;
  for (int64_t i = 0; i < out.height; ++i) {
    axis_weights(i, buf.height, sy, wy);
    for (int64_t j = 0; j < out.width; ++j) {
      axis_weights(j, buf.width, sx, wx);
      for (int64_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (size_t t = 0; t < sy.size(); ++t) {
          double row = 0.0;
          for (size_t u = 0; u < sx.size(); ++u) {
            row += wx[u] *
                   (static_cast<double>(buf.at(sy[t], sx[u], c)) / 255.0);
          }
          acc += wy[t] * row;
        }
        long long q = std::llround(acc * 255.0);
        if (q < 0) q = 0;
        if (q > 255) q = 255;
        out.at(i, j, c) = static_cast<uint8_t>(q);
      }
    }
  }
  return out;
}

Tensor dense_mha_oracle(const Tensor& x,
                        const std::vector<DenseHeadWeights>& heads,
                        int64_t head_dim) {
  const int64_t n = x.dim(0), d = x.dim(1), dp = head_dim;
  const auto xv = x.values();
  std::vector<double> out(static_cast<size_t>(n * d), 0.0);
  auto project = [&](const std::vector<double>& w) {
    // [n×d]·[d×d'] → [n×d']
    std::vector<double> p(static_cast<size_t>(n * dp), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < dp; ++j) {
        double acc = 0.0;
        for (int64_t t = 0; t < d; ++t) acc += xv[i * d + t] * w[t * dp + j];
        p[i * dp + j] = acc;
      }
    return p;
  };
  for (const DenseHeadWeights& hw : heads) {
    std::vector<double> q = project(hw.wq);
    std::vector<double> k = project(hw.wk);
    std::vector<double> v = project(hw.wv);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dp));
    for (int64_t i = 0; i < n; ++i) {
      std::vector<double> row(static_cast<size_t>(n));
      double mx = -INFINITY;
      for (int64_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (int64_t t = 0; t < dp; ++t) s += q[i * dp + t] * k[j * dp + t];
        row[j] = s * inv_sqrt;
        mx = std::max(mx, row[j]);
      }
      double z = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - mx);
        z += row[j];
      }
      for (int64_t j = 0; j < n; ++j) row[j] /= z;
      // attended value for token i, then output projection
      std::vector<double> e(static_cast<size_t>(dp), 0.0);
      for (int64_t t = 0; t < dp; ++t) {
        double acc = 0.0;
        for (int64_t j = 0; j < n; ++j) acc += row[j] * v[j * dp + t];
        e[t] = acc;
      }
      for (int64_t t = 0; t < d; ++t) {
        double acc = 0.0;
        for (int64_t u = 0; u < dp; ++u) acc += e[u] * hw.wo[u * d + t];
        out[i * d + t] += acc;
      }
    }
  }
  return Tensor::from_values({n, d}, std::move(out));
}

double naive_psnr_oracle(const ImageBuffer& a, const ImageBuffer& b,
                         int64_t border) {
  if (a.width != b.width || a.height != b.height) {
    throw ContractError("naive_psnr_oracle: size mismatch");
  }
  // Column-major walk with the luma weights distributed over per-channel
  // differences; a different summation order from the production metric.
  double se = 0.0;
  int64_t count = 0;
  for (int64_t x = border; x < a.width - border; ++x) {
    for (int64_t y = border; y < a.height - border; ++y) {
      double d = 0.299 * (double(a.at(y, x, 0)) - double(b.at(y, x, 0))) +
                 0.587 * (double(a.at(y, x, 1)) - double(b.at(y, x, 1))) +
                 0.114 * (double(a.at(y, x, 2)) - double(b.at(y, x, 2)));
      se += d * d;
      ++count;
    }
  }
  if (count <= 0) throw ContractError("naive_psnr_oracle: empty region");
  double mse = se / double(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double naive_ssim_oracle(const ImageBuffer& a, const ImageBuffer& b,
                         int64_t border) {
  if (a.width != b.width || a.height != b.height) {
    throw ContractError("naive_ssim_oracle: size mismatch");
  }
  const int64_t w = a.width - 2 * border;
  const int64_t h = a.height - 2 * border;
  if (w < 11 || h < 11) {
    throw ContractError("naive_ssim_oracle: region smaller than window");
  }
  auto luma = [](const ImageBuffer& img, int64_t y, int64_t x) {
    return 0.299 * double(img.at(y, x, 0)) + 0.587 * double(img.at(y, x, 1)) +
           0.114 * double(img.at(y, x, 2));
  };
  // 1D Gaussian normalized to unit sum first, so the 2D weights come out as
  // g[i]*g[j] directly (the production code normalizes the 2D product grid).
  double g[11];
  double gs = 0.0;
  for (int i = 0; i < 11; ++i) {
    double t = double(i - 5) / 1.5;
    g[i] = std::exp(-0.5 * t * t);
    gs += g[i];
  }
  for (int i = 0; i < 11; ++i) g[i] /= gs;
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  double total = 0.0;
  int64_t windows = 0;
  for (int64_t y0 = border; y0 + 11 <= a.height - border; ++y0) {
    for (int64_t x0 = border; x0 + 11 <= a.width - border; ++x0) {
      // Raw second moments instead of centered sums.
      double ma = 0.0, mb = 0.0, maa = 0.0, mbb = 0.0, mab = 0.0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          double wgt = g[i] * g[j];
          double va = luma(a, y0 + i, x0 + j);
          double vb = luma(b, y0 + i, x0 + j);
          ma += wgt * va;
          mb += wgt * vb;
          maa += wgt * va * va;
          mbb += wgt * vb * vb;
          mab += wgt * va * vb;
        }
      }
      double var_a = maa - ma * ma;
      double var_b = mbb - mb * mb;
      double cov = mab - ma * mb;
      double s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                 ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      total += s;
      ++windows;
    }
  }
  return total / double(windows);
}

std::vector<double> finite_diff_grad(const std::function<double(Tensor&)>& f,
                                     Tensor x, double h) {
  NoGradGuard ng;
  auto vals = x.mutable_values();
  std::vector<double> g(vals.size());
  for (size_t i = 0; i < vals.size(); ++i) {
    double v = vals[i];
    vals[i] = v + h;
    double fp = f(x);
    vals[i] = v - h;
    double fm = f(x);
    vals[i] = v;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw ContractError("finite_diff_grad: non-finite probe at index " +
                          std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace himosa
