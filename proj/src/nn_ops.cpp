#include "himosa/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "himosa/threading.hpp"

namespace himosa {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

struct ConvDims {
  int64_t cin, h, w, cout, k, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& wt, const char* op) {
  require(x.rank() == 3, std::string(op) + ": input must be [C×H×W], got " +
                             shape_str(x.shape()));
  require(wt.rank() == 4, std::string(op) + ": kernel must be rank 4, got " +
                              shape_str(wt.shape()));
  ConvDims d{};
  d.cin = x.dim(0);
  d.h = x.dim(1);
  d.w = x.dim(2);
  d.cout = wt.dim(0);
  d.k = wt.dim(2);
  require(wt.dim(3) == d.k, std::string(op) + ": kernel must be square");
  require(d.k % 2 == 1, std::string(op) + ": kernel size must be odd");
  require(d.h >= 1 && d.w >= 1, std::string(op) + ": empty spatial extents");
  d.pad = d.k / 2;
  return d;
}

// Accumulates wv * (shifted plane of src) into dst for one kernel tap.
// dst and src are H×W planes; the shift is (du, dv) with zero padding.
void tap_accumulate(double* dst, const double* src, int64_t h, int64_t w,
                    int64_t du, int64_t dv, double wv) {
  if (wv == 0.0) return;
  int64_t i0 = std::max<int64_t>(0, -du), i1 = std::min(h, h - du);
  int64_t j0 = std::max<int64_t>(0, -dv), j1 = std::min(w, w - dv);
  for (int64_t i = i0; i < i1; ++i) {
    double* drow = dst + i * w;
    const double* srow = src + (i + du) * w + dv;
    for (int64_t j = j0; j < j1; ++j) drow[j] += wv * srow[j];
  }
}

// Dot product of dst-plane gradient with a shifted src plane (one kernel tap).
double tap_dot(const double* gy, const double* src, int64_t h, int64_t w,
               int64_t du, int64_t dv) {
  int64_t i0 = std::max<int64_t>(0, -du), i1 = std::min(h, h - du);
  int64_t j0 = std::max<int64_t>(0, -dv), j1 = std::min(w, w - dv);
  double acc = 0.0;
  for (int64_t i = i0; i < i1; ++i) {
    const double* grow = gy + i * w;
    const double* srow = src + (i + du) * w + dv;
    for (int64_t j = j0; j < j1; ++j) acc += grow[j] * srow[j];
  }
  return acc;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  ConvDims d = conv_dims(x, w, "conv2d");
  require(w.dim(1) == d.cin,
          "conv2d: kernel expects " + std::to_string(w.dim(1)) +
              " input channels, input has " + std::to_string(d.cin));
  require(b.rank() == 1 && b.dim(0) == d.cout,
          "conv2d: bias must be [" + std::to_string(d.cout) + "], got " +
              shape_str(b.shape()));
  const auto xv = x.values();
  const auto wv = w.values();
  const auto bv = b.values();
  const int64_t plane = d.h * d.w;
  std::vector<double> out(static_cast<size_t>(d.cout * plane));
  parallel_for(d.cout, [&](int64_t co) {
    double* oplane = out.data() + co * plane;
    std::fill(oplane, oplane + plane, bv[co]);
    for (int64_t ci = 0; ci < d.cin; ++ci) {
      const double* xplane = xv.data() + ci * plane;
      const double* wk = wv.data() + (co * d.cin + ci) * d.k * d.k;
      for (int64_t u = 0; u < d.k; ++u)
        for (int64_t v = 0; v < d.k; ++v)
          tap_accumulate(oplane, xplane, d.h, d.w, u - d.pad, v - d.pad,
                         wk[u * d.k + v]);
    }
  });
  return detail::make_result(
      {d.cout, d.h, d.w}, std::move(out), {x, w, b}, [d](TensorNode& nd) {
        TensorNode& px = *nd.parents[0];
        TensorNode& pw = *nd.parents[1];
        TensorNode& pb = *nd.parents[2];
        const int64_t plane = d.h * d.w;
        if (px.requires_grad) {
          std::vector<double> dx(px.values.size(), 0.0);
          parallel_for(d.cin, [&](int64_t ci) {
            double* dplane = dx.data() + ci * plane;
            for (int64_t co = 0; co < d.cout; ++co) {
              const double* gplane = nd.grad.data() + co * plane;
              const double* wk =
                  pw.values.data() + (co * d.cin + ci) * d.k * d.k;
              // dx gets the gradient correlated with the flipped kernel.
              for (int64_t u = 0; u < d.k; ++u)
                for (int64_t v = 0; v < d.k; ++v)
                  tap_accumulate(dplane, gplane, d.h, d.w, d.pad - u,
                                 d.pad - v, wk[u * d.k + v]);
            }
          });
          detail::accumulate(px, dx.data(), static_cast<int64_t>(dx.size()));
        }
        if (pw.requires_grad) {
          std::vector<double> dw(pw.values.size(), 0.0);
          parallel_for(d.cout, [&](int64_t co) {
            const double* gplane = nd.grad.data() + co * plane;
            for (int64_t ci = 0; ci < d.cin; ++ci) {
              const double* xplane = px.values.data() + ci * plane;
              double* wk = dw.data() + (co * d.cin + ci) * d.k * d.k;
              for (int64_t u = 0; u < d.k; ++u)
                for (int64_t v = 0; v < d.k; ++v)
                  wk[u * d.k + v] += tap_dot(gplane, xplane, d.h, d.w,
                                             u - d.pad, v - d.pad);
            }
          });
          detail::accumulate(pw, dw.data(), static_cast<int64_t>(dw.size()));
        }
        if (pb.requires_grad) {
          std::vector<double> db(static_cast<size_t>(d.cout), 0.0);
          for (int64_t co = 0; co < d.cout; ++co) {
            const double* gplane = nd.grad.data() + co * plane;
            for (int64_t p = 0; p < plane; ++p) db[co] += gplane[p];
          }
          detail::accumulate(pb, db.data(), d.cout);
        }
      });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w) {
  ConvDims d = conv_dims(x, w, "depthwise_conv2d");
  require(w.dim(0) == d.cin && w.dim(1) == 1,
          "depthwise_conv2d: kernel must be [" + std::to_string(d.cin) +
              "×1×k×k], got " + shape_str(w.shape()));
  const auto xv = x.values();
  const auto wv = w.values();
  const int64_t plane = d.h * d.w;
  std::vector<double> out(static_cast<size_t>(d.cin * plane), 0.0);
  parallel_for(d.cin, [&](int64_t c) {
    double* oplane = out.data() + c * plane;
    const double* xplane = xv.data() + c * plane;
    const double* wk = wv.data() + c * d.k * d.k;
    for (int64_t u = 0; u < d.k; ++u)
      for (int64_t v = 0; v < d.k; ++v)
        tap_accumulate(oplane, xplane, d.h, d.w, u - d.pad, v - d.pad,
                       wk[u * d.k + v]);
  });
  return detail::make_result(
      {d.cin, d.h, d.w}, std::move(out), {x, w}, [d](TensorNode& nd) {
        TensorNode& px = *nd.parents[0];
        TensorNode& pw = *nd.parents[1];
        const int64_t plane = d.h * d.w;
        std::vector<double> dx(px.requires_grad ? px.values.size() : 0, 0.0);
        std::vector<double> dw(pw.requires_grad ? pw.values.size() : 0, 0.0);
        parallel_for(d.cin, [&](int64_t c) {
          const double* gplane = nd.grad.data() + c * plane;
          const double* xplane = px.values.data() + c * plane;
          const double* wk = pw.values.data() + c * d.k * d.k;
          for (int64_t u = 0; u < d.k; ++u) {
            for (int64_t v = 0; v < d.k; ++v) {
              if (!dx.empty()) {
                tap_accumulate(dx.data() + c * plane, gplane, d.h, d.w,
                               d.pad - u, d.pad - v, wk[u * d.k + v]);
              }
              if (!dw.empty()) {
                dw[c * d.k * d.k + u * d.k + v] +=
                    tap_dot(gplane, xplane, d.h, d.w, u - d.pad, v - d.pad);
              }
            }
          }
        });
        if (!dx.empty())
          detail::accumulate(px, dx.data(), static_cast<int64_t>(dx.size()));
        if (!dw.empty())
          detail::accumulate(pw, dw.data(), static_cast<int64_t>(dw.size()));
      });
}

Tensor pixel_shuffle(const Tensor& x, int64_t r) {
  require(x.rank() == 3, "pixel_shuffle: input must be [C×H×W], got " +
                             shape_str(x.shape()));
  require(r >= 1, "pixel_shuffle: r must be positive");
  const int64_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  require(cin % (r * r) == 0,
          "pixel_shuffle: " + std::to_string(cin) +
              " channels not divisible by r²=" + std::to_string(r * r));
  const int64_t cout = cin / (r * r), oh = h * r, ow = w * r;
  const auto xv = x.values();
  std::vector<double> out(static_cast<size_t>(cout * oh * ow));
  for (int64_t c = 0; c < cout; ++c)
    for (int64_t i = 0; i < h; ++i)
      for (int64_t u = 0; u < r; ++u)
        for (int64_t j = 0; j < w; ++j)
          for (int64_t v = 0; v < r; ++v)
            out[(c * oh + i * r + u) * ow + j * r + v] =
                xv[((c * r * r + u * r + v) * h + i) * w + j];
  return detail::make_result(
      {cout, oh, ow}, std::move(out), {x},
      [cout, h, w, r](TensorNode& nd) {
        TensorNode& px = *nd.parents[0];
        if (!px.requires_grad) return;
        const int64_t oh = h * r, ow = w * r;
        std::vector<double> dx(px.values.size());
        for (int64_t c = 0; c < cout; ++c)
          for (int64_t i = 0; i < h; ++i)
            for (int64_t u = 0; u < r; ++u)
              for (int64_t j = 0; j < w; ++j)
                for (int64_t v = 0; v < r; ++v)
                  dx[((c * r * r + u * r + v) * h + i) * w + j] =
                      nd.grad[(c * oh + i * r + u) * ow + j * r + v];
        detail::accumulate(px, dx.data(), static_cast<int64_t>(dx.size()));
      });
}

Tensor window_partition(const Tensor& x, int64_t ws, WindowLayout* layout) {
  require(x.rank() == 3, "window_partition: input must be [C×H×W], got " +
                             shape_str(x.shape()));
  require(ws >= 1, "window_partition: window size must be positive");
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  require(h % ws == 0 && w % ws == 0,
          "window_partition: " + std::to_string(h) + "×" + std::to_string(w) +
              " not divisible by ws=" + std::to_string(ws));
  WindowLayout lay;
  lay.orig_h = lay.padded_h = h;
  lay.orig_w = lay.padded_w = w;
  lay.ws = ws;
  lay.grid_h = h / ws;
  lay.grid_w = w / ws;
  lay.channels = c;
  if (layout) *layout = lay;
  const int64_t nw = lay.windows(), n = lay.tokens();
  const auto xv = x.values();
  std::vector<double> out(static_cast<size_t>(nw * n * c));
  for (int64_t wi = 0; wi < nw; ++wi) {
    const int64_t base_i = (wi / lay.grid_w) * ws;
    const int64_t base_j = (wi % lay.grid_w) * ws;
    for (int64_t t = 0; t < n; ++t) {
      const int64_t pi = base_i + t / ws, pj = base_j + t % ws;
      for (int64_t ch = 0; ch < c; ++ch)
        out[(wi * n + t) * c + ch] = xv[(ch * h + pi) * w + pj];
    }
  }
  return detail::make_result(
      {nw, n, c}, std::move(out), {x}, [lay](TensorNode& nd) {
        TensorNode& px = *nd.parents[0];
        if (!px.requires_grad) return;
        std::vector<double> dx(px.values.size());
        const int64_t n = lay.tokens(), c = lay.channels;
        for (int64_t wi = 0; wi < lay.windows(); ++wi) {
          const int64_t base_i = (wi / lay.grid_w) * lay.ws;
          const int64_t base_j = (wi % lay.grid_w) * lay.ws;
          for (int64_t t = 0; t < n; ++t) {
            const int64_t pi = base_i + t / lay.ws, pj = base_j + t % lay.ws;
            for (int64_t ch = 0; ch < c; ++ch)
              dx[(ch * lay.padded_h + pi) * lay.padded_w + pj] =
                  nd.grad[(wi * n + t) * c + ch];
          }
        }
        detail::accumulate(px, dx.data(), static_cast<int64_t>(dx.size()));
      });
}

Tensor window_merge(const Tensor& windows, const WindowLayout& layout) {
  require(windows.rank() == 3, "window_merge: windows must be [nw×n×C], got " +
                                   shape_str(windows.shape()));
  require(windows.dim(0) == layout.windows() &&
              windows.dim(1) == layout.tokens() &&
              windows.dim(2) == layout.channels,
          "window_merge: windows " + shape_str(windows.shape()) +
              " inconsistent with layout (" + std::to_string(layout.windows()) +
              "×" + std::to_string(layout.tokens()) + "×" +
              std::to_string(layout.channels) + ")");
  const int64_t nw = layout.windows(), n = layout.tokens(), c = layout.channels;
  const int64_t h = layout.padded_h, w = layout.padded_w, ws = layout.ws;
  const auto wv = windows.values();
  std::vector<double> out(static_cast<size_t>(c * h * w));
  for (int64_t wi = 0; wi < nw; ++wi) {
    const int64_t base_i = (wi / layout.grid_w) * ws;
    const int64_t base_j = (wi % layout.grid_w) * ws;
    for (int64_t t = 0; t < n; ++t) {
      const int64_t pi = base_i + t / ws, pj = base_j + t % ws;
      for (int64_t ch = 0; ch < c; ++ch)
        out[(ch * h + pi) * w + pj] = wv[(wi * n + t) * c + ch];
    }
  }
  return detail::make_result(
      {c, h, w}, std::move(out), {windows}, [layout](TensorNode& nd) {
        TensorNode& pw = *nd.parents[0];
        if (!pw.requires_grad) return;
        const int64_t n = layout.tokens(), c = layout.channels;
        std::vector<double> dw(pw.values.size());
        for (int64_t wi = 0; wi < layout.windows(); ++wi) {
          const int64_t base_i = (wi / layout.grid_w) * layout.ws;
          const int64_t base_j = (wi % layout.grid_w) * layout.ws;
          for (int64_t t = 0; t < n; ++t) {
            const int64_t pi = base_i + t / layout.ws;
            const int64_t pj = base_j + t % layout.ws;
            for (int64_t ch = 0; ch < c; ++ch)
              dw[(wi * n + t) * c + ch] =
                  nd.grad[(ch * layout.padded_h + pi) * layout.padded_w + pj];
          }
        }
        detail::accumulate(pw, dw.data(), static_cast<int64_t>(dw.size()));
      });
}

std::vector<int64_t> topk_select(const Tensor& scores, int64_t k) {
  require(scores.rank() == 1,
          "topk_select: scores must be rank 1, got " + shape_str(scores.shape()));
  const int64_t n = scores.dim(0);
  if (k < 1 || k > n) {
    throw ContractError("topk_select: k=" + std::to_string(k) +
                        " outside [1, " + std::to_string(n) + "]");
  }
  const auto sv = scores.values();
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                    [&](int64_t a, int64_t b) {
                      if (sv[a] != sv[b]) return sv[a] > sv[b];
                      return a < b;
                    });
  idx.resize(static_cast<size_t>(k));
  return idx;
}

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx) {
  require(x.rank() == 2,
          "gather_rows: input must be [n×d], got " + shape_str(x.shape()));
  const int64_t n = x.dim(0), d = x.dim(1);
  for (int64_t i : idx) {
    if (i < 0 || i >= n) {
      throw ContractError("gather_rows: index " + std::to_string(i) +
                          " outside [0, " + std::to_string(n) + ")");
    }
  }
  const int64_t k = static_cast<int64_t>(idx.size());
  const auto xv = x.values();
  std::vector<double> out(static_cast<size_t>(k * d));
  for (int64_t t = 0; t < k; ++t)
    std::copy_n(xv.data() + idx[t] * d, d, out.data() + t * d);
  return detail::make_result(
      {k, d}, std::move(out), {x}, [idx, d](TensorNode& nd) {
        TensorNode& px = *nd.parents[0];
        if (!px.requires_grad) return;
        std::vector<double> dx(px.values.size(), 0.0);
        for (size_t t = 0; t < idx.size(); ++t)
          for (int64_t j = 0; j < d; ++j)
            dx[idx[t] * d + j] += nd.grad[t * d + j];
        detail::accumulate(px, dx.data(), static_cast<int64_t>(dx.size()));
      });
}

Tensor scatter_add_rows(const Tensor& acc, const std::vector<int64_t>& idx,
                        const Tensor& rows) {
  require(acc.rank() == 2 && rows.rank() == 2,
          "scatter_add_rows: acc and rows must be rank 2");
  const int64_t n = acc.dim(0), d = acc.dim(1);
  require(rows.dim(1) == d && rows.dim(0) == static_cast<int64_t>(idx.size()),
          "scatter_add_rows: rows " + shape_str(rows.shape()) +
              " inconsistent with " + std::to_string(idx.size()) +
              " indices and acc " + shape_str(acc.shape()));
  for (int64_t i : idx) {
    if (i < 0 || i >= n) {
      throw ContractError("scatter_add_rows: index " + std::to_string(i) +
                          " outside [0, " + std::to_string(n) + ")");
    }
  }
  const auto av = acc.values();
  const auto rv = rows.values();
  std::vector<double> out(av.begin(), av.end());
  for (size_t t = 0; t < idx.size(); ++t)
    for (int64_t j = 0; j < d; ++j)
      out[idx[t] * d + j] += rv[t * d + j];
  return detail::make_result(
      {n, d}, std::move(out), {acc, rows}, [idx, d](TensorNode& nd) {
        TensorNode& pa = *nd.parents[0];
        TensorNode& pr = *nd.parents[1];
        detail::accumulate(pa, nd.grad.data(),
                           static_cast<int64_t>(nd.grad.size()));
        if (pr.requires_grad) {
          std::vector<double> dr(pr.values.size());
          for (size_t t = 0; t < idx.size(); ++t)
            for (int64_t j = 0; j < d; ++j)
              dr[t * d + j] = nd.grad[idx[t] * d + j];
          detail::accumulate(pr, dr.data(), static_cast<int64_t>(dr.size()));
        }
      });
}

Tensor global_avg_pool(const Tensor& x) {
  require(x.rank() == 3, "global_avg_pool: input must be [C×H×W], got " +
                             shape_str(x.shape()));
  const int64_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  require(plane >= 1, "global_avg_pool: empty spatial extents");
  const auto xv = x.values();
  std::vector<double> out(static_cast<size_t>(c), 0.0);
  for (int64_t ch = 0; ch < c; ++ch) {
    const double* p = xv.data() + ch * plane;
    double s = 0.0;
    for (int64_t i = 0; i < plane; ++i) s += p[i];
    out[ch] = s / static_cast<double>(plane);
  }
  return detail::make_result(
      {c}, std::move(out), {x}, [c, plane](TensorNode& nd) {
        TensorNode& px = *nd.parents[0];
        if (!px.requires_grad) return;
        std::vector<double> dx(px.values.size());
        for (int64_t ch = 0; ch < c; ++ch) {
          double g = nd.grad[ch] / static_cast<double>(plane);
          std::fill_n(dx.data() + ch * plane, plane, g);
        }
        detail::accumulate(px, dx.data(), static_cast<int64_t>(dx.size()));
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift) {
  require(x.rank() == 2,
          "layer_norm: input must be [n×d], got " + shape_str(x.shape()));
  const int64_t n = x.dim(0), d = x.dim(1);
  require(gain.rank() == 1 && gain.dim(0) == d && shift.rank() == 1 &&
              shift.dim(0) == d,
          "layer_norm: gain/shift must be [" + std::to_string(d) + "]");
  constexpr double kEps = 1e-6;
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto sv = shift.values();
  std::vector<double> out(static_cast<size_t>(n * d));
  for (int64_t i = 0; i < n; ++i) {
    const double* row = xv.data() + i * d;
    double mu = 0.0;
    for (int64_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kEps);
    double* orow = out.data() + i * d;
    for (int64_t j = 0; j < d; ++j)
      orow[j] = (row[j] - mu) * inv * gv[j] + sv[j];
  }
  return detail::make_result(
      {n, d}, std::move(out), {x, gain, shift}, [n, d](TensorNode& nd) {
        TensorNode& px = *nd.parents[0];
        TensorNode& pg = *nd.parents[1];
        TensorNode& ps = *nd.parents[2];
        constexpr double kEps = 1e-6;
        std::vector<double> dx(px.requires_grad ? px.values.size() : 0, 0.0);
        std::vector<double> dg(pg.requires_grad ? pg.values.size() : 0, 0.0);
        std::vector<double> dsh(ps.requires_grad ? ps.values.size() : 0, 0.0);
        std::vector<double> xhat(static_cast<size_t>(d));
        for (int64_t i = 0; i < n; ++i) {
          const double* row = px.values.data() + i * d;
          const double* gy = nd.grad.data() + i * d;
          double mu = 0.0;
          for (int64_t j = 0; j < d; ++j) mu += row[j];
          mu /= static_cast<double>(d);
          double var = 0.0;
          for (int64_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
          var /= static_cast<double>(d);
          const double inv = 1.0 / std::sqrt(var + kEps);
          for (int64_t j = 0; j < d; ++j) xhat[j] = (row[j] - mu) * inv;
          if (!dg.empty())
            for (int64_t j = 0; j < d; ++j) dg[j] += gy[j] * xhat[j];
          if (!dsh.empty())
            for (int64_t j = 0; j < d; ++j) dsh[j] += gy[j];
          if (!dx.empty()) {
            double m1 = 0.0, m2 = 0.0;
            for (int64_t j = 0; j < d; ++j) {
              const double ghat = gy[j] * pg.values[j];
              m1 += ghat;
              m2 += ghat * xhat[j];
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            double* drow = dx.data() + i * d;
            for (int64_t j = 0; j < d; ++j) {
              const double ghat = gy[j] * pg.values[j];
              drow[j] = inv * (ghat - m1 - xhat[j] * m2);
            }
          }
        }
        if (!dx.empty())
          detail::accumulate(px, dx.data(), static_cast<int64_t>(dx.size()));
        if (!dg.empty())
          detail::accumulate(pg, dg.data(), static_cast<int64_t>(dg.size()));
        if (!dsh.empty())
          detail::accumulate(ps, dsh.data(), static_cast<int64_t>(dsh.size()));
      });
}

namespace {
// Symmetric reflection folded into [0, size): ... 2,1,0,0,1,2 ... edge
// samples repeat, so any pad width works from size 1 up.
int64_t reflect_index(int64_t pos, int64_t size) {
  const int64_t period = 2 * size;
  int64_t m = pos % period;
  if (m < 0) m += period;
  return m < size ? m : period - 1 - m;
}
}  // namespace

Tensor pad_reflect(const Tensor& x, int64_t target_h, int64_t target_w) {
  require(x.rank() == 3,
          "pad_reflect: input must be [C×H×W], got " + shape_str(x.shape()));
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  require(h >= 1 && w >= 1, "pad_reflect: empty spatial extents");
  require(target_h >= h && target_w >= w,
          "pad_reflect: target smaller than input");
  if (target_h == h && target_w == w) {
    // Still an op node, so callers can treat pad→crop as a uniform pair.
    return detail::make_result(
        x.shape(), std::vector<double>(x.values().begin(), x.values().end()),
        {x}, [](TensorNode& nd) {
          detail::accumulate(*nd.parents[0], nd.grad.data(),
                             static_cast<int64_t>(nd.grad.size()));
        });
  }
  const auto xv = x.values();
  std::vector<double> out(static_cast<size_t>(c * target_h * target_w));
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < target_h; ++i) {
      const int64_t si = reflect_index(i, h);
      for (int64_t j = 0; j < target_w; ++j)
        out[(ch * target_h + i) * target_w + j] =
            xv[(ch * h + si) * w + reflect_index(j, w)];
    }
  return detail::make_result(
      {c, target_h, target_w}, std::move(out), {x},
      [c, h, w, target_h, target_w](TensorNode& nd) {
        TensorNode& px = *nd.parents[0];
        if (!px.requires_grad) return;
        std::vector<double> dx(px.values.size(), 0.0);
        for (int64_t ch = 0; ch < c; ++ch)
          for (int64_t i = 0; i < target_h; ++i) {
            const int64_t si = reflect_index(i, h);
            for (int64_t j = 0; j < target_w; ++j)
              dx[(ch * h + si) * w + reflect_index(j, w)] +=
                  nd.grad[(ch * target_h + i) * target_w + j];
          }
        detail::accumulate(px, dx.data(), static_cast<int64_t>(dx.size()));
      });
}

Tensor crop2d(const Tensor& x, int64_t h, int64_t w) {
  require(x.rank() == 3,
          "crop2d: input must be [C×H×W], got " + shape_str(x.shape()));
  const int64_t c = x.dim(0), xh = x.dim(1), xw = x.dim(2);
  require(h >= 1 && w >= 1 && h <= xh && w <= xw,
          "crop2d: target " + std::to_string(h) + "×" + std::to_string(w) +
              " outside " + std::to_string(xh) + "×" + std::to_string(xw));
  const auto xv = x.values();
  std::vector<double> out(static_cast<size_t>(c * h * w));
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < h; ++i)
      std::copy_n(xv.data() + (ch * xh + i) * xw, w,
                  out.data() + (ch * h + i) * w);
  return detail::make_result(
      {c, h, w}, std::move(out), {x}, [c, h, w, xh, xw](TensorNode& nd) {
        TensorNode& px = *nd.parents[0];
        if (!px.requires_grad) return;
        std::vector<double> dx(px.values.size(), 0.0);
        for (int64_t ch = 0; ch < c; ++ch)
          for (int64_t i = 0; i < h; ++i)
            std::copy_n(nd.grad.data() + (ch * h + i) * w, w,
                        dx.data() + (ch * xh + i) * xw);
        detail::accumulate(px, dx.data(), static_cast<int64_t>(dx.size()));
      });
}

Tensor slice0(const Tensor& x, int64_t i) {
  require(x.rank() == 3,
          "slice0: input must be rank 3, got " + shape_str(x.shape()));
  const int64_t a = x.dim(0), b = x.dim(1), c = x.dim(2);
  require(i >= 0 && i < a, "slice0: index " + std::to_string(i) +
                               " outside [0, " + std::to_string(a) + ")");
  const auto xv = x.values();
  std::vector<double> out(xv.begin() + i * b * c, xv.begin() + (i + 1) * b * c);
  return detail::make_result(
      {b, c}, std::move(out), {x}, [i, b, c](TensorNode& nd) {
        TensorNode& px = *nd.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int64_t t = 0; t < b * c; ++t)
          px.grad[i * b * c + t] += nd.grad[t];
      });
}

Tensor stack0(const std::vector<Tensor>& slices) {
  require(!slices.empty(), "stack0: no slices");
  const Shape& s = slices[0].shape();
  require(s.size() == 2, "stack0: slices must be rank 2, got " + shape_str(s));
  const int64_t b = s[0], c = s[1];
  std::vector<double> out;
  out.reserve(static_cast<size_t>(static_cast<int64_t>(slices.size()) * b * c));
  for (const Tensor& t : slices) {
    require(t.shape() == s, "stack0: slice shape " + shape_str(t.shape()) +
                                " differs from " + shape_str(s));
    const auto v = t.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return detail::make_result(
      {static_cast<int64_t>(slices.size()), b, c}, std::move(out), slices,
      [b, c](TensorNode& nd) {
        for (size_t i = 0; i < nd.parents.size(); ++i)
          detail::accumulate(*nd.parents[i], nd.grad.data() + i * b * c, b * c);
      });
}

Tensor chw_to_tokens(const Tensor& x) {
  require(x.rank() == 3,
          "chw_to_tokens: input must be [C×H×W], got " + shape_str(x.shape()));
  const int64_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  const auto xv = x.values();
  std::vector<double> out(static_cast<size_t>(plane * c));
  for (int64_t p = 0; p < plane; ++p)
    for (int64_t ch = 0; ch < c; ++ch) out[p * c + ch] = xv[ch * plane + p];
  return detail::make_result(
      {plane, c}, std::move(out), {x}, [c, plane](TensorNode& nd) {
        TensorNode& px = *nd.parents[0];
        if (!px.requires_grad) return;
        std::vector<double> dx(px.values.size());
        for (int64_t p = 0; p < plane; ++p)
          for (int64_t ch = 0; ch < c; ++ch)
            dx[ch * plane + p] = nd.grad[p * c + ch];
        detail::accumulate(px, dx.data(), static_cast<int64_t>(dx.size()));
      });
}

Tensor tokens_to_chw(const Tensor& t, int64_t c, int64_t h, int64_t w) {
  require(t.rank() == 2 && t.dim(0) == h * w && t.dim(1) == c,
          "tokens_to_chw: tokens " + shape_str(t.shape()) +
              " inconsistent with " + std::to_string(c) + "×" +
              std::to_string(h) + "×" + std::to_string(w));
  const int64_t plane = h * w;
  const auto tv = t.values();
  std::vector<double> out(static_cast<size_t>(c * plane));
  for (int64_t p = 0; p < plane; ++p)
    for (int64_t ch = 0; ch < c; ++ch) out[ch * plane + p] = tv[p * c + ch];
  return detail::make_result(
      {c, h, w}, std::move(out), {t}, [c, plane](TensorNode& nd) {
        TensorNode& pt = *nd.parents[0];
        if (!pt.requires_grad) return;
        std::vector<double> dt(pt.values.size());
        for (int64_t p = 0; p < plane; ++p)
          for (int64_t ch = 0; ch < c; ++ch)
            dt[p * c + ch] = nd.grad[ch * plane + p];
        detail::accumulate(pt, dt.data(), static_cast<int64_t>(dt.size()));
      });
}

Tensor column(const Tensor& x, int64_t j) {
  require(x.rank() == 2,
          "column: input must be [n×m], got " + shape_str(x.shape()));
  const int64_t n = x.dim(0), m = x.dim(1);
  require(j >= 0 && j < m, "column: index " + std::to_string(j) +
                               " outside [0, " + std::to_string(m) + ")");
  const auto xv = x.values();
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) out[i] = xv[i * m + j];
  return detail::make_result(
      {n}, std::move(out), {x}, [n, m, j](TensorNode& nd) {
        TensorNode& px = *nd.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int64_t i = 0; i < n; ++i) px.grad[i * m + j] += nd.grad[i];
      });
}

Tensor row_scale(const Tensor& x, const Tensor& s) {
  require(x.rank() == 2,
          "row_scale: input must be [n×d], got " + shape_str(x.shape()));
  const int64_t n = x.dim(0), d = x.dim(1);
  require(s.rank() == 1 && s.dim(0) == n,
          "row_scale: scales must be [" + std::to_string(n) + "], got " +
              shape_str(s.shape()));
  const auto xv = x.values();
  const auto sv = s.values();
  std::vector<double> out(static_cast<size_t>(n * d));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j] * sv[i];
  return detail::make_result(
      {n, d}, std::move(out), {x, s}, [n, d](TensorNode& nd) {
        TensorNode& px = *nd.parents[0];
        TensorNode& ps = *nd.parents[1];
        if (px.requires_grad) {
          std::vector<double> dx(static_cast<size_t>(n * d));
          for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < d; ++j)
              dx[i * d + j] = nd.grad[i * d + j] * ps.values[i];
          detail::accumulate(px, dx.data(), n * d);
        }
        if (ps.requires_grad) {
          std::vector<double> ds(static_cast<size_t>(n), 0.0);
          for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < d; ++j)
              ds[i] += nd.grad[i * d + j] * px.values[i * d + j];
          detail::accumulate(ps, ds.data(), n);
        }
      });
}

Tensor channel_scale(const Tensor& x, const Tensor& s) {
  require(x.rank() == 3,
          "channel_scale: input must be [C×H×W], got " + shape_str(x.shape()));
  const int64_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  require(s.rank() == 1 && s.dim(0) == c,
          "channel_scale: scales must be [" + std::to_string(c) + "], got " +
              shape_str(s.shape()));
  const auto xv = x.values();
  const auto sv = s.values();
  std::vector<double> out(static_cast<size_t>(c * plane));
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t p = 0; p < plane; ++p)
      out[ch * plane + p] = xv[ch * plane + p] * sv[ch];
  return detail::make_result(
      x.shape(), std::move(out), {x, s}, [c, plane](TensorNode& nd) {
        TensorNode& px = *nd.parents[0];
        TensorNode& ps = *nd.parents[1];
        if (px.requires_grad) {
          std::vector<double> dx(static_cast<size_t>(c * plane));
          for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t p = 0; p < plane; ++p)
              dx[ch * plane + p] = nd.grad[ch * plane + p] * ps.values[ch];
          detail::accumulate(px, dx.data(), c * plane);
        }
        if (ps.requires_grad) {
          std::vector<double> ds(static_cast<size_t>(c), 0.0);
          for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t p = 0; p < plane; ++p)
              ds[ch] += nd.grad[ch * plane + p] * px.values[ch * plane + p];
          detail::accumulate(ps, ds.data(), c);
        }
      });
}

}  // namespace himosa
