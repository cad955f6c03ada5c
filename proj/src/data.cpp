#include "himosa/data.hpp"

#include <algorithm>
#include <cmath>

#include "himosa/rng.hpp"

namespace himosa {

namespace {

double catmull_rom(double t) {
  t = std::abs(t);
  if (t < 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
  if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
  return 0.0;
}

struct TapTable {
  int64_t taps = 0;                 // taps per output index
  std::vector<int64_t> src;         // [out × taps], clamped source indices
  std::vector<double> weight;       // [out × taps], normalized
};

// Destination index j samples around centre (j+0.5)·r − 0.5 with the kernel
// stretched by r, so downsampling low-passes before decimating.
TapTable build_taps(int64_t src_size, int64_t r) {
  const int64_t out = src_size / r;
  const double s = static_cast<double>(r);
  TapTable t;
  t.taps = 4 * r;
  t.src.resize(static_cast<size_t>(out * t.taps));
  t.weight.resize(static_cast<size_t>(out * t.taps));
  for (int64_t j = 0; j < out; ++j) {
    const double center = (static_cast<double>(j) + 0.5) * s - 0.5;
    const int64_t left =
        static_cast<int64_t>(std::floor(center - 2.0 * s)) + 1;
    double wsum = 0.0;
    for (int64_t i = 0; i < t.taps; ++i) {
      const int64_t x = left + i;
      const double w = catmull_rom((center - static_cast<double>(x)) / s);
      t.src[j * t.taps + i] = std::clamp<int64_t>(x, 0, src_size - 1);
      t.weight[j * t.taps + i] = w;
      wsum += w;
    }
    for (int64_t i = 0; i < t.taps; ++i) t.weight[j * t.taps + i] /= wsum;
  }
  return t;
}

}  // namespace

ImageBuffer bicubic_downsample(const ImageBuffer& buf, int64_t r) {
  if (r < 1) throw ContractError("bicubic_downsample: factor must be >= 1");
  if (buf.width % r != 0 || buf.height % r != 0) {
    throw ContractError("bicubic_downsample: extents " +
                        std::to_string(buf.width) + "×" +
                        std::to_string(buf.height) + " not divisible by " +
                        std::to_string(r));
  }
  const int64_t w = buf.width, h = buf.height;
  const int64_t ow = w / r, oh = h / r;
  const TapTable tx = build_taps(w, r);
  const TapTable ty = build_taps(h, r);

  // Horizontal pass into a float buffer, then vertical.
  std::vector<double> mid(static_cast<size_t>(h * ow * 3));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t j = 0; j < ow; ++j) {
      for (int64_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int64_t i = 0; i < tx.taps; ++i) {
          acc += tx.weight[j * tx.taps + i] *
                 (static_cast<double>(
                      buf.at(y, tx.src[j * tx.taps + i], c)) /
                  255.0);
        }
        mid[(y * ow + j) * 3 + c] = acc;
      }
    }
  }
  ImageBuffer out = make_image(ow, oh);
  for (int64_t i = 0; i < oh; ++i) {
    for (int64_t j = 0; j < ow; ++j) {
      for (int64_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int64_t t = 0; t < ty.taps; ++t) {
          acc += ty.weight[i * ty.taps + t] *
                 mid[(ty.src[i * ty.taps + t] * ow + j) * 3 + c];
        }
        const long long q = std::llround(acc * 255.0);
        out.at(i, j, c) = static_cast<uint8_t>(std::clamp(q, 0LL, 255LL));
      }
    }
  }
  return out;
}

SampledPatch sample_patch(const ImageBuffer& hr, const ImageBuffer& lr,
                          int64_t patch, int64_t r, std::mt19937_64& rng) {
  if (patch < 1) throw ContractError("sample_patch: patch must be >= 1");
  if (lr.width < patch || lr.height < patch) {
    throw ContractError("sample_patch: LR image " + std::to_string(lr.width) +
                        "×" + std::to_string(lr.height) +
                        " smaller than patch " + std::to_string(patch));
  }
  if (hr.width != r * lr.width || hr.height != r * lr.height) {
    throw ContractError("sample_patch: HR extents are not exactly " +
                        std::to_string(r) + "× the LR extents");
  }
  SampledPatch p;
  p.lr_y0 = static_cast<int64_t>(rng_below(rng, lr.height - patch + 1));
  p.lr_x0 = static_cast<int64_t>(rng_below(rng, lr.width - patch + 1));
  p.lr = make_image(patch, patch);
  for (int64_t y = 0; y < patch; ++y) {
    for (int64_t x = 0; x < patch; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        p.lr.at(y, x, c) = lr.at(p.lr_y0 + y, p.lr_x0 + x, c);
      }
    }
  }
  const int64_t hp = r * patch, hx = r * p.lr_x0, hy = r * p.lr_y0;
  p.hr = make_image(hp, hp);
  for (int64_t y = 0; y < hp; ++y) {
    for (int64_t x = 0; x < hp; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        p.hr.at(y, x, c) = hr.at(hy + y, hx + x, c);
      }
    }
  }
  return p;
}

ImageBuffer apply_dihedral(const ImageBuffer& buf, int64_t rot, bool flip) {
  if (buf.width != buf.height) {
    throw ContractError("apply_dihedral: image must be square, got " +
                        std::to_string(buf.width) + "×" +
                        std::to_string(buf.height));
  }
  const int64_t n = buf.width;
  ImageBuffer cur = buf;
  if (flip) {
    ImageBuffer next = make_image(n, n);
    for (int64_t y = 0; y < n; ++y) {
      for (int64_t x = 0; x < n; ++x) {
        for (int64_t c = 0; c < 3; ++c) {
          next.at(y, x, c) = cur.at(y, n - 1 - x, c);
        }
      }
    }
    cur = std::move(next);
  }
  rot = ((rot % 4) + 4) % 4;
  for (int64_t q = 0; q < rot; ++q) {
    ImageBuffer next = make_image(n, n);
    // One clockwise quarter turn.
    for (int64_t y = 0; y < n; ++y) {
      for (int64_t x = 0; x < n; ++x) {
        for (int64_t c = 0; c < 3; ++c) {
          next.at(y, x, c) = cur.at(n - 1 - x, y, c);
        }
      }
    }
    cur = std::move(next);
  }
  return cur;
}

SampledPatch augment(SampledPatch pair, std::mt19937_64& rng) {
  const uint64_t element = rng_below(rng, 8);
  const int64_t rot = static_cast<int64_t>(element & 3);
  const bool flip = (element >> 2) != 0;
  pair.lr = apply_dihedral(pair.lr, rot, flip);
  pair.hr = apply_dihedral(pair.hr, rot, flip);
  return pair;
}

std::vector<LoadedPair> load_dataset(const DatasetManifest& manifest,
                                     int64_t scale) {
  std::vector<LoadedPair> out;
  out.reserve(manifest.records.size());
  for (const ManifestRecord& rec : manifest.records) {
    LoadedPair pair;
    pair.hr = load_image(rec.hr_path);
    if (!rec.lr_path.empty()) {
      pair.lr = load_image(rec.lr_path);
      if (pair.hr.width != scale * pair.lr.width ||
          pair.hr.height != scale * pair.lr.height) {
        throw IoError("HR/LR extents disagree with scale " +
                      std::to_string(scale) + ": " + rec.hr_path);
      }
    } else {
      const int64_t cw = pair.hr.width / scale * scale;
      const int64_t ch = pair.hr.height / scale * scale;
      if (cw < scale || ch < scale) {
        throw IoError("image too small to degrade at scale " +
                      std::to_string(scale) + ": " + rec.hr_path);
      }
      if (cw != pair.hr.width || ch != pair.hr.height) {
        ImageBuffer cropped = make_image(cw, ch);
        for (int64_t y = 0; y < ch; ++y) {
          for (int64_t x = 0; x < cw; ++x) {
            for (int64_t c = 0; c < 3; ++c) {
              cropped.at(y, x, c) = pair.hr.at(y, x, c);
            }
          }
        }
        pair.hr = std::move(cropped);
      }
      pair.lr = bicubic_downsample(pair.hr, scale);
    }
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace himosa
