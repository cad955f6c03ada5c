#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "himosa/image.hpp"

namespace himosa {

// Separable Catmull-Rom (a = −0.5) downsample by an integer factor, kernel
// stretched by the factor (anti-aliased), per-pixel weight normalization,
// symmetric edge clamp. Computed on [0,1] floats, rounded half away from
// zero back to bytes. Pure: byte-identical across runs and thread counts.
ImageBuffer bicubic_downsample(const ImageBuffer& buf, int64_t r);

// Aligned random crop: the HR window sits at exactly r× the LR window
// origin. Returns the LR origin for coordinate bookkeeping.
struct SampledPatch {
  ImageBuffer lr;
  ImageBuffer hr;
  int64_t lr_x0 = 0;
  int64_t lr_y0 = 0;
};
SampledPatch sample_patch(const ImageBuffer& hr, const ImageBuffer& lr,
                          int64_t patch, int64_t r, std::mt19937_64& rng);

// One of the eight dihedral elements: optional horizontal flip first, then
// `rot` clockwise quarter turns. Square images only.
ImageBuffer apply_dihedral(const ImageBuffer& buf, int64_t rot, bool flip);

// Draws a single dihedral element and applies it to both patch members.
SampledPatch augment(SampledPatch pair, std::mt19937_64& rng);

// All pairs of a manifest decoded into memory. Records without an LR path
// get the HR image cropped to a multiple of the scale and degraded by
// bicubic_downsample. HR/LR extent mismatches are I/O errors.
struct LoadedPair {
  ImageBuffer hr;
  ImageBuffer lr;
};
std::vector<LoadedPair> load_dataset(const DatasetManifest& manifest,
                                     int64_t scale);

}  // namespace himosa
