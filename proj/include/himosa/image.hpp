#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "himosa/tensor.hpp"

namespace himosa {

// 8-bit sRGB, row-major, RGB interleaved.
struct ImageBuffer {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> data;  // 3 * width * height bytes

  uint8_t at(int64_t y, int64_t x, int64_t c) const {
    return data[static_cast<size_t>((y * width + x) * 3 + c)];
  }
  uint8_t& at(int64_t y, int64_t x, int64_t c) {
    return data[static_cast<size_t>((y * width + x) * 3 + c)];
  }
};

ImageBuffer make_image(int64_t width, int64_t height, uint8_t fill = 0);

// PNG or binary PPM (P6), chosen by file signature on load and extension on
// save (.ppm → P6, anything else → PNG). Round-trips are bit-exact. Errors
// name the path.
ImageBuffer load_image(const std::string& path);
void save_image(const ImageBuffer& buf, const std::string& path);

// [3×H×W] float tensor in [0,1] ↔ bytes; bytes round half away from zero and
// clamp to [0,255].
Tensor image_to_tensor(const ImageBuffer& buf);
ImageBuffer tensor_to_image(const Tensor& t);

struct ManifestRecord {
  std::string hr_path;
  std::string lr_path;  // empty → degrade the HR image on the fly
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  int64_t scale = 0;      // filled by the caller from the model config
  std::string split;      // free-form tag
};

// One `hr_path<TAB>lr_path?` record per line, `#` comments. Relative paths
// resolve against the manifest's directory; every referenced file must exist.
DatasetManifest load_manifest(const std::string& path);

}  // namespace himosa
