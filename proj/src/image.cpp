#include "himosa/image.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

namespace himosa {

ImageBuffer make_image(int64_t width, int64_t height, uint8_t fill) {
  if (width < 1 || height < 1) {
    throw ContractError("make_image: extents must be positive");
  }
  ImageBuffer buf;
  buf.width = width;
  buf.height = height;
  buf.data.assign(static_cast<size_t>(3 * width * height), fill);
  return buf;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors by longjmp, so everything between setjmp and the last
// png_* call lives in these helpers, which keep no destructible locals and
// only write through caller-owned pointers.
bool png_read_guarded(png_structp png, png_infop info, std::FILE* f,
                      ImageBuffer* out, std::vector<png_bytep>* rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  if (png_get_channels(png, info) != 3 || png_get_bit_depth(png, info) != 8) {
    return false;
  }
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  if (w == 0 || h == 0) return false;
  out->width = w;
  out->height = h;
  out->data.assign(static_cast<size_t>(3) * w * h, 0);
  rows->resize(h);
  for (png_uint_32 y = 0; y < h; ++y) {
    (*rows)[y] = out->data.data() + static_cast<size_t>(y) * 3 * w;
  }
  png_read_image(png, rows->data());
  png_read_end(png, nullptr);
  return true;
}

ImageBuffer load_png(const std::string& path, std::FILE* f) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("PNG reader allocation failed: " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("PNG reader allocation failed: " + path);
  }
  ImageBuffer buf;
  std::vector<png_bytep> rows;
  const bool ok = png_read_guarded(png, info, f, &buf, &rows);
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) throw IoError("PNG decode failed: " + path);
  return buf;
}

bool png_write_guarded(png_structp png, png_infop info, std::FILE* f,
                       const ImageBuffer* buf) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(buf->width),
               static_cast<png_uint_32>(buf->height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t y = 0; y < buf->height; ++y) {
    png_write_row(png,
                  const_cast<png_bytep>(buf->data.data() +
                                        static_cast<size_t>(y) * 3 *
                                            buf->width));
  }
  png_write_end(png, nullptr);
  return true;
}

void save_png(const ImageBuffer& buf, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot write image: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  if (!png) throw IoError("PNG writer allocation failed: " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("PNG writer allocation failed: " + path);
  }
  const bool ok = png_write_guarded(png, info, f.get(), &buf);
  png_destroy_write_struct(&png, &info);
  if (!ok) throw IoError("PNG encode failed: " + path);
}

// PPM P6 header token reader: skips whitespace and `#` comments.
int64_t ppm_token(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) {
    throw IoError("malformed PPM header: " + path);
  }
  int64_t v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > (int64_t{1} << 30)) throw IoError("absurd PPM extent: " + path);
    c = in.get();
  }
  if (c != EOF && !std::isspace(c)) {
    throw IoError("malformed PPM header: " + path);
  }
  return v;
}

ImageBuffer load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '6') {
    throw IoError("unsupported PPM variant (want P6): " + path);
  }
  const int64_t w = ppm_token(in, path);
  const int64_t h = ppm_token(in, path);
  const int64_t maxval = ppm_token(in, path);
  if (maxval != 255) {
    throw IoError("unsupported PPM maxval " + std::to_string(maxval) + ": " +
                  path);
  }
  ImageBuffer buf = make_image(w, h);
  in.read(reinterpret_cast<char*>(buf.data.data()),
          static_cast<std::streamsize>(buf.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.data.size())) {
    throw IoError("truncated PPM payload: " + path);
  }
  return buf;
}

void save_ppm(const ImageBuffer& buf, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image: " + path);
  out << "P6\n" << buf.width << ' ' << buf.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(buf.data.data()),
            static_cast<std::streamsize>(buf.data.size()));
  if (!out) throw IoError("failed writing image: " + path);
}

}  // namespace

ImageBuffer load_image(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open image: " + path);
  unsigned char sig[8] = {0};
  const size_t got = std::fread(sig, 1, sizeof(sig), f.get());
  if (got >= 2 && sig[0] == 'P' && sig[1] == '6') {
    f.reset();
    return load_ppm(path);
  }
  if (got == 8 && png_sig_cmp(sig, 0, 8) == 0) {
    std::rewind(f.get());
    return load_png(path, f.get());
  }
  throw IoError("unsupported image format (want PNG or P6 PPM): " + path);
}

void save_image(const ImageBuffer& buf, const std::string& path) {
  if (buf.data.size() != static_cast<size_t>(3 * buf.width * buf.height)) {
    throw ContractError("save_image: buffer size inconsistent with extents");
  }
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".ppm") {
    save_ppm(buf, path);
  } else {
    save_png(buf, path);
  }
}

Tensor image_to_tensor(const ImageBuffer& buf) {
  const int64_t h = buf.height, w = buf.width;
  std::vector<double> v(static_cast<size_t>(3 * h * w));
  for (int64_t c = 0; c < 3; ++c) {
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        v[(c * h + y) * w + x] = static_cast<double>(buf.at(y, x, c)) / 255.0;
      }
    }
  }
  return Tensor::from_values({3, h, w}, std::move(v));
}

ImageBuffer tensor_to_image(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3) {
    throw ShapeError("tensor_to_image: want [3×H×W], got " +
                     shape_str(t.shape()));
  }
  const int64_t h = t.dim(1), w = t.dim(2);
  ImageBuffer buf = make_image(w, h);
  const auto v = t.values();
  for (int64_t c = 0; c < 3; ++c) {
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        const long long q = std::llround(v[(c * h + y) * w + x] * 255.0);
        buf.at(y, x, c) = static_cast<uint8_t>(std::clamp(q, 0LL, 255LL));
      }
    }
  }
  return buf;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    if (fp.is_relative()) fp = base / fp;
    if (!std::filesystem::exists(fp)) {
      throw IoError("manifest references missing file: " + fp.string());
    }
    return fp.string();
  };
  DatasetManifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    ManifestRecord rec;
    const size_t tab = line.find('\t');
    rec.hr_path =
        resolve(tab == std::string::npos ? line : line.substr(0, tab));
    if (tab != std::string::npos && tab + 1 < line.size()) {
      rec.lr_path = resolve(line.substr(tab + 1));
    }
    m.records.push_back(std::move(rec));
  }
  if (m.records.empty()) throw IoError("empty manifest: " + path);
  return m;
}

}  // namespace himosa
