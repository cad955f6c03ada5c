#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "himosa/data.hpp"
#include "himosa/image.hpp"
#include "himosa/oracle.hpp"
#include "himosa/rng.hpp"

using namespace himosa;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "himosa_data_tests";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

ImageBuffer random_image(int64_t w, int64_t h, uint64_t seed) {
  ImageBuffer buf = make_image(w, h);
  std::mt19937_64 g(seed);
  for (uint8_t& b : buf.data) b = static_cast<uint8_t>(rng_below(g, 256));
  return buf;
}

bool same_pixels(const ImageBuffer& a, const ImageBuffer& b) {
  return a.width == b.width && a.height == b.height && a.data == b.data;
}

std::vector<uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                              std::istreambuf_iterator<char>());
}

}  // namespace

// ---- image I/O ----

TEST_CASE("1x1 white PPM round-trips bit-exactly") {
  ImageBuffer px = make_image(1, 1, 255);
  fs::path p = temp_dir() / "white.ppm";
  save_image(px, p.string());
  ImageBuffer back = load_image(p.string());
  CHECK(same_pixels(px, back));
  // Second save produces the identical file.
  fs::path p2 = temp_dir() / "white2.ppm";
  save_image(back, p2.string());
  CHECK(slurp(p) == slurp(p2));
}

TEST_CASE("externally produced 2x2 PNG decodes to the exact bytes") {
  ImageBuffer img =
      load_image(std::string(HIMOSA_TEST_DIR) + "/fixtures/rgb2x2.png");
  REQUIRE(img.width == 2);
  REQUIRE(img.height == 2);
  const uint8_t want[12] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 128, 64, 32};
  for (int i = 0; i < 12; ++i) CHECK(img.data[i] == want[i]);
}

TEST_CASE("PNG save/load round-trips pixels exactly") {
  ImageBuffer img = random_image(13, 7, 5);
  fs::path p = temp_dir() / "roundtrip.png";
  save_image(img, p.string());
  CHECK(same_pixels(img, load_image(p.string())));
}

TEST_CASE("missing and malformed files raise I/O errors naming the path") {
  CHECK_THROWS_WITH_AS(load_image("/nonexistent/img.png"),
                       doctest::Contains("/nonexistent/img.png"), IoError);
  fs::path bad = temp_dir() / "trunc.ppm";
  std::ofstream(bad, std::ios::binary) << "P6\n4 4\n255\nxx";
  CHECK_THROWS_AS(load_image(bad.string()), IoError);
  fs::path garbage = temp_dir() / "garbage.bin";
  std::ofstream(garbage, std::ios::binary) << "not an image";
  CHECK_THROWS_AS(load_image(garbage.string()), IoError);
}

TEST_CASE("tensor conversion round-trips bytes and clamps out-of-range") {
  ImageBuffer img = random_image(6, 4, 9);
  Tensor t = image_to_tensor(img);
  CHECK(t.shape() == Shape{3, 4, 6});
  CHECK(same_pixels(img, tensor_to_image(t)));

  Tensor wild = Tensor::from_values({3, 1, 1}, {-0.2, 0.5, 1.7});
  ImageBuffer b = tensor_to_image(wild);
  CHECK(b.at(0, 0, 0) == 0);
  CHECK(b.at(0, 0, 1) == 128);  // 127.5 rounds half away from zero
  CHECK(b.at(0, 0, 2) == 255);
}

// ---- bicubic degradation ----

TEST_CASE("constant images stay constant under downsampling") {
  for (uint8_t v : {0, 17, 128, 255}) {
    ImageBuffer img = make_image(12, 8, v);
    ImageBuffer out = bicubic_downsample(img, 4);
    CHECK(out.width == 3);
    CHECK(out.height == 2);
    for (uint8_t b : out.data) CHECK(b == v);
  }
}

TEST_CASE("factor 1 is the identity") {
  ImageBuffer img = random_image(9, 5, 13);
  CHECK(same_pixels(img, bicubic_downsample(img, 1)));
}

TEST_CASE("8x8 ramp at factor 2 matches the per-pixel oracle exactly") {
  ImageBuffer img = make_image(8, 8);
  for (int64_t y = 0; y < 8; ++y) {
    for (int64_t x = 0; x < 8; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        img.at(y, x, c) = static_cast<uint8_t>(8 * (8 * y + x) / 2 + 10 * c);
      }
    }
  }
  CHECK(same_pixels(bicubic_downsample(img, 2), naive_bicubic_oracle(img, 2)));
}

TEST_CASE("random images match the oracle exactly at several factors") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    ImageBuffer img = random_image(24, 12, mix_seed(seed, 0x1D));
    for (int64_t r : {2, 3, 4}) {
      CHECK(same_pixels(bicubic_downsample(img, r),
                        naive_bicubic_oracle(img, r)));
    }
  }
}

TEST_CASE("downsampling is a pure function") {
  ImageBuffer img = random_image(16, 16, 23);
  CHECK(same_pixels(bicubic_downsample(img, 4), bicubic_downsample(img, 4)));
}

TEST_CASE("indivisible extents are a contract error") {
  ImageBuffer img = make_image(9, 8);
  CHECK_THROWS_AS(bicubic_downsample(img, 2), ContractError);
}

// ---- patch sampling ----

TEST_CASE("full-image patch returns the whole pair") {
  ImageBuffer lr = random_image(6, 6, 31);
  ImageBuffer hr = random_image(12, 12, 32);
  std::mt19937_64 g(1);
  SampledPatch p = sample_patch(hr, lr, 6, 2, g);
  CHECK(same_pixels(p.lr, lr));
  CHECK(same_pixels(p.hr, hr));
  CHECK(p.lr_x0 == 0);
  CHECK(p.lr_y0 == 0);
}

TEST_CASE("HR crop sits at exactly scale times the LR origin") {
  ImageBuffer hr = random_image(24, 16, 37);
  ImageBuffer lr = bicubic_downsample(hr, 4);
  for (uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 g(seed);
    SampledPatch p = sample_patch(hr, lr, 3, 4, g);
    for (int64_t y = 0; y < 3; ++y) {
      for (int64_t x = 0; x < 3; ++x) {
        for (int64_t c = 0; c < 3; ++c) {
          CHECK(p.lr.at(y, x, c) == lr.at(p.lr_y0 + y, p.lr_x0 + x, c));
        }
      }
    }
    for (int64_t y = 0; y < 12; ++y) {
      for (int64_t x = 0; x < 12; ++x) {
        for (int64_t c = 0; c < 3; ++c) {
          CHECK(p.hr.at(y, x, c) ==
                hr.at(4 * p.lr_y0 + y, 4 * p.lr_x0 + x, c));
        }
      }
    }
  }
}

TEST_CASE("seeded sampling reproduces identical crops") {
  ImageBuffer hr = random_image(20, 20, 41);
  ImageBuffer lr = bicubic_downsample(hr, 2);
  std::mt19937_64 g1(7), g2(7);
  SampledPatch a = sample_patch(hr, lr, 4, 2, g1);
  SampledPatch b = sample_patch(hr, lr, 4, 2, g2);
  CHECK(a.lr_x0 == b.lr_x0);
  CHECK(a.lr_y0 == b.lr_y0);
  CHECK(same_pixels(a.lr, b.lr));
  CHECK(same_pixels(a.hr, b.hr));
}

TEST_CASE("patches larger than the LR image are a contract error") {
  ImageBuffer hr = random_image(8, 8, 43);
  ImageBuffer lr = bicubic_downsample(hr, 2);
  std::mt19937_64 g(1);
  CHECK_THROWS_AS(sample_patch(hr, lr, 5, 2, g), ContractError);
}

// ---- augmentation ----

TEST_CASE("identity element leaves the image unchanged") {
  ImageBuffer img = random_image(5, 5, 47);
  CHECK(same_pixels(img, apply_dihedral(img, 0, false)));
}

TEST_CASE("four quarter turns compose to the identity") {
  ImageBuffer img = random_image(6, 6, 53);
  ImageBuffer cur = img;
  for (int i = 0; i < 4; ++i) cur = apply_dihedral(cur, 1, false);
  CHECK(same_pixels(img, cur));
}

TEST_CASE("flipping twice is the identity") {
  ImageBuffer img = random_image(7, 7, 59);
  CHECK(same_pixels(img, apply_dihedral(apply_dihedral(img, 0, true), 0, true)));
}

TEST_CASE("one quarter turn moves a marked corner as expected") {
  ImageBuffer img = make_image(3, 3, 0);
  img.at(0, 0, 0) = 200;  // top-left marker
  ImageBuffer turned = apply_dihedral(img, 1, false);
  CHECK(turned.at(0, 2, 0) == 200);  // clockwise: top-left → top-right
}

TEST_CASE("augment applies the same dihedral element to both members") {
  ImageBuffer hr = random_image(8, 8, 61);
  ImageBuffer lr = bicubic_downsample(hr, 2);
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 16; ++trial) {
    std::mt19937_64 sample_g(trial);
    SampledPatch p = sample_patch(hr, lr, 4, 2, sample_g);
    SampledPatch q = augment(p, g);
    bool matched = false;
    for (int64_t rot = 0; rot < 4 && !matched; ++rot) {
      for (int flip = 0; flip < 2 && !matched; ++flip) {
        if (same_pixels(q.lr, apply_dihedral(p.lr, rot, flip != 0)) &&
            same_pixels(q.hr, apply_dihedral(p.hr, rot, flip != 0))) {
          matched = true;
        }
      }
    }
    CHECK(matched);
  }
}

TEST_CASE("non-square augmentation is a contract error") {
  ImageBuffer img = random_image(4, 6, 67);
  CHECK_THROWS_AS(apply_dihedral(img, 1, false), ContractError);
}

// ---- manifests and datasets ----

TEST_CASE("manifest loading resolves paths and degrades missing LR entries") {
  fs::path dir = temp_dir() / "ds";
  fs::create_directories(dir);
  ImageBuffer hr1 = random_image(16, 16, 71);
  ImageBuffer hr2 = random_image(18, 14, 73);  // crops to 16×12 at scale 4
  ImageBuffer lr1 = bicubic_downsample(hr1, 4);
  save_image(hr1, (dir / "a_hr.png").string());
  save_image(lr1, (dir / "a_lr.png").string());
  save_image(hr2, (dir / "b_hr.png").string());
  {
    std::ofstream out(dir / "train.tsv");
    out << "# comment line\n";
    out << "a_hr.png\ta_lr.png\n";
    out << "b_hr.png\n";
  }
  DatasetManifest m = load_manifest((dir / "train.tsv").string());
  REQUIRE(m.records.size() == 2);
  CHECK(m.records[0].lr_path != "");
  CHECK(m.records[1].lr_path == "");

  std::vector<LoadedPair> ds = load_dataset(m, 4);
  REQUIRE(ds.size() == 2);
  CHECK(same_pixels(ds[0].hr, hr1));
  CHECK(same_pixels(ds[0].lr, lr1));
  CHECK(ds[1].hr.width == 16);
  CHECK(ds[1].hr.height == 12);
  CHECK(ds[1].lr.width == 4);
  CHECK(ds[1].lr.height == 3);
}

TEST_CASE("manifests referencing missing files fail at load time") {
  fs::path dir = temp_dir() / "broken";
  fs::create_directories(dir);
  std::ofstream(dir / "m.tsv") << "missing.png\n";
  CHECK_THROWS_WITH_AS(load_manifest((dir / "m.tsv").string()),
                       doctest::Contains("missing.png"), IoError);
}

TEST_CASE("mismatched explicit LR extents fail at dataset load") {
  fs::path dir = temp_dir() / "mismatch";
  fs::create_directories(dir);
  save_image(random_image(16, 16, 79), (dir / "hr.png").string());
  save_image(random_image(5, 4, 83), (dir / "lr.png").string());
  std::ofstream(dir / "m.tsv") << "hr.png\tlr.png\n";
  DatasetManifest m = load_manifest((dir / "m.tsv").string());
  CHECK_THROWS_AS(load_dataset(m, 4), IoError);
}
