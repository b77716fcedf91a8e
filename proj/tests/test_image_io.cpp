#include <cmath>
#include <fstream>
#include <random>

#include "cse/counterfactual.hpp"
#include "cse/obfuscation.hpp"
#include "cse/segmentation.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cse;
namespace fs = std::filesystem;

namespace {

ImageRGB random_8bit(std::mt19937_64& rng, std::size_t w, std::size_t h) {
  ImageRGB img(w, h);
  for (auto& v : img.pixels) v = static_cast<float>(rng() % 256) / 255.0f;
  return img;
}

}  // namespace

TEST_CASE("uniform 128 PNG loads as 128/255") {
  const auto dir = testing_support::temp_dir("io_gray");
  std::vector<std::uint8_t> gray(64 * 64, 128);
  save_png_gray8(gray, 64, 64, dir / "g.png");
  const ImageRGB img = load_image(dir / "g.png");
  CHECK(img.width == 64);
  CHECK(img.height == 64);
  for (float v : img.pixels) CHECK(v == doctest::Approx(0.50196).epsilon(1e-5));
}

TEST_CASE("PPM P6 maxval 255 round-trips bit-exactly") {
  std::mt19937_64 rng(1);
  const auto dir = testing_support::temp_dir("io_ppm");
  const ImageRGB img = random_8bit(rng, 23, 17);
  save_image(img, dir / "a.ppm");
  CHECK(load_image(dir / "a.ppm") == img);
}

TEST_CASE("16-bit PPM is scaled to [0, 1]") {
  const auto dir = testing_support::temp_dir("io_ppm16");
  {
    std::ofstream out(dir / "b.ppm", std::ios::binary);
    out << "P6\n# comment\n8 8\n65535\n";
    for (int i = 0; i < 64 * 3; ++i) out.put(static_cast<char>(0x80)).put(0);
  }
  const ImageRGB img = load_image(dir / "b.ppm");
  for (float v : img.pixels) CHECK(v == doctest::Approx(32768.0 / 65535.0).epsilon(1e-6));
}

TEST_CASE("PNG round trip stays within one quantisation step") {
  std::mt19937_64 rng(2);
  const auto dir = testing_support::temp_dir("io_png");
  for (int trial = 0; trial < 10; ++trial) {
    const ImageRGB img = testing_support::random_image(rng, 8 + rng() % 40, 8 + rng() % 40);
    save_image(img, dir / "x.png");
    const ImageRGB back = load_image(dir / "x.png");
    REQUIRE(back.width == img.width);
    REQUIRE(back.height == img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 1.0f / 255.0f);
    // Already-quantised images are exact.
    save_image(back, dir / "y.png");
    CHECK(load_image(dir / "y.png") == back);
  }
}

TEST_CASE("unreadable and invalid files give descriptive errors") {
  const auto dir = testing_support::temp_dir("io_bad");
  CHECK_THROWS_AS(load_image(dir / "missing.png"), InputError);
  std::ofstream(dir / "junk.png") << "not an image";
  CHECK_THROWS_AS(load_image(dir / "junk.png"), InputError);
  std::ofstream(dir / "short.ppm", std::ios::binary) << "P6\n8 8\n255\n\x01\x02";
  CHECK_THROWS_AS(load_image(dir / "short.ppm"), InputError);
  std::ofstream(dir / "ascii.ppm") << "P3\n8 8\n255\n";
  CHECK_THROWS_AS(load_image(dir / "ascii.ppm"), InputError);
  std::ofstream(dir / "pic.jpg") << "x";
  CHECK_THROWS_AS(load_image(dir / "pic.jpg"), InputError);
  std::vector<std::uint8_t> tiny(4 * 4, 0);
  save_png_gray8(tiny, 4, 4, dir / "tiny.png");
  CHECK_THROWS_WITH_AS(load_image(dir / "tiny.png"), doctest::Contains("8x8"), InputError);
  CHECK_THROWS_AS(save_image(ImageRGB(16, 16), dir / "no_such_dir" / "x.png"), InputError);
}

TEST_CASE("image validation") {
  ImageRGB img(8, 8, 0.5f);
  CHECK_NOTHROW(img.validate());
  img.pixels[5] = 1.5f;
  CHECK_THROWS_AS(img.validate(), InputError);
  CHECK_THROWS_AS(ImageRGB(7, 9).validate(), InputError);
}

TEST_CASE("model view and tensor conversion") {
  std::mt19937_64 rng(3);
  const ImageRGB big = testing_support::random_image(rng, 128, 96);
  const ImageRGB view = model_view(big, 64);
  CHECK(view.width == 64);
  CHECK(view.height == 64);
  const ImageRGB same = testing_support::random_image(rng, 64, 64);
  CHECK(model_view(same, 64) == same);

  const Tensor t = to_tensor(same);
  CHECK(t.shape() == Shape{3, 64, 64});
  CHECK(t.at(2, 5, 7) == same.at(7, 5, 2));
  CHECK(from_tensor(t) == same);

  // Bilinear resampling of a constant image is constant.
  const ImageRGB flat = testing_support::flat_image(30, 50, 0.2f, 0.4f, 0.6f);
  const ImageRGB r = resize_bilinear(flat, 64, 64);
  for (std::size_t p = 0; p < 64 * 64; ++p) CHECK(r.pixels[p * 3 + 1] == doctest::Approx(0.4f));
}

TEST_CASE("128x128 input: mask projection keeps original resolution and covers the region") {
  std::mt19937_64 rng(4);
  const ImageRGB original = random_8bit(rng, 128, 128);
  const ImageRGB view = model_view(original, 64);
  const LabelMap labels = grid_segment(view, 3, 3);

  CounterfactualResult result;
  result.success = true;
  result.masked_regions = {4};
  result.depth = 1;
  const MaskOp op = FillConstant{{0.0f, 0.0f, 0.0f}};
  const ImageRGB rendered = render_obfuscated_projected(original, labels, result, op);
  CHECK(rendered.width == 128);
  CHECK(rendered.height == 128);

  const auto model_mask = labels.mask_of(std::vector<int>{4});
  const auto big_mask = project_mask(model_mask, 64, 64, 128, 128, 1);
  for (std::size_t y = 0; y < 128; ++y)
    for (std::size_t x = 0; x < 128; ++x) {
      const bool in_model = model_mask[(y / 2) * 64 + x / 2];
      if (in_model) CHECK(big_mask[y * 128 + x]);  // nothing escapes
      const bool changed = rendered.at(x, y, 0) != original.at(x, y, 0) ||
                           rendered.at(x, y, 1) != original.at(x, y, 1) || rendered.at(x, y, 2) != original.at(x, y, 2);
      if (!big_mask[y * 128 + x]) CHECK_FALSE(changed);
      if (big_mask[y * 128 + x]) CHECK(rendered.at(x, y, 0) == 0.0f);
    }

  const auto dir = testing_support::temp_dir("io_project");
  save_image(rendered, dir / "r.png");
  CHECK(load_image(dir / "r.png") == rendered);
}

TEST_CASE("mask projection property: superset on random masks and sizes") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t w = 8 + rng() % 30, h = 8 + rng() % 30;
    const std::size_t ow = 8 + rng() % 90, oh = 8 + rng() % 90;
    std::vector<std::uint8_t> mask(w * h);
    for (auto& m : mask) m = rng() % 4 == 0;
    const auto big = project_mask(mask, w, h, ow, oh, 1);
    REQUIRE(big.size() == ow * oh);
    // Every original pixel whose footprint overlaps a masked model pixel is covered.
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        const double x0 = static_cast<double>(x) * w / ow, x1 = static_cast<double>(x + 1) * w / ow;
        const double y0 = static_cast<double>(y) * h / oh, y1 = static_cast<double>(y + 1) * h / oh;
        bool overlaps = false;
        for (auto my = static_cast<std::size_t>(y0); my < h && static_cast<double>(my) < y1; ++my)
          for (auto mx = static_cast<std::size_t>(x0); mx < w && static_cast<double>(mx) < x1; ++mx)
            overlaps |= mask[my * w + mx] != 0;
        if (overlaps) CHECK(big[y * ow + x]);
      }
  }
}

TEST_CASE("16-bit label PNG round trip") {
  const auto dir = testing_support::temp_dir("io_png16");
  std::vector<std::uint16_t> v(37 * 19);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::uint16_t>(i * 97 % 65536);
  save_png_gray16(v, 37, 19, dir / "l.png");
  std::size_t w = 0, h = 0;
  CHECK(load_png_gray16(dir / "l.png", w, h) == v);
  CHECK(w == 37);
  CHECK(h == 19);
}
