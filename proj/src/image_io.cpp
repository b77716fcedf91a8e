#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "cse/image.hpp"

namespace cse {

void ImageRGB::validate() const {
  if (width < kMinImageSide || height < kMinImageSide) {
    throw InputError("image must be at least 8x8, got " + std::to_string(width) + "x" + std::to_string(height));
  }
  if (pixels.size() != width * height * 3) throw InputError("image pixel buffer has wrong length");
  for (float v : pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) throw InputError("image value outside [0, 1]");
  }
}

float quantize8(float v) { return std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f; }

void quantize8(ImageRGB& image) {
  for (auto& v : image.pixels) v = quantize8(v);
}

namespace {

std::string lower_ext(const std::filesystem::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

std::uint8_t to_byte(float v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

// Whitespace/comment skipping for the PPM header.
bool next_header_token(std::istream& in, long& value) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  return static_cast<bool>(in >> value);
}

ImageRGB load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P6") throw InputError(path.string() + ": only binary PPM (P6) is supported");
  long w = 0, h = 0, maxval = 0;
  if (!next_header_token(in, w) || !next_header_token(in, h) || !next_header_token(in, maxval)) {
    throw InputError(path.string() + ": malformed PPM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw InputError(path.string() + ": invalid PPM header values");
  in.get();  // single whitespace before raster
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raster(static_cast<std::size_t>(w * h) * 3 * bytes_per);
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (in.gcount() != static_cast<std::streamsize>(raster.size())) throw InputError(path.string() + ": truncated PPM raster");
  ImageRGB img(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const unsigned v = bytes_per == 1 ? raster[i] : (raster[2 * i] << 8u) | raster[2 * i + 1];
    img.pixels[i] = static_cast<float>(v) / static_cast<float>(maxval);
  }
  return img;
}

void save_ppm(const ImageRGB& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<std::uint8_t> raster(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), raster.begin(), to_byte);
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!out) throw InputError("short write to " + path.string());
}

ImageRGB load_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw InputError(path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> raster(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, raster.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw InputError(path.string() + ": " + msg);
  }
  ImageRGB img(png.width, png.height);
  for (std::size_t i = 0; i < raster.size(); ++i) img.pixels[i] = static_cast<float>(raster[i]) / 255.0f;
  return img;
}

void write_png_simple(const std::filesystem::path& path, std::uint32_t format, std::size_t w, std::size_t h,
                      const void* data) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(w);
  png.height = static_cast<png_uint_32>(h);
  png.format = format;
  if (!png_image_write_to_file(&png, path.c_str(), 0, data, 0, nullptr)) {
    throw InputError("cannot write " + path.string() + ": " + png.message);
  }
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

}  // namespace

ImageRGB load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("no such image: " + path.string());
  ImageRGB img = lower_ext(path) == ".ppm" ? load_ppm(path) : load_png(path);
  img.validate();
  return img;
}

void save_image(const ImageRGB& image, const std::filesystem::path& path) {
  image.validate();
  if (lower_ext(path) == ".ppm") {
    save_ppm(image, path);
    return;
  }
  std::vector<std::uint8_t> raster(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), raster.begin(), to_byte);
  write_png_simple(path, PNG_FORMAT_RGB, image.width, image.height, raster.data());
}

void save_png_gray8(const std::vector<std::uint8_t>& values, std::size_t width, std::size_t height,
                    const std::filesystem::path& path) {
  if (values.size() != width * height) throw InputError("gray8 buffer has wrong length");
  write_png_simple(path, PNG_FORMAT_GRAY, width, height, values.data());
}

// 16-bit grayscale goes through the classic API: the simplified API treats
// 16-bit data as linear light and would gamma-convert label values.
void save_png_gray16(const std::vector<std::uint16_t>& values, std::size_t width, std::size_t height,
                     const std::filesystem::path& path) {
  if (values.size() != width * height) throw InputError("gray16 buffer has wrong length");
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw InputError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw InputError("libpng allocation failed");
  }
  std::vector<std::uint8_t> row(width * 2);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InputError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::uint16_t v = values[y * width + x];
      row[2 * x] = static_cast<std::uint8_t>(v >> 8);
      row[2 * x + 1] = static_cast<std::uint8_t>(v & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::uint16_t> load_png_gray16(const std::filesystem::path& path, std::size_t& width,
                                           std::size_t& height) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw InputError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("libpng allocation failed");
  }
  std::vector<std::uint16_t> values;
  std::vector<std::uint8_t> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError(path.string() + ": invalid PNG");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY || png_get_bit_depth(png, info) != 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError(path.string() + ": expected a 16-bit grayscale PNG");
  }
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  values.resize(width * height);
  row.resize(width * 2);
  for (std::size_t y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (std::size_t x = 0; x < width; ++x) {
      values[y * width + x] = static_cast<std::uint16_t>((row[2 * x] << 8) | row[2 * x + 1]);
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return values;
}

ImageRGB resize_bilinear(const ImageRGB& image, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw InputError("resize to empty image");
  if (width == image.width && height == image.height) return image;
  ImageRGB out(width, height);
  const float sx = static_cast<float>(image.width) / static_cast<float>(width);
  const float sy = static_cast<float>(image.height) / static_cast<float>(height);
  for (std::size_t y = 0; y < height; ++y) {
    const float fy = std::max(0.0f, (static_cast<float>(y) + 0.5f) * sy - 0.5f);
    const auto y0 = std::min(static_cast<std::size_t>(fy), image.height - 1);
    const auto y1 = std::min(y0 + 1, image.height - 1);
    const float wy = fy - static_cast<float>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const float fx = std::max(0.0f, (static_cast<float>(x) + 0.5f) * sx - 0.5f);
      const auto x0 = std::min(static_cast<std::size_t>(fx), image.width - 1);
      const auto x1 = std::min(x0 + 1, image.width - 1);
      const float wx = fx - static_cast<float>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const float top = image.at(x0, y0, c) * (1 - wx) + image.at(x1, y0, c) * wx;
        const float bot = image.at(x0, y1, c) * (1 - wx) + image.at(x1, y1, c) * wx;
        out.at(x, y, c) = std::clamp(top * (1 - wy) + bot * wy, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

ImageRGB model_view(const ImageRGB& image, std::size_t side) { return resize_bilinear(image, side, side); }

Tensor to_tensor(const ImageRGB& image) {
  Tensor t({3, image.height, image.width});
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) t.at(c, y, x) = image.at(x, y, c);
  return t;
}

ImageRGB from_tensor(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3) throw InputError("from_tensor expects a (3, H, W) tensor");
  ImageRGB img(t.dim(2), t.dim(1));
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = t.at(c, y, x);
  return img;
}

}  // namespace cse
