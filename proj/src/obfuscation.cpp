#include "cse/obfuscation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cse {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void check_fill(const std::array<float, 3>& rgb) {
  for (float v : rgb) {
    if (!(v >= 0.0f && v <= 1.0f)) throw InputError("fill values must lie in [0, 1]");
  }
}

// Separable Gaussian blur with mirrored borders, radius ceil(3 sigma).
ImageRGB gaussian_blur(const ImageRGB& image, double sigma) {
  const auto radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    ksum += k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
  }
  for (auto& v : k) v /= ksum;

  const long W = static_cast<long>(image.width), H = static_cast<long>(image.height);
  auto reflect = [](long i, long n) {
    if (n == 1) return 0L;
    const long period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
  };
  std::vector<double> tmp(image.pixels.size());
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (long i = -radius; i <= radius; ++i) {
          acc += k[static_cast<std::size_t>(i + radius)] *
                 image.at(static_cast<std::size_t>(reflect(x + i, W)), static_cast<std::size_t>(y), c);
        }
        tmp[static_cast<std::size_t>(y * W + x) * 3 + c] = acc;
      }
  ImageRGB out(image.width, image.height);
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (long i = -radius; i <= radius; ++i) {
          acc += k[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(reflect(y + i, H) * W + x) * 3 + c];
        }
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = static_cast<float>(acc);
      }
  return out;
}

// Every pixel takes the mean of its block (over the whole block, masked or not).
ImageRGB pixelate(const ImageRGB& image, std::size_t block) {
  ImageRGB out(image.width, image.height);
  for (std::size_t by = 0; by < image.height; by += block)
    for (std::size_t bx = 0; bx < image.width; bx += block) {
      const std::size_t ey = std::min(by + block, image.height), ex = std::min(bx + block, image.width);
      std::array<double, 3> acc{};
      for (std::size_t y = by; y < ey; ++y)
        for (std::size_t x = bx; x < ex; ++x)
          for (std::size_t c = 0; c < 3; ++c) acc[c] += image.at(x, y, c);
      const double n = static_cast<double>((ey - by) * (ex - bx));
      for (std::size_t y = by; y < ey; ++y)
        for (std::size_t x = bx; x < ex; ++x)
          for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = static_cast<float>(acc[c] / n);
    }
  return out;
}

}  // namespace

MaskOp::MaskOp(Kind kind) : kind_(std::move(kind)) {
  std::visit(overloaded{
                 [](const FillChannelMeans& f) { check_fill(f.means); },
                 [](const FillConstant& f) { check_fill(f.rgb); },
                 [](const GaussianBlur& b) {
                   if (!(b.sigma > 0.0)) throw InputError("blur sigma must be positive");
                 },
                 [](const Pixelate& p) {
                   if (p.block < 2) throw InputError("pixelate block must be >= 2");
                 },
             },
             kind_);
}

std::string MaskOp::name() const {
  return std::visit(overloaded{
                        [](const FillChannelMeans&) { return std::string("means"); },
                        [](const FillConstant& f) {
                          std::ostringstream s;
                          s << "constant:" << f.rgb[0] << ',' << f.rgb[1] << ',' << f.rgb[2];
                          return s.str();
                        },
                        [](const GaussianBlur& b) {
                          std::ostringstream s;
                          s << "blur:" << b.sigma;
                          return s.str();
                        },
                        [](const Pixelate& p) { return "pixelate:" + std::to_string(p.block); },
                    },
                    kind_);
}

bool MaskOp::is_fill() const {
  return std::holds_alternative<FillChannelMeans>(kind_) || std::holds_alternative<FillConstant>(kind_);
}

MaskOp parse_mask_op(const std::string& spec, const std::array<float, 3>& channel_means) {
  const auto colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  try {
    if (head == "means") return MaskOp(FillChannelMeans{channel_means});
    if (head == "black") return MaskOp(FillConstant{{0.0f, 0.0f, 0.0f}});
    if (head == "white") return MaskOp(FillConstant{{1.0f, 1.0f, 1.0f}});
    if (head == "constant") {
      std::array<float, 3> rgb{};
      std::istringstream in(arg);
      char comma = 0;
      if (!(in >> rgb[0] >> comma >> rgb[1] >> comma >> rgb[2])) throw InputError("bad constant fill: " + spec);
      return MaskOp(FillConstant{rgb});
    }
    if (head == "blur") return MaskOp(GaussianBlur{arg.empty() ? 4.0 : std::stod(arg)});
    if (head == "pixelate") return MaskOp(Pixelate{arg.empty() ? 8 : static_cast<std::size_t>(std::stoul(arg))});
  } catch (const std::logic_error&) {
    throw InputError("bad mask op argument: " + spec);
  }
  throw InputError("unknown mask op: " + spec);
}

ImageRGB apply_mask(const ImageRGB& image, std::span<const std::uint8_t> mask, const MaskOp& op) {
  if (mask.size() != image.pixel_count()) throw InputError("mask size does not match image");
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) return image;

  ImageRGB source = std::visit(overloaded{
                                   [&](const FillChannelMeans& f) {
                                     ImageRGB s(image.width, image.height);
                                     for (std::size_t p = 0; p < s.pixel_count(); ++p)
                                       for (std::size_t c = 0; c < 3; ++c) s.pixels[p * 3 + c] = f.means[c];
                                     return s;
                                   },
                                   [&](const FillConstant& f) {
                                     ImageRGB s(image.width, image.height);
                                     for (std::size_t p = 0; p < s.pixel_count(); ++p)
                                       for (std::size_t c = 0; c < 3; ++c) s.pixels[p * 3 + c] = f.rgb[c];
                                     return s;
                                   },
                                   [&](const GaussianBlur& b) { return gaussian_blur(image, b.sigma); },
                                   [&](const Pixelate& p) { return pixelate(image, p.block); },
                               },
                               op.kind());

  ImageRGB out = image;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    for (std::size_t c = 0; c < 3; ++c) out.pixels[p * 3 + c] = quantize8(source.pixels[p * 3 + c]);
  }
  return out;
}

ImageRGB apply_mask(const ImageRGB& image, const LabelMap& labels, std::span<const int> regions, const MaskOp& op) {
  if (labels.width != image.width || labels.height != image.height) {
    throw InputError("label map and image sizes differ");
  }
  const auto mask = labels.mask_of(regions);
  return apply_mask(image, mask, op);
}

std::vector<std::uint8_t> project_mask(std::span<const std::uint8_t> mask, std::size_t width, std::size_t height,
                                       std::size_t out_width, std::size_t out_height, std::size_t dilation) {
  if (mask.size() != width * height) throw InputError("mask size does not match dimensions");
  std::vector<std::uint8_t> out(out_width * out_height);
  // Nearest-neighbour sampling widened to every model pixel the output pixel's
  // footprint overlaps, so shrinking never drops a masked pixel either.
  for (std::size_t y = 0; y < out_height; ++y) {
    const std::size_t y0 = y * height / out_height;
    const std::size_t y1 = std::max(y0 + 1, ((y + 1) * height + out_height - 1) / out_height);
    for (std::size_t x = 0; x < out_width; ++x) {
      const std::size_t x0 = x * width / out_width;
      const std::size_t x1 = std::max(x0 + 1, ((x + 1) * width + out_width - 1) / out_width);
      bool hit = false;
      for (std::size_t sy = y0; sy < std::min(y1, height) && !hit; ++sy)
        for (std::size_t sx = x0; sx < std::min(x1, width) && !hit; ++sx) hit = mask[sy * width + sx] != 0;
      out[y * out_width + x] = hit ? 1 : 0;
    }
  }
  for (std::size_t step = 0; step < dilation; ++step) {
    std::vector<std::uint8_t> grown = out;
    for (std::size_t y = 0; y < out_height; ++y)
      for (std::size_t x = 0; x < out_width; ++x) {
        if (!out[y * out_width + x]) continue;
        if (x > 0) grown[y * out_width + x - 1] = 1;
        if (x + 1 < out_width) grown[y * out_width + x + 1] = 1;
        if (y > 0) grown[(y - 1) * out_width + x] = 1;
        if (y + 1 < out_height) grown[(y + 1) * out_width + x] = 1;
      }
    out = std::move(grown);
  }
  return out;
}

}  // namespace cse
