#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cse/tensor.hpp"

namespace cse {

inline constexpr std::size_t kMinImageSide = 8;

/// Interleaved RGB image with channel values in [0, 1].
struct ImageRGB {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;  // (y * width + x) * 3 + channel

  ImageRGB() = default;
  ImageRGB(std::size_t w, std::size_t h, float fill = 0.0f) : width(w), height(h), pixels(w * h * 3, fill) {}

  std::size_t pixel_count() const { return width * height; }
  float& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  float at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }

  /// Throws InputError unless dimensions >= 8x8 and every value lies in [0, 1].
  void validate() const;

  friend bool operator==(const ImageRGB&, const ImageRGB&) = default;
};

/// Decodes PNG (any bit depth/colour type) or binary PPM (P6), scaled to [0, 1].
ImageRGB load_image(const std::filesystem::path& path);

/// Lossless 8-bit RGB PNG, or P6 PPM when the extension is .ppm.
void save_image(const ImageRGB& image, const std::filesystem::path& path);

/// Bilinear resample (half-pixel centres, edge clamped).
ImageRGB resize_bilinear(const ImageRGB& image, std::size_t width, std::size_t height);

/// Resamples to the classifier's square input when the size differs.
ImageRGB model_view(const ImageRGB& image, std::size_t side = 64);

/// (3, H, W) tensor view for the classifier.
Tensor to_tensor(const ImageRGB& image);
ImageRGB from_tensor(const Tensor& t);

/// Rounds every value onto the 8-bit grid k/255.
float quantize8(float v);
void quantize8(ImageRGB& image);

// Grayscale helpers shared by label-map and heatmap dumps.
void save_png_gray16(const std::vector<std::uint16_t>& values, std::size_t width, std::size_t height,
                     const std::filesystem::path& path);
std::vector<std::uint16_t> load_png_gray16(const std::filesystem::path& path, std::size_t& width,
                                           std::size_t& height);
void save_png_gray8(const std::vector<std::uint8_t>& values, std::size_t width, std::size_t height,
                    const std::filesystem::path& path);

}  // namespace cse
