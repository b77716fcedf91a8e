#pragma once

#include <array>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cse/image.hpp"
#include "cse/segmentation.hpp"

namespace cse {

struct FillChannelMeans {
  std::array<float, 3> means{0.5f, 0.5f, 0.5f};
};
struct FillConstant {
  std::array<float, 3> rgb{0.0f, 0.0f, 0.0f};
};
struct GaussianBlur {
  double sigma = 4.0;
};
struct Pixelate {
  std::size_t block = 8;
};

/// Obfuscation operator applied to a region set.
class MaskOp {
 public:
  using Kind = std::variant<FillChannelMeans, FillConstant, GaussianBlur, Pixelate>;

  MaskOp() : MaskOp(FillChannelMeans{}) {}
  MaskOp(Kind kind);  // NOLINT(google-explicit-constructor)
  template <typename Op>
    requires std::constructible_from<Kind, Op> && (!std::same_as<std::remove_cvref_t<Op>, Kind>)
  MaskOp(Op op) : MaskOp(Kind(std::move(op))) {}  // NOLINT(google-explicit-constructor)

  const Kind& kind() const { return kind_; }
  std::string name() const;
  bool is_fill() const;

 private:
  Kind kind_;
};

/// Parses "means", "black", "white", "constant:r,g,b", "blur:sigma", "pixelate:block".
/// `channel_means` supplies the values for "means".
MaskOp parse_mask_op(const std::string& spec, const std::array<float, 3>& channel_means);

/// Pixels where mask == 0 are copied bit-exactly; pixels where mask != 0 are
/// replaced per op and rounded onto the 8-bit grid, so an 8-bit input stays
/// exactly representable after a PNG round trip.
ImageRGB apply_mask(const ImageRGB& image, std::span<const std::uint8_t> mask, const MaskOp& op);

/// Convenience: mask the union of the listed regions.
ImageRGB apply_mask(const ImageRGB& image, const LabelMap& labels, std::span<const int> regions, const MaskOp& op);

/// Projects a model-resolution pixel mask to another resolution: an output
/// pixel is masked when its footprint overlaps a masked model pixel (nearest
/// neighbour when enlarging by an integer factor), then the result is dilated
/// by `dilation` pixels (4-neighbourhood steps).
std::vector<std::uint8_t> project_mask(std::span<const std::uint8_t> mask, std::size_t width, std::size_t height,
                                       std::size_t out_width, std::size_t out_height, std::size_t dilation = 1);

}  // namespace cse
