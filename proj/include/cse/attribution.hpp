#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cse/image.hpp"
#include "cse/network.hpp"

namespace cse {

/// Per-pixel nonnegative saliency at input resolution, max-normalised to 1 unless all zero.
struct AttributionMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> values;  // y * width + x
  std::size_t target_class = 0;
  std::string method;

  float at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

/// Single-channel spatial map.
struct Map2D {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> values;
};

/// Bilinear resample (half-pixel centres, edge clamped).
Map2D upsample_bilinear(const Map2D& map, std::size_t width, std::size_t height);

/// Min-max rescale to [0, 1]; a constant map becomes all zeros.
void minmax_normalize(std::vector<float>& values);

/// psi: absolute value, bilinear upsample to the output size, min-max rescale.
Map2D psi_postprocess(const Map2D& raw, std::size_t width, std::size_t height);

/// Pre-postprocessing FullGrad decomposition of the target logit.
struct FullGradTerms {
  double output = 0.0;      // f(x), the target logit
  double input_term = 0.0;  // <grad_x f, x>
  double bias_term = 0.0;   // sum over biased layers and channels of <grad_b f, b>
};

FullGradTerms fullgrad_completeness(const NetworkModel& model, const Tensor& x, std::size_t target);

/// psi(grad_x f * x) summed over colour channels, plus psi of every conv
/// channel's bias-gradient map times its bias, plus the (spatially uniform)
/// linear-layer terms; target is the predicted class.
AttributionMap fullgrad(const NetworkModel& model, const ImageRGB& image);
AttributionMap fullgrad(const NetworkModel& model, const ImageRGB& image, std::size_t target);

/// Grad-CAM at the output of conv layer `layer_index` (an index into model.layers).
AttributionMap gradcam(const NetworkModel& model, const ImageRGB& image, std::size_t layer_index);
AttributionMap gradcam(const NetworkModel& model, const ImageRGB& image, std::size_t layer_index, std::size_t target);

/// Index of the last conv layer, the default Grad-CAM target.
std::size_t last_conv_layer(const NetworkModel& model);

/// Grad-CAM combination step: ReLU(sum_c mean(grad_c) * act_c), upsampled and min-max normalised.
Map2D gradcam_from(const Tensor& activation, const Tensor& gradient, std::size_t width, std::size_t height);

/// Shannon entropy (nats) of the map viewed as a distribution; diagnostic only.
double map_entropy(const AttributionMap& map);

}  // namespace cse
