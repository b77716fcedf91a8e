#include "cse/attribution.hpp"

#include <algorithm>
#include <cmath>

namespace cse {

Map2D upsample_bilinear(const Map2D& map, std::size_t width, std::size_t height) {
  if (map.width == 0 || map.height == 0) throw InputError("cannot resample an empty map");
  if (map.width == width && map.height == height) return map;
  Map2D out{width, height, std::vector<float>(width * height)};
  const double sx = static_cast<double>(map.width) / static_cast<double>(width);
  const double sy = static_cast<double>(map.height) / static_cast<double>(height);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::max(0.0, (static_cast<double>(y) + 0.5) * sy - 0.5);
    const auto y0 = std::min(static_cast<std::size_t>(fy), map.height - 1);
    const auto y1 = std::min(y0 + 1, map.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::max(0.0, (static_cast<double>(x) + 0.5) * sx - 0.5);
      const auto x0 = std::min(static_cast<std::size_t>(fx), map.width - 1);
      const auto x1 = std::min(x0 + 1, map.width - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = map.values[y0 * map.width + x0] * (1 - wx) + map.values[y0 * map.width + x1] * wx;
      const double bot = map.values[y1 * map.width + x0] * (1 - wx) + map.values[y1 * map.width + x1] * wx;
      out.values[y * width + x] = static_cast<float>(top * (1 - wy) + bot * wy);
    }
  }
  return out;
}

void minmax_normalize(std::vector<float>& values) {
  if (values.empty()) return;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const float mn = *lo, range = *hi - *lo;
  if (!(range > 0.0f)) {
    std::fill(values.begin(), values.end(), 0.0f);
    return;
  }
  for (auto& v : values) v = (v - mn) / range;
}

Map2D psi_postprocess(const Map2D& raw, std::size_t width, std::size_t height) {
  Map2D a = raw;
  for (auto& v : a.values) v = std::fabs(v);
  Map2D up = upsample_bilinear(a, width, height);
  minmax_normalize(up.values);
  return up;
}

FullGradTerms fullgrad_completeness(const NetworkModel& model, const Tensor& x, std::size_t target) {
  const ForwardPass pass = forward(model, x);
  const Gradients g = backward(model, x, pass, target);
  FullGradTerms t;
  t.output = pass.logits[target];
  for (std::size_t i = 0; i < x.size(); ++i) t.input_term += static_cast<double>(g.input_grad[i]) * x[i];
  for (std::size_t k = 0; k < g.biased_layers.size(); ++k) {
    const Tensor& bias = model.layers[g.biased_layers[k]].bias;
    for (std::size_t c = 0; c < bias.size(); ++c) t.bias_term += static_cast<double>(g.bias_grads[k][c]) * bias[c];
  }
  return t;
}

AttributionMap fullgrad(const NetworkModel& model, const ImageRGB& image) {
  return fullgrad(model, image, argmax(logits(model, to_tensor(image))));
}

AttributionMap fullgrad(const NetworkModel& model, const ImageRGB& image, std::size_t target) {
  const Tensor x = to_tensor(image);
  const ForwardPass pass = forward(model, x);
  const Gradients g = backward(model, x, pass, target);
  const std::size_t W = image.width, H = image.height, HW = W * H;

  AttributionMap out{W, H, std::vector<float>(HW, 0.0f), target, "fullgrad"};

  // Input term: |grad * x| min-max normalised jointly over colour channels, then summed.
  std::vector<float> gx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) gx[i] = std::fabs(g.input_grad[i] * x[i]);
  minmax_normalize(gx);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < HW; ++p) out.values[p] += gx[c * HW + p];

  // Bias terms, one psi per channel of every biased layer.
  for (std::size_t k = 0; k < g.biased_layers.size(); ++k) {
    const Tensor& bias = model.layers[g.biased_layers[k]].bias;
    const Tensor& gmap = g.bias_grad_maps[k];
    if (gmap.rank() == 3) {
      const std::size_t h = gmap.dim(1), w = gmap.dim(2);
      for (std::size_t c = 0; c < gmap.dim(0); ++c) {
        Map2D raw{w, h, std::vector<float>(w * h)};
        for (std::size_t p = 0; p < w * h; ++p) raw.values[p] = gmap[c * w * h + p] * bias[c];
        const Map2D m = psi_postprocess(raw, W, H);
        for (std::size_t p = 0; p < HW; ++p) out.values[p] += m.values[p];
      }
    } else {
      // Linear layer: each output channel is a constant map, which psi sends to zero.
      for (std::size_t c = 0; c < gmap.size(); ++c) {
        const Map2D m = psi_postprocess(Map2D{1, 1, {gmap[c] * bias[c]}}, W, H);
        for (std::size_t p = 0; p < HW; ++p) out.values[p] += m.values[p];
      }
    }
  }
  minmax_normalize(out.values);
  return out;
}

std::size_t last_conv_layer(const NetworkModel& model) {
  for (std::size_t i = model.layers.size(); i-- > 0;) {
    if (model.layers[i].kind == LayerKind::conv2d) return i;
  }
  throw InputError("model has no conv layer");
}

Map2D gradcam_from(const Tensor& activation, const Tensor& gradient, std::size_t width, std::size_t height) {
  if (activation.rank() != 3 || activation.shape() != gradient.shape()) {
    throw InputError("gradcam needs matching (C, H, W) activation and gradient");
  }
  const std::size_t C = activation.dim(0), h = activation.dim(1), w = activation.dim(2), hw = h * w;
  Map2D cam{w, h, std::vector<float>(hw, 0.0f)};
  for (std::size_t c = 0; c < C; ++c) {
    double alpha = 0.0;
    for (std::size_t p = 0; p < hw; ++p) alpha += gradient[c * hw + p];
    alpha /= static_cast<double>(hw);
    for (std::size_t p = 0; p < hw; ++p) cam.values[p] += static_cast<float>(alpha * activation[c * hw + p]);
  }
  for (auto& v : cam.values) v = std::max(v, 0.0f);
  Map2D up = upsample_bilinear(cam, width, height);
  minmax_normalize(up.values);
  return up;
}

AttributionMap gradcam(const NetworkModel& model, const ImageRGB& image, std::size_t layer_index) {
  return gradcam(model, image, layer_index, argmax(logits(model, to_tensor(image))));
}

AttributionMap gradcam(const NetworkModel& model, const ImageRGB& image, std::size_t layer_index, std::size_t target) {
  if (layer_index >= model.layers.size() || model.layers[layer_index].kind != LayerKind::conv2d) {
    throw InputError("gradcam layer " + std::to_string(layer_index) + " is not a conv layer");
  }
  const Tensor x = to_tensor(image);
  const ForwardPass pass = forward(model, x);
  const Gradients g = backward(model, x, pass, target);
  const auto it = std::find(g.biased_layers.begin(), g.biased_layers.end(), layer_index);
  const Tensor& grad = g.bias_grad_maps[static_cast<std::size_t>(it - g.biased_layers.begin())];
  Map2D cam = gradcam_from(pass.activations[layer_index], grad, image.width, image.height);
  return AttributionMap{image.width, image.height, std::move(cam.values), target, "gradcam"};
}

double map_entropy(const AttributionMap& map) {
  double total = 0.0;
  for (float v : map.values) total += v;
  if (!(total > 0.0)) return 0.0;
  double h = 0.0;
  for (float v : map.values) {
    if (v <= 0.0f) continue;
    const double p = v / total;
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace cse
