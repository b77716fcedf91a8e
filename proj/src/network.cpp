#include <algorithm>
#include <cmath>
#include <random>

#include "cse/kernels.hpp"
#include "cse/network.hpp"

namespace cse {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2: return "maxpool2";
    case LayerKind::global_avgpool: return "avgpool-global";
    case LayerKind::linear: return "linear";
  }
  return "unknown";
}

Layer Layer::conv(Tensor weight, Tensor bias) {
  if (weight.rank() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3) {
    throw InputError("conv2d weight must be (out, in, 3, 3), got " + shape_to_string(weight.shape()));
  }
  if (bias.size() != weight.dim(0)) throw InputError("conv2d bias length must equal out channels");
  return Layer{LayerKind::conv2d, std::move(weight), std::move(bias)};
}

Layer Layer::fully_connected(Tensor weight, Tensor bias) {
  if (weight.rank() != 2) throw InputError("linear weight must be (out, in), got " + shape_to_string(weight.shape()));
  if (bias.size() != weight.dim(0)) throw InputError("linear bias length must equal out features");
  return Layer{LayerKind::linear, std::move(weight), std::move(bias)};
}

Layer Layer::plain(LayerKind kind) {
  if (kind == LayerKind::conv2d || kind == LayerKind::linear) throw InputError("plain() is for unbiased layers");
  return Layer{kind, {}, {}};
}

namespace {

Shape output_shape(const Layer& layer, const Shape& in) {
  switch (layer.kind) {
    case LayerKind::conv2d:
      if (in.size() != 3 || in[0] != layer.in_channels()) {
        throw InputError("conv2d expects (" + std::to_string(layer.in_channels()) + ", H, W) input, got " +
                         shape_to_string(in));
      }
      return {layer.out_channels(), in[1], in[2]};
    case LayerKind::relu: return in;
    case LayerKind::maxpool2:
      if (in.size() != 3 || in[1] < 2 || in[2] < 2) throw InputError("maxpool2 expects (C, H>=2, W>=2) input");
      return {in[0], in[1] / 2, in[2] / 2};
    case LayerKind::global_avgpool:
      if (in.size() != 3) throw InputError("global avgpool expects (C, H, W) input");
      return {in[0]};
    case LayerKind::linear:
      if (shape_numel(in) != layer.in_channels()) {
        throw InputError("linear expects " + std::to_string(layer.in_channels()) + " inputs, got " +
                         shape_to_string(in));
      }
      return {layer.out_channels()};
  }
  throw InputError("unknown layer kind");
}

}  // namespace

std::size_t NetworkModel::num_classes() const {
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    if (it->kind == LayerKind::linear) return it->out_channels();
  }
  return 0;
}

void NetworkModel::validate() const {
  if (layers.empty()) throw InputError("model has no layers");
  Shape s = input_shape;
  for (const auto& layer : layers) s = output_shape(layer, s);
  if (s.size() != 1 || s[0] < 2) throw InputError("model output must be a vector of >= 2 logits");
  if (s[0] != class_names.size()) throw InputError("class name count does not match model outputs");
}

std::vector<Layer> assemble_topology(std::vector<Layer> biased_layers) {
  std::vector<Layer> out;
  std::size_t conv_count = 0;
  for (const auto& l : biased_layers) conv_count += l.kind == LayerKind::conv2d;
  std::size_t conv_seen = 0;
  for (auto& l : biased_layers) {
    if (l.kind == LayerKind::conv2d) {
      ++conv_seen;
      out.push_back(std::move(l));
      out.push_back(Layer::plain(LayerKind::relu));
      out.push_back(Layer::plain(conv_seen < conv_count ? LayerKind::maxpool2 : LayerKind::global_avgpool));
    } else if (l.kind == LayerKind::linear) {
      out.push_back(std::move(l));
    } else {
      throw InputError("assemble_topology takes biased layers only");
    }
  }
  return out;
}

NetworkModel random_model(std::uint64_t seed, std::vector<std::size_t> conv_channels, std::size_t classes,
                          std::size_t input_size) {
  if (conv_channels.size() < 2) throw InputError("need at least input and one conv channel count");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> bias_dist(-0.1f, 0.1f);
  std::vector<Layer> biased;
  auto init = [&](Shape shape, std::size_t fan_in) {
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    Tensor w(std::move(shape));
    for (auto& v : w.values()) v = dist(rng);
    return w;
  };
  for (std::size_t i = 0; i + 1 < conv_channels.size(); ++i) {
    const auto in = conv_channels[i], out = conv_channels[i + 1];
    Tensor w = init({out, in, 3, 3}, in * 9);
    Tensor b({out});
    for (auto& v : b.values()) v = bias_dist(rng);
    biased.push_back(Layer::conv(std::move(w), std::move(b)));
  }
  Tensor w = init({classes, conv_channels.back()}, conv_channels.back());
  Tensor b({classes});
  for (auto& v : b.values()) v = bias_dist(rng);
  biased.push_back(Layer::fully_connected(std::move(w), std::move(b)));

  NetworkModel model;
  model.layers = assemble_topology(std::move(biased));
  model.input_shape = {conv_channels.front(), input_size, input_size};
  model.class_names.clear();
  for (std::size_t c = 0; c < classes; ++c) model.class_names.push_back(c == 0 ? "safe" : c == 1 ? "unsafe" : "class" + std::to_string(c));
  model.validate();
  return model;
}

ForwardPass forward(const NetworkModel& model, const Tensor& x) {
  if (x.shape() != model.input_shape) {
    throw InputError("input shape " + shape_to_string(x.shape()) + " does not match model input " +
                     shape_to_string(model.input_shape));
  }
  ForwardPass pass;
  pass.activations.reserve(model.layers.size());
  const Tensor* cur = &x;
  for (const auto& layer : model.layers) {
    Tensor out(output_shape(layer, cur->shape()));
    switch (layer.kind) {
      case LayerKind::conv2d: {
        const kernels::ConvDims d{cur->dim(0), out.dim(0), cur->dim(1), cur->dim(2)};
        kernels::omp::conv3x3_forward(d, cur->values(), layer.weight.values(), layer.bias.values(), out.values());
        break;
      }
      case LayerKind::relu:
        std::transform(cur->values().begin(), cur->values().end(), out.values().begin(),
                       [](float v) { return v > 0.0f ? v : 0.0f; });
        break;
      case LayerKind::maxpool2:
        for (std::size_t c = 0; c < out.dim(0); ++c)
          for (std::size_t y = 0; y < out.dim(1); ++y)
            for (std::size_t xx = 0; xx < out.dim(2); ++xx) {
              out.at(c, y, xx) = std::max({cur->at(c, 2 * y, 2 * xx), cur->at(c, 2 * y, 2 * xx + 1),
                                           cur->at(c, 2 * y + 1, 2 * xx), cur->at(c, 2 * y + 1, 2 * xx + 1)});
            }
        break;
      case LayerKind::global_avgpool: {
        const std::size_t hw = cur->dim(1) * cur->dim(2);
        for (std::size_t c = 0; c < out.dim(0); ++c) {
          double acc = 0.0;
          for (std::size_t i = 0; i < hw; ++i) acc += (*cur)[c * hw + i];
          out[c] = static_cast<float>(acc / static_cast<double>(hw));
        }
        break;
      }
      case LayerKind::linear: {
        const std::size_t in = layer.in_channels();
        for (std::size_t o = 0; o < out.size(); ++o) {
          float acc = layer.bias[o];
          for (std::size_t i = 0; i < in; ++i) acc += layer.weight[o * in + i] * (*cur)[i];
          out[o] = acc;
        }
        break;
      }
    }
    pass.activations.push_back(std::move(out));
    cur = &pass.activations.back();
  }
  pass.logits = pass.activations.back();
  if (pass.logits.rank() != 1) throw InputError("model does not end in a logit vector");
  return pass;
}

Tensor logits(const NetworkModel& model, const Tensor& x) { return forward(model, x).logits; }

Gradients backward(const NetworkModel& model, const Tensor& x, const ForwardPass& pass,
                   std::size_t target_logit_index) {
  if (target_logit_index >= pass.logits.size()) {
    throw InputError("target logit " + std::to_string(target_logit_index) + " out of range for " +
                     std::to_string(pass.logits.size()) + " classes");
  }
  if (pass.activations.size() != model.layers.size()) throw InputError("forward pass does not belong to this model");

  Gradients grads;
  Tensor g(pass.logits.shape());
  g[target_logit_index] = 1.0f;

  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const Layer& layer = model.layers[li];
    const Tensor& in = li == 0 ? x : pass.activations[li - 1];
    Tensor gin(in.shape());
    switch (layer.kind) {
      case LayerKind::conv2d: {
        const std::size_t C = g.dim(0), hw = g.dim(1) * g.dim(2);
        Tensor bg({C});
        for (std::size_t c = 0; c < C; ++c) {
          double acc = 0.0;
          for (std::size_t i = 0; i < hw; ++i) acc += g[c * hw + i];
          bg[c] = static_cast<float>(acc);
        }
        grads.biased_layers.push_back(li);
        grads.bias_grads.push_back(std::move(bg));
        grads.bias_grad_maps.push_back(g);
        const kernels::ConvDims d{in.dim(0), C, in.dim(1), in.dim(2)};
        kernels::omp::conv3x3_backward_input(d, g.values(), layer.weight.values(), gin.values());
        break;
      }
      case LayerKind::relu:
        for (std::size_t i = 0; i < gin.size(); ++i) gin[i] = in[i] > 0.0f ? g[i] : 0.0f;
        break;
      case LayerKind::maxpool2:
        for (std::size_t c = 0; c < g.dim(0); ++c)
          for (std::size_t y = 0; y < g.dim(1); ++y)
            for (std::size_t xx = 0; xx < g.dim(2); ++xx) {
              // First maximum in row-major window order receives the gradient.
              std::size_t by = 2 * y, bx = 2 * xx;
              float best = in.at(c, by, bx);
              for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dx = 0; dx < 2; ++dx) {
                  const float v = in.at(c, 2 * y + dy, 2 * xx + dx);
                  if (v > best) best = v, by = 2 * y + dy, bx = 2 * xx + dx;
                }
              gin.at(c, by, bx) += g.at(c, y, xx);
            }
        break;
      case LayerKind::global_avgpool: {
        const std::size_t hw = in.dim(1) * in.dim(2);
        const float scale = 1.0f / static_cast<float>(hw);
        for (std::size_t c = 0; c < in.dim(0); ++c)
          for (std::size_t i = 0; i < hw; ++i) gin[c * hw + i] = g[c] * scale;
        break;
      }
      case LayerKind::linear: {
        grads.biased_layers.push_back(li);
        grads.bias_grads.push_back(g);
        grads.bias_grad_maps.push_back(g);
        const std::size_t nin = layer.in_channels();
        for (std::size_t o = 0; o < g.size(); ++o) {
          if (g[o] == 0.0f) continue;
          for (std::size_t i = 0; i < nin; ++i) gin[i] += g[o] * layer.weight[o * nin + i];
        }
        break;
      }
    }
    g = std::move(gin);
  }
  grads.input_grad = std::move(g);
  std::reverse(grads.biased_layers.begin(), grads.biased_layers.end());
  std::reverse(grads.bias_grads.begin(), grads.bias_grads.end());
  std::reverse(grads.bias_grad_maps.begin(), grads.bias_grad_maps.end());
  return grads;
}

Gradients backward(const NetworkModel& model, const Tensor& x, std::size_t target_logit_index) {
  return backward(model, x, forward(model, x), target_logit_index);
}

Tensor softmax(const Tensor& logits) {
  if (logits.empty()) throw InputError("softmax of empty logits");
  const float mx = *std::max_element(logits.values().begin(), logits.values().end());
  std::vector<double> e(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) sum += e[i] = std::exp(static_cast<double>(logits[i]) - mx);
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < e.size(); ++i) out[i] = static_cast<float>(e[i] / sum);
  return out;
}

}  // namespace cse
