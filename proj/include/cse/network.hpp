#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cse/tensor.hpp"

namespace cse {

enum class LayerKind : std::uint8_t {
  conv2d = 0,
  relu = 1,
  maxpool2 = 2,
  global_avgpool = 3,
  linear = 4,
};

const char* layer_kind_name(LayerKind kind);

/// One layer of the fixed classifier topology.
/// conv2d: weight (out, in, 3, 3), stride 1, pad 1. linear: weight (out, in).
/// Both always carry a bias of length `out`; relu and pooling layers carry none.
struct Layer {
  LayerKind kind = LayerKind::relu;
  Tensor weight;
  Tensor bias;

  bool has_bias() const { return kind == LayerKind::conv2d || kind == LayerKind::linear; }
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1); }

  static Layer conv(Tensor weight, Tensor bias);
  static Layer fully_connected(Tensor weight, Tensor bias);
  static Layer plain(LayerKind kind);
};

/// Reference input and the logits the exporting trainer computed for it.
struct ParityVector {
  std::vector<float> input;
  std::vector<float> logits;
};

/// Immutable after construction; safe to share across threads.
struct NetworkModel {
  std::vector<Layer> layers;
  Shape input_shape{3, 64, 64};
  std::vector<std::string> class_names{"safe", "unsafe"};
  std::array<float, 3> channel_means{0.5f, 0.5f, 0.5f};
  std::vector<ParityVector> parity;

  std::size_t num_classes() const;
  /// Throws InputError if the layer list is not a valid chain for `input_shape`.
  void validate() const;
};

/// Builds the classifier topology
///   conv(c0->c1)-relu-pool2 -> conv(c1->c2)-relu-pool2 -> ... -> conv-relu-gap -> linear(->classes)
/// from per-conv channel counts, with He-initialised weights and small random biases.
NetworkModel random_model(std::uint64_t seed, std::vector<std::size_t> conv_channels = {3, 8, 16, 32},
                          std::size_t classes = 2, std::size_t input_size = 64);

/// Inserts relu/pool layers between biased layers of the fixed topology.
std::vector<Layer> assemble_topology(std::vector<Layer> biased_layers);

struct ForwardPass {
  Tensor logits;
  /// activations[i] is the output of layers[i].
  std::vector<Tensor> activations;
};

ForwardPass forward(const NetworkModel& model, const Tensor& x);
Tensor logits(const NetworkModel& model, const Tensor& x);

struct Gradients {
  /// d target_logit / d x, shaped like x.
  Tensor input_grad;
  /// Indices into model.layers of the biased layers, in network order.
  std::vector<std::size_t> biased_layers;
  /// d target_logit / d bias, one per biased layer, shaped like that bias.
  std::vector<Tensor> bias_grads;
  /// d target_logit / d (layer output) for each biased layer, i.e. the gradient
  /// with respect to the bias broadcast over every output location.
  std::vector<Tensor> bias_grad_maps;
};

Gradients backward(const NetworkModel& model, const Tensor& x, const ForwardPass& pass,
                   std::size_t target_logit_index);
Gradients backward(const NetworkModel& model, const Tensor& x, std::size_t target_logit_index);

/// Max-subtracted softmax.
Tensor softmax(const Tensor& logits);

// CSEW weight file.
NetworkModel load_weights(const std::filesystem::path& path);
NetworkModel parse_weights(std::span<const std::uint8_t> bytes);
void save_weights(const NetworkModel& model, const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_weights(const NetworkModel& model);

}  // namespace cse
