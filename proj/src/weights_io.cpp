// CSEW weight file, little-endian:
//   "CSEW" u32 version=1 u32 biased_layer_count
//   per biased layer: u8 kind, u32 ndims, u32 dims[ndims], f32 weight[prod(dims)], u32 nbias, f32 bias[nbias]
//   footer: f32 channel_means[3], u32 parity_count,
//           per vector: f32 input[3*64*64] f32 logits[classes]
// Relu/pool layers are implied by the fixed topology (see assemble_topology).

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cse/network.hpp"

namespace cse {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'E', 'W'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kModelInputSize = 64;

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::vector<float> floats(std::size_t n) {
    need(n * 4);
    std::vector<float> v(n);
    for (auto& x : v) x = f32();
    return v;
  }
  void magic() {
    need(4);
    if (std::memcmp(bytes_.data(), kMagic, 4) != 0) throw InputError("not a CSEW weight file (bad magic)");
    pos_ += 4;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw InputError("truncated CSEW weight file");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

class Writer {
 public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void floats(std::span<const float> v) {
    for (float x : v) f32(x);
  }
  std::vector<std::uint8_t> out;
};

}  // namespace

NetworkModel parse_weights(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic();
  if (const auto version = r.u32(); version != kVersion) {
    throw InputError("unsupported CSEW version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  if (count == 0 || count > 64) throw InputError("implausible CSEW layer count " + std::to_string(count));

  std::vector<Layer> biased;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto kind = static_cast<LayerKind>(r.u8());
    const std::uint32_t ndims = r.u32();
    if (ndims == 0 || ndims > 4) throw InputError("implausible CSEW tensor rank");
    Shape dims(ndims);
    for (auto& d : dims) d = r.u32();
    Tensor weight(dims, r.floats(shape_numel(dims)));
    const std::uint32_t nbias = r.u32();
    Tensor bias({nbias}, r.floats(nbias));
    if (kind == LayerKind::conv2d) {
      biased.push_back(Layer::conv(std::move(weight), std::move(bias)));
    } else if (kind == LayerKind::linear) {
      biased.push_back(Layer::fully_connected(std::move(weight), std::move(bias)));
    } else {
      throw InputError("CSEW layer record has non-biased kind tag " + std::to_string(static_cast<int>(kind)));
    }
  }

  NetworkModel model;
  if (biased.front().kind == LayerKind::conv2d) {
    model.input_shape = {biased.front().in_channels(), kModelInputSize, kModelInputSize};
  } else {
    model.input_shape = {biased.front().in_channels()};
  }
  model.layers = assemble_topology(std::move(biased));
  model.class_names.clear();
  for (std::size_t c = 0; c < model.num_classes(); ++c) {
    model.class_names.push_back(c == 0 ? "safe" : c == 1 ? "unsafe" : "class" + std::to_string(c));
  }
  model.validate();

  for (auto& m : model.channel_means) m = r.f32();
  const std::uint32_t nparity = r.u32();
  const std::size_t in_numel = shape_numel(model.input_shape);
  for (std::uint32_t i = 0; i < nparity; ++i) {
    ParityVector pv;
    pv.input = r.floats(in_numel);
    pv.logits = r.floats(model.num_classes());
    model.parity.push_back(std::move(pv));
  }
  if (!r.at_end()) throw InputError("trailing bytes after CSEW footer");
  return model;
}

NetworkModel load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open weight file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_weights(bytes);
}

std::vector<std::uint8_t> serialize_weights(const NetworkModel& model) {
  model.validate();
  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kVersion);
  std::uint32_t count = 0;
  for (const auto& l : model.layers) count += l.has_bias();
  w.u32(count);
  for (const auto& l : model.layers) {
    if (!l.has_bias()) continue;
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.u32(static_cast<std::uint32_t>(l.weight.rank()));
    for (auto d : l.weight.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.floats(l.weight.values());
    w.u32(static_cast<std::uint32_t>(l.bias.size()));
    w.floats(l.bias.values());
  }
  for (float m : model.channel_means) w.f32(m);
  w.u32(static_cast<std::uint32_t>(model.parity.size()));
  for (const auto& pv : model.parity) {
    w.floats(pv.input);
    w.floats(pv.logits);
  }
  return std::move(w.out);
}

void save_weights(const NetworkModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_weights(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write weight file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("short write to " + path.string());
}

}  // namespace cse
