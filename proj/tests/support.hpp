#pragma once
// Shared test helpers, including an independent float64 reference network
// used as the oracle for forward outputs and finite-difference gradients.

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cse/image.hpp"
#include "cse/network.hpp"
#include "cse/segmentation.hpp"

namespace testing_support {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cse_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline bool rel_close(double analytic, double numeric, double rel, double floor) {
  return std::abs(analytic - numeric) <= rel * std::max(std::abs(analytic), std::abs(numeric)) + floor;
}

inline cse::ImageRGB random_image(std::mt19937_64& rng, std::size_t w, std::size_t h) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  cse::ImageRGB img(w, h);
  for (auto& v : img.pixels) v = u(rng);
  return img;
}

inline cse::Tensor random_input(std::mt19937_64& rng, const cse::Shape& shape) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  cse::Tensor t(shape);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline cse::ImageRGB flat_image(std::size_t w, std::size_t h, float r, float g, float b) {
  cse::ImageRGB img(w, h);
  for (std::size_t p = 0; p < w * h; ++p) img.pixels[p * 3] = r, img.pixels[p * 3 + 1] = g, img.pixels[p * 3 + 2] = b;
  return img;
}

// Straightforward float64 re-implementation of the layer set. Shares no code
// with the engine beyond reading the weights out of the model.
class RefNet {
 public:
  struct L {
    cse::LayerKind kind;
    std::size_t out = 0, in = 0;
    std::vector<double> w, b;
  };

  explicit RefNet(const cse::NetworkModel& m) : input_shape(m.input_shape) {
    for (const auto& l : m.layers) {
      L r;
      r.kind = l.kind;
      if (l.has_bias()) {
        r.out = l.weight.dim(0);
        r.in = l.weight.dim(1);
        r.w.assign(l.weight.values().begin(), l.weight.values().end());
        r.b.assign(l.bias.values().begin(), l.bias.values().end());
      }
      layers.push_back(std::move(r));
    }
  }

  std::vector<double> logits(std::vector<double> x) const {
    std::size_t C = input_shape[0], H = input_shape.size() > 1 ? input_shape[1] : 1,
                W = input_shape.size() > 2 ? input_shape[2] : 1;
    for (const auto& l : layers) {
      std::vector<double> y;
      switch (l.kind) {
        case cse::LayerKind::conv2d:
          y.assign(l.out * H * W, 0.0);
          for (std::size_t o = 0; o < l.out; ++o)
            for (std::size_t r = 0; r < H; ++r)
              for (std::size_t c = 0; c < W; ++c) {
                double acc = l.b[o];
                for (std::size_t i = 0; i < l.in; ++i)
                  for (int ky = -1; ky <= 1; ++ky)
                    for (int kx = -1; kx <= 1; ++kx) {
                      const long rr = static_cast<long>(r) + ky, cc = static_cast<long>(c) + kx;
                      if (rr < 0 || cc < 0 || rr >= static_cast<long>(H) || cc >= static_cast<long>(W)) continue;
                      acc += l.w[((o * l.in + i) * 3 + static_cast<std::size_t>(ky + 1)) * 3 +
                                 static_cast<std::size_t>(kx + 1)] *
                             x[(i * H + static_cast<std::size_t>(rr)) * W + static_cast<std::size_t>(cc)];
                    }
                y[(o * H + r) * W + c] = acc;
              }
          C = l.out;
          break;
        case cse::LayerKind::relu:
          y = x;
          for (auto& v : y) v = std::max(v, 0.0);
          break;
        case cse::LayerKind::maxpool2: {
          const std::size_t h2 = H / 2, w2 = W / 2;
          y.assign(C * h2 * w2, 0.0);
          for (std::size_t k = 0; k < C; ++k)
            for (std::size_t r = 0; r < h2; ++r)
              for (std::size_t c = 0; c < w2; ++c) {
                double m = -INFINITY;
                for (std::size_t d = 0; d < 4; ++d) m = std::max(m, x[(k * H + 2 * r + d / 2) * W + 2 * c + d % 2]);
                y[(k * h2 + r) * w2 + c] = m;
              }
          H = h2, W = w2;
          break;
        }
        case cse::LayerKind::global_avgpool:
          y.assign(C, 0.0);
          for (std::size_t k = 0; k < C; ++k) {
            for (std::size_t i = 0; i < H * W; ++i) y[k] += x[k * H * W + i];
            y[k] /= static_cast<double>(H * W);
          }
          H = W = 1;
          break;
        case cse::LayerKind::linear:
          y.assign(l.out, 0.0);
          for (std::size_t o = 0; o < l.out; ++o) {
            y[o] = l.b[o];
            for (std::size_t i = 0; i < l.in; ++i) y[o] += l.w[o * l.in + i] * x[i];
          }
          C = l.out, H = W = 1;
          break;
      }
      x = std::move(y);
    }
    return x;
  }

  double logit(const std::vector<double>& x, std::size_t target) const { return logits(x)[target]; }

  cse::Shape input_shape;
  std::vector<L> layers;
};

// Independent partition check: returns an empty string when `m` covers every
// pixel with labels 0..K-1, each used, and (optionally) each 4-connected.
inline std::string partition_problem(const cse::LabelMap& m, bool require_connected) {
  if (m.labels.size() != m.width * m.height) return "label count != pixel count";
  if (m.regions < 1) return "no regions";
  std::vector<std::size_t> count(static_cast<std::size_t>(m.regions), 0);
  for (int l : m.labels) {
    if (l < 0 || l >= m.regions) return "label out of range";
    ++count[static_cast<std::size_t>(l)];
  }
  for (std::size_t k = 0; k < count.size(); ++k)
    if (count[k] == 0) return "region " + std::to_string(k) + " empty";
  if (!require_connected) return {};
  std::vector<char> seen(m.labels.size(), 0);
  std::vector<int> pieces(static_cast<std::size_t>(m.regions), 0);
  for (std::size_t s = 0; s < m.labels.size(); ++s) {
    if (seen[s]) continue;
    const int l = m.labels[s];
    if (++pieces[static_cast<std::size_t>(l)] > 1) return "region " + std::to_string(l) + " disconnected";
    std::vector<std::size_t> stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t x = p % m.width, y = p / m.width;
      const std::size_t nb[4] = {x > 0 ? p - 1 : p, x + 1 < m.width ? p + 1 : p, y > 0 ? p - m.width : p,
                                 y + 1 < m.height ? p + m.width : p};
      for (std::size_t q : nb)
        if (!seen[q] && m.labels[q] == l) seen[q] = 1, stack.push_back(q);
    }
  }
  return {};
}

inline std::vector<double> to_double(const cse::Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace testing_support
