#include "cse/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cse::kernels {

namespace {

// Forward substitution L z = (x - mu) followed by |z|^2.
inline double mahalanobis_sq(const double* x, const double* mu, const double* chol) {
  double z[kFeatureDim];
  double q = 0.0;
  for (std::size_t r = 0; r < kFeatureDim; ++r) {
    double acc = x[r] - mu[r];
    for (std::size_t c = 0; c < r; ++c) acc -= chol[r * kFeatureDim + c] * z[c];
    z[r] = acc / chol[r * kFeatureDim + r];
    q += z[r] * z[r];
  }
  return q;
}

void check_conv(const ConvDims& d, std::size_t in, std::size_t weight, std::size_t bias, std::size_t out) {
  const std::size_t hw = d.height * d.width;
  if (in != d.in_channels * hw || weight != d.out_channels * d.in_channels * 9 || bias != d.out_channels ||
      out != d.out_channels * hw) {
    throw std::invalid_argument("conv3x3 buffer sizes do not match dimensions");
  }
}

void check_density(std::span<const double> features, const GaussianComponents& c, std::size_t out) {
  const std::size_t n = features.size() / kFeatureDim;
  if (features.size() % kFeatureDim != 0 || c.means.size() != c.count * kFeatureDim ||
      c.chol.size() != c.count * kFeatureDim * kFeatureDim || c.log_norm.size() != c.count || out != n * c.count) {
    throw std::invalid_argument("gaussian_log_density buffer sizes do not match");
  }
}

}  // namespace

namespace serial {

void conv3x3_forward(const ConvDims& d, std::span<const float> input, std::span<const float> weight,
                     std::span<const float> bias, std::span<float> output) {
  check_conv(d, input.size(), weight.size(), bias.size(), output.size());
  const auto H = static_cast<long>(d.height), W = static_cast<long>(d.width);
  for (std::size_t oc = 0; oc < d.out_channels; ++oc) {
    for (long y = 0; y < H; ++y) {
      for (long x = 0; x < W; ++x) {
        float acc = bias[oc];
        for (std::size_t ic = 0; ic < d.in_channels; ++ic) {
          for (long ky = 0; ky < 3; ++ky) {
            for (long kx = 0; kx < 3; ++kx) {
              const long sy = y + ky - 1, sx = x + kx - 1;
              if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
              acc += weight[((oc * d.in_channels + ic) * 3 + ky) * 3 + kx] * input[(ic * H + sy) * W + sx];
            }
          }
        }
        output[(oc * H + y) * W + x] = acc;
      }
    }
  }
}

void conv3x3_backward_input(const ConvDims& d, std::span<const float> grad_output,
                            std::span<const float> weight, std::span<float> grad_input) {
  check_conv(d, grad_input.size(), weight.size(), d.out_channels, grad_output.size());
  const auto H = static_cast<long>(d.height), W = static_cast<long>(d.width);
  std::fill(grad_input.begin(), grad_input.end(), 0.0f);
  for (std::size_t oc = 0; oc < d.out_channels; ++oc) {
    for (long y = 0; y < H; ++y) {
      for (long x = 0; x < W; ++x) {
        const float g = grad_output[(oc * H + y) * W + x];
        for (std::size_t ic = 0; ic < d.in_channels; ++ic) {
          for (long ky = 0; ky < 3; ++ky) {
            for (long kx = 0; kx < 3; ++kx) {
              const long sy = y + ky - 1, sx = x + kx - 1;
              if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
              grad_input[(ic * H + sy) * W + sx] += g * weight[((oc * d.in_channels + ic) * 3 + ky) * 3 + kx];
            }
          }
        }
      }
    }
  }
}

void gaussian_log_density(std::span<const double> features, const GaussianComponents& comps,
                          std::span<double> out) {
  check_density(features, comps, out.size());
  const std::size_t n = features.size() / kFeatureDim;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < comps.count; ++j) {
      const double q = mahalanobis_sq(&features[i * kFeatureDim], &comps.means[j * kFeatureDim],
                                      &comps.chol[j * kFeatureDim * kFeatureDim]);
      out[i * comps.count + j] = comps.log_norm[j] - 0.5 * q;
    }
  }
}

}  // namespace serial

namespace omp {

// Row-slab formulation: for each tap the valid x-range is computed once so the
// innermost loop is a contiguous axpy over a row.
void conv3x3_forward(const ConvDims& d, std::span<const float> input, std::span<const float> weight,
                     std::span<const float> bias, std::span<float> output) {
  check_conv(d, input.size(), weight.size(), bias.size(), output.size());
  const long H = static_cast<long>(d.height), W = static_cast<long>(d.width);
  const long OC = static_cast<long>(d.out_channels);
  const float* in = input.data();
  const float* wt = weight.data();
  float* out = output.data();
#pragma omp parallel for schedule(static)
  for (long oc = 0; oc < OC; ++oc) {
    float* plane = out + oc * H * W;
    std::fill(plane, plane + H * W, bias[oc]);
    for (std::size_t ic = 0; ic < d.in_channels; ++ic) {
      const float* src = in + ic * H * W;
      const float* k = wt + (oc * d.in_channels + ic) * 9;
      for (long y = 0; y < H; ++y) {
        float* row = plane + y * W;
        for (long ky = 0; ky < 3; ++ky) {
          const long sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          const float* srow = src + sy * W;
          for (long kx = 0; kx < 3; ++kx) {
            const float w = k[ky * 3 + kx];
            const long x0 = std::max(0L, 1 - kx), x1 = std::min(W, W + 1 - kx);
            const float* s = srow + (kx - 1);
            for (long x = x0; x < x1; ++x) row[x] += w * s[x];
          }
        }
      }
    }
  }
}

void conv3x3_backward_input(const ConvDims& d, std::span<const float> grad_output,
                            std::span<const float> weight, std::span<float> grad_input) {
  check_conv(d, grad_input.size(), weight.size(), d.out_channels, grad_output.size());
  const long H = static_cast<long>(d.height), W = static_cast<long>(d.width);
  const long IC = static_cast<long>(d.in_channels);
  const float* go = grad_output.data();
  const float* wt = weight.data();
  float* gi = grad_input.data();
#pragma omp parallel for schedule(static)
  for (long ic = 0; ic < IC; ++ic) {
    float* plane = gi + ic * H * W;
    std::fill(plane, plane + H * W, 0.0f);
    for (std::size_t oc = 0; oc < d.out_channels; ++oc) {
      const float* g = go + oc * H * W;
      const float* k = wt + (oc * d.in_channels + ic) * 9;
      for (long y = 0; y < H; ++y) {
        const float* grow = g + y * W;
        for (long ky = 0; ky < 3; ++ky) {
          const long sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          float* drow = plane + sy * W;
          for (long kx = 0; kx < 3; ++kx) {
            const float w = k[ky * 3 + kx];
            // grad_input[sy][x + kx - 1] += g[y][x] * w
            const long x0 = std::max(0L, 1 - kx), x1 = std::min(W, W + 1 - kx);
            float* dst = drow + (kx - 1);
            for (long x = x0; x < x1; ++x) dst[x] += w * grow[x];
          }
        }
      }
    }
  }
}

void gaussian_log_density(std::span<const double> features, const GaussianComponents& comps,
                          std::span<double> out) {
  check_density(features, comps, out.size());
  const long n = static_cast<long>(features.size() / kFeatureDim);
  const std::size_t K = comps.count;
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const double* x = &features[static_cast<std::size_t>(i) * kFeatureDim];
    double* row = &out[static_cast<std::size_t>(i) * K];
    for (std::size_t j = 0; j < K; ++j) {
      row[j] = comps.log_norm[j] -
               0.5 * mahalanobis_sq(x, &comps.means[j * kFeatureDim], &comps.chol[j * kFeatureDim * kFeatureDim]);
    }
  }
}

}  // namespace omp

}  // namespace cse::kernels
