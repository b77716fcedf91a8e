#pragma once

// Data-parallel inner loops. Every kernel has a plain serial reference in
// `kernels::serial` and an OpenMP version in `kernels::omp`; the library calls
// the OpenMP versions, tests hold them to the serial ones, and bench/ times both.

#include <cstddef>
#include <span>

namespace cse::kernels {

/// 3x3 convolution, stride 1, zero padding 1 (output spatial size == input).
struct ConvDims {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t height;
  std::size_t width;
};

/// Component parameters for the per-pixel Gaussian log-density kernel.
/// `chol` holds K lower-triangular 5x5 Cholesky factors, row-major, 25 doubles each.
/// `log_norm[j]` = log(weight_j) - 0.5*log|Sigma_j| - 2.5*log(2*pi).
struct GaussianComponents {
  std::size_t count;
  std::span<const double> means;     // count * 5
  std::span<const double> chol;      // count * 25
  std::span<const double> log_norm;  // count
};

inline constexpr std::size_t kFeatureDim = 5;

namespace serial {

void conv3x3_forward(const ConvDims& d, std::span<const float> input, std::span<const float> weight,
                     std::span<const float> bias, std::span<float> output);

void conv3x3_backward_input(const ConvDims& d, std::span<const float> grad_output,
                            std::span<const float> weight, std::span<float> grad_input);

/// out[i*count + j] = log(weight_j * N(x_i | mu_j, Sigma_j)).
void gaussian_log_density(std::span<const double> features, const GaussianComponents& comps,
                          std::span<double> out);

}  // namespace serial

namespace omp {

void conv3x3_forward(const ConvDims& d, std::span<const float> input, std::span<const float> weight,
                     std::span<const float> bias, std::span<float> output);

void conv3x3_backward_input(const ConvDims& d, std::span<const float> grad_output,
                            std::span<const float> weight, std::span<float> grad_input);

void gaussian_log_density(std::span<const double> features, const GaussianComponents& comps,
                          std::span<double> out);

}  // namespace omp

}  // namespace cse::kernels
