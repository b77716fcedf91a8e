#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <cstddef>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cse/image.hpp"
#include "json.hpp"

namespace cse {

/// Per-pixel region labels 0..regions-1. Regions are disjoint, nonempty and cover the image.
struct LabelMap {
  std::size_t width = 0;
  std::size_t height = 0;
  int regions = 0;
  std::vector<int> labels;  // y * width + x

  int at(std::size_t x, std::size_t y) const { return labels[y * width + x]; }
  std::size_t pixel_count() const { return width * height; }
  std::vector<std::size_t> region_sizes() const;
  /// Pixel mask (1 = inside) for the union of the given regions.
  std::vector<std::uint8_t> mask_of(std::span<const int> region_ids) const;

  /// Throws InputError on out-of-range or unused labels.
  void validate() const;

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

/// Splits every label into 4-connected pieces, merges pieces smaller than
/// `min_size` pixels into their largest adjacent piece, and renumbers labels
/// in raster order of first appearance. While more than `max_regions` pieces
/// remain, the smallest piece is merged regardless of size.
/// With per-pixel `features` (feature_dim values each), a piece joins the
/// neighbour whose mean feature is closest; ties go to the larger neighbour.
LabelMap enforce_connectivity(std::span<const int> raw, std::size_t width, std::size_t height,
                              std::size_t min_size, std::size_t max_regions = SIZE_MAX,
                              std::span<const double> features = {}, std::size_t feature_dim = 0);

/// Renumbers labels 0..K-1 in raster order of first appearance, without splitting.
LabelMap relabel_sequential(std::span<const int> raw, std::size_t width, std::size_t height);

// ---------------------------------------------------------------------------
// Uniform grid. Remainder rows/columns go to the last strips.
LabelMap grid_segment(const ImageRGB& image, int rows, int cols);

// ---------------------------------------------------------------------------
// SLIC in CIELAB.
struct SlicParams {
  int n_segments = 25;
  double compactness = 1.0;
  std::uint64_t seed = 0;
  int iterations = 10;
  /// Pieces smaller than this fraction of the nominal superpixel size are merged.
  double min_size_factor = 0.5;
};

LabelMap slic_segment(const ImageRGB& image, const SlicParams& params);

// ---------------------------------------------------------------------------
// Bayesian Gaussian mixture over (location, colour) features, fit by Gibbs sampling.
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

struct NiwPrior {
  Vec5 mean = Vec5::Zero();
  double kappa = 0.1;
  double dof = 10.0;
  Mat5 scale = Mat5::Identity();
};

struct GmmComponent {
  Vec5 mean = Vec5::Zero();
  Mat5 cov = Mat5::Identity();
  double weight = 0.0;
};

struct GmmState {
  std::vector<GmmComponent> components;
  NiwPrior prior;
  double alpha = 1.0;
  std::vector<int> assignment;  // z_i, one per feature row
};

inline constexpr double kCovarianceJitter = 1e-6;

/// N x 5 row-major features (x/W * spatial_weight, y/H * spatial_weight, r, g, b)
/// with pixel-centre coordinates.
std::vector<double> pixel_features(const ImageRGB& image, double spatial_weight = 1.0);

/// prior mean = feature mean, scale = psi_scale * diag(feature covariance).
NiwPrior default_niw_prior(std::span<const double> features, double kappa = 0.1, double dof = 10.0,
                           double psi_scale = 0.1);

GmmState init_gmm_state(std::size_t components, std::vector<int> assignment, const NiwPrior& prior, double alpha);

/// One sweep: resample (mean, cov) of every component from its NIW posterior
/// and the weights from their Dirichlet posterior given the current assignment,
/// then resample every assignment from p(z_i = j) ∝ weight_j N(x_i | mean_j, cov_j).
GmmState gibbs_sweep(GmmState state, std::span<const double> features, std::mt19937_64& rng);

/// Draws Sigma ~ IW(scale, dof) by the Bartlett decomposition, jittered until Cholesky succeeds.
Mat5 sample_inverse_wishart(const Mat5& scale, double dof, std::mt19937_64& rng);

bool is_spd(const Mat5& m);

struct BassParams {
  int init_components = 25;
  double alpha = 1.0;
  double kappa0 = 0.1;
  double nu0 = 10.0;
  double psi_scale = 0.1;
  double spatial_weight = 1.0;
  int gibbs_sweeps = 100;
  std::uint64_t seed = 0;
  double min_region_fraction = 0.0025;
};

LabelMap bass_segment(const ImageRGB& image, const BassParams& params);

// ---------------------------------------------------------------------------
/// 16-bit grayscale PNG of labels plus `<path>.json` sidecar {K, seed, method, params}.
void save_label_map(const LabelMap& labels, const std::filesystem::path& png_path, nlohmann::json sidecar);
LabelMap load_label_map(const std::filesystem::path& png_path);

}  // namespace cse
