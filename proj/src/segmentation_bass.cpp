#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "cse/kernels.hpp"
#include "cse/segmentation.hpp"

namespace cse {

namespace {

constexpr std::size_t D = kernels::kFeatureDim;

Vec5 feature_row(std::span<const double> features, std::size_t i) {
  return Eigen::Map<const Vec5>(&features[i * D]);
}

Mat5 regularized(const Mat5& m) { return 0.5 * (m + m.transpose()) + kCovarianceJitter * Mat5::Identity(); }

// Cholesky factor of a symmetric matrix, adding jitter in decades until it succeeds.
Mat5 robust_cholesky(const Mat5& m) {
  double jitter = kCovarianceJitter;
  Mat5 sym = 0.5 * (m + m.transpose());
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::LLT<Mat5> llt(sym + jitter * Mat5::Identity());
    if (llt.info() == Eigen::Success) return llt.matrixL();
    jitter *= 10.0;
  }
  // Unreachable for finite input: diagonal dominance is reached long before.
  return (sym.diagonal().cwiseAbs().array() + 1.0).sqrt().matrix().asDiagonal();
}

}  // namespace

bool is_spd(const Mat5& m) {
  if (!m.isApprox(m.transpose(), 1e-9)) return false;
  Eigen::LLT<Mat5> llt(m);
  return llt.info() == Eigen::Success;
}

std::vector<double> pixel_features(const ImageRGB& image, double spatial_weight) {
  std::vector<double> f(image.pixel_count() * D);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      double* row = &f[(y * image.width + x) * D];
      row[0] = spatial_weight * (static_cast<double>(x) + 0.5) / static_cast<double>(image.width);
      row[1] = spatial_weight * (static_cast<double>(y) + 0.5) / static_cast<double>(image.height);
      for (std::size_t c = 0; c < 3; ++c) row[2 + c] = image.at(x, y, c);
    }
  }
  return f;
}

NiwPrior default_niw_prior(std::span<const double> features, double kappa, double dof, double psi_scale) {
  const std::size_t n = features.size() / D;
  if (n == 0) throw InputError("no features for prior");
  Vec5 mean = Vec5::Zero();
  for (std::size_t i = 0; i < n; ++i) mean += feature_row(features, i);
  mean /= static_cast<double>(n);
  Vec5 var = Vec5::Zero();
  for (std::size_t i = 0; i < n; ++i) var += (feature_row(features, i) - mean).cwiseAbs2();
  var /= static_cast<double>(n);
  NiwPrior prior;
  prior.mean = mean;
  prior.kappa = kappa;
  prior.dof = dof;
  prior.scale = (psi_scale * var).asDiagonal();
  return prior;
}

GmmState init_gmm_state(std::size_t components, std::vector<int> assignment, const NiwPrior& prior, double alpha) {
  if (components < 1) throw InputError("gmm needs at least one component");
  if (!(prior.dof > static_cast<double>(D) + 1.0)) throw InputError("NIW dof must exceed 6 in five dimensions");
  if (!(prior.kappa > 0.0) || !(alpha > 0.0)) throw InputError("NIW kappa and Dirichlet alpha must be positive");
  for (int z : assignment) {
    if (z < 0 || static_cast<std::size_t>(z) >= components) throw InputError("initial assignment out of range");
  }
  GmmState s;
  s.prior = prior;
  s.alpha = alpha;
  s.assignment = std::move(assignment);
  s.components.resize(components);
  for (auto& c : s.components) {
    c.mean = prior.mean;
    c.cov = regularized(prior.scale / (prior.dof - static_cast<double>(D) - 1.0));
    c.weight = 1.0 / static_cast<double>(components);
  }
  return s;
}

Mat5 sample_inverse_wishart(const Mat5& scale, double dof, std::mt19937_64& rng) {
  // Sigma = W^{-1}, W ~ Wishart(scale^{-1}, dof) = L A A^T L^T with L = chol(scale^{-1}).
  const Mat5 scale_inv = robust_cholesky(scale).triangularView<Eigen::Lower>().solve(Mat5::Identity());
  // scale^{-1} = Lc^{-T} Lc^{-1}; its Cholesky factor is needed, so form it explicitly.
  const Mat5 precision = scale_inv.transpose() * scale_inv;
  const Mat5 L = robust_cholesky(precision);
  Mat5 A = Mat5::Zero();
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < D; ++i) {
    std::chi_squared_distribution<double> chi2(dof - static_cast<double>(i));
    A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = std::sqrt(chi2(rng));
    for (std::size_t j = 0; j < i; ++j) A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = normal(rng);
  }
  const Mat5 LA = L * A;
  // Sigma = (LA LA^T)^{-1} = LA^{-T} LA^{-1}
  const Mat5 LA_inv = LA.triangularView<Eigen::Lower>().solve(Mat5::Identity());
  Mat5 sigma = LA_inv.transpose() * LA_inv;
  sigma = 0.5 * (sigma + sigma.transpose());
  double jitter = kCovarianceJitter;
  while (!is_spd(sigma)) {
    sigma += jitter * Mat5::Identity();
    jitter *= 10.0;
  }
  return sigma;
}

GmmState gibbs_sweep(GmmState state, std::span<const double> features, std::mt19937_64& rng) {
  const std::size_t n = features.size() / D;
  const std::size_t K = state.components.size();
  if (state.assignment.size() != n) throw InputError("assignment length does not match feature count");
  const NiwPrior& prior = state.prior;

  // Sufficient statistics per component.
  std::vector<double> count(K, 0.0);
  std::vector<Vec5> sum(K, Vec5::Zero());
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(state.assignment[i]);
    count[j] += 1.0;
    sum[j] += feature_row(features, i);
  }
  std::vector<Mat5> scatter(K, Mat5::Zero());
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(state.assignment[i]);
    const Vec5 d = feature_row(features, i) - sum[j] / count[j];
    scatter[j].noalias() += d * d.transpose();
  }

  // (1) parameters | Z. NIW conjugate update; an empty component draws from the prior.
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t j = 0; j < K; ++j) {
    const double nj = count[j];
    const double kappa_n = prior.kappa + nj;
    const double dof_n = prior.dof + nj;
    Vec5 mean_n = prior.mean;
    Mat5 scale_n = prior.scale;
    if (nj > 0.0) {
      const Vec5 xbar = sum[j] / nj;
      mean_n = (prior.kappa * prior.mean + nj * xbar) / kappa_n;
      const Vec5 dm = xbar - prior.mean;
      scale_n += scatter[j] + (prior.kappa * nj / kappa_n) * (dm * dm.transpose());
    }
    Mat5 cov = sample_inverse_wishart(regularized(scale_n), dof_n, rng);
    const Mat5 Lc = robust_cholesky(cov / kappa_n);
    Vec5 z;
    for (std::size_t d = 0; d < D; ++d) z(static_cast<Eigen::Index>(d)) = normal(rng);
    state.components[j].mean = mean_n + Lc * z;
    state.components[j].cov = cov;
  }

  // Weights | Z ~ Dirichlet(alpha + n_j) via normalised gamma draws.
  std::vector<double> g(K);
  double total = 0.0;
  for (std::size_t j = 0; j < K; ++j) {
    std::gamma_distribution<double> gamma(state.alpha + count[j], 1.0);
    total += g[j] = gamma(rng);
  }
  for (std::size_t j = 0; j < K; ++j) {
    state.components[j].weight = total > 0.0 ? g[j] / total : 1.0 / static_cast<double>(K);
  }

  // (2) Z | parameters.
  std::vector<double> means(K * D), chol(K * D * D), log_norm(K);
  for (std::size_t j = 0; j < K; ++j) {
    const auto& c = state.components[j];
    const Mat5 L = robust_cholesky(c.cov);
    Eigen::Map<Vec5> mean_out(&means[j * D]);
    Eigen::Map<Eigen::Matrix<double, 5, 5, Eigen::RowMajor>> chol_out(&chol[j * D * D]);
    mean_out = c.mean;
    chol_out = L;
    const double log_det = 2.0 * L.diagonal().array().log().sum();
    log_norm[j] = std::log(std::max(c.weight, 1e-300)) - 0.5 * log_det -
                  0.5 * static_cast<double>(D) * std::log(2.0 * std::numbers::pi);
  }
  std::vector<double> logp(n * K);
  kernels::omp::gaussian_log_density(features, {K, means, chol, log_norm}, logp);

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> p(K);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &logp[i * K];
    const double mx = *std::max_element(row, row + K);
    double acc = 0.0;
    for (std::size_t j = 0; j < K; ++j) p[j] = acc += std::exp(row[j] - mx);
    const double u = uniform(rng) * acc;
    const auto pick = static_cast<std::size_t>(std::upper_bound(p.begin(), p.end(), u) - p.begin());
    state.assignment[i] = static_cast<int>(std::min(pick, K - 1));
  }
  return state;
}

LabelMap bass_segment(const ImageRGB& image, const BassParams& params) {
  image.validate();
  if (params.init_components < 2) throw InputError("bass needs init_components >= 2");
  if (params.gibbs_sweeps < 1) throw InputError("bass needs at least one Gibbs sweep");
  if (!(params.spatial_weight > 0.0)) throw InputError("bass spatial weight must be positive");

  const auto features = pixel_features(image, params.spatial_weight);
  const NiwPrior prior = default_niw_prior(features, params.kappa0, params.nu0, params.psi_scale);

  // Initial Z: the most square grid with init_components cells.
  const auto K = static_cast<std::size_t>(params.init_components);
  std::size_t rows = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(K))));
  while (K % rows != 0) --rows;
  const ImageRGB& ref = image;
  const LabelMap init = rows >= 2 && K / rows <= ref.width && rows <= ref.height
                            ? grid_segment(ref, static_cast<int>(rows), static_cast<int>(K / rows))
                            : grid_segment(ref, 1, static_cast<int>(std::min(K, ref.width)));

  GmmState state = init_gmm_state(static_cast<std::size_t>(init.regions), init.labels, prior, params.alpha);
  std::mt19937_64 rng(params.seed);
  for (int s = 0; s < params.gibbs_sweeps; ++s) state = gibbs_sweep(std::move(state), features, rng);

  // Components left with no pixels vanish on relabelling (adaptive K); split
  // pieces are merged back down to at most init_components regions.
  const auto min_size = std::max<std::size_t>(
      1, static_cast<std::size_t>(params.min_region_fraction * static_cast<double>(image.pixel_count())));
  const std::vector<double> colour(image.pixels.begin(), image.pixels.end());
  return enforce_connectivity(state.assignment, image.width, image.height, min_size, K, colour, 3);
}

}  // namespace cse
