#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "cse/segmentation.hpp"

namespace cse {

namespace {

struct Lab {
  double l, a, b;
};

double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3 * delta * delta) + 4.0 / 29.0;
}

// sRGB (D65) -> CIELAB.
Lab to_lab(double r, double g, double b) {
  r = srgb_to_linear(r), g = srgb_to_linear(g), b = srgb_to_linear(b);
  const double x = (0.412453 * r + 0.357580 * g + 0.180423 * b) / 0.950456;
  const double y = 0.212671 * r + 0.715160 * g + 0.072169 * b;
  const double z = (0.019334 * r + 0.119193 * g + 0.950227 * b) / 1.088754;
  const double fx = lab_f(x), fy = lab_f(y), fz = lab_f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

struct Center {
  double l, a, b, x, y;
};

}  // namespace

LabelMap slic_segment(const ImageRGB& image, const SlicParams& params) {
  image.validate();
  const std::size_t W = image.width, H = image.height, N = W * H;
  if (params.n_segments < 2) throw InputError("slic needs n_segments >= 2");
  if (static_cast<std::size_t>(params.n_segments) > N) throw InputError("slic n_segments exceeds pixel count");
  if (!(params.compactness > 0.0)) throw InputError("slic compactness must be positive");
  if (params.iterations < 1) throw InputError("slic needs at least one iteration");

  std::vector<Lab> lab(N);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      lab[y * W + x] = to_lab(image.at(x, y, 0), image.at(x, y, 1), image.at(x, y, 2));

  // Regular seeding grid with at most n_segments cells.
  const double step = std::sqrt(static_cast<double>(N) / params.n_segments);
  auto cols = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(W / step)));
  auto rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(H / step)));
  while (rows * cols > static_cast<std::size_t>(params.n_segments)) (cols >= rows ? cols : rows) -= 1;
  cols = std::min(cols, W), rows = std::min(rows, H);

  auto gradient = [&](std::size_t x, std::size_t y) {
    auto d = [&](std::size_t p, std::size_t q) {
      const double dl = lab[p].l - lab[q].l, da = lab[p].a - lab[q].a, db = lab[p].b - lab[q].b;
      return dl * dl + da * da + db * db;
    };
    const std::size_t xl = x > 0 ? x - 1 : x, xr = x + 1 < W ? x + 1 : x;
    const std::size_t yu = y > 0 ? y - 1 : y, yd = y + 1 < H ? y + 1 : y;
    return d(y * W + xl, y * W + xr) + d(yu * W + x, yd * W + x);
  };

  std::vector<Center> centers;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      auto cx = static_cast<std::size_t>((static_cast<double>(c) + 0.5) * W / cols);
      auto cy = static_cast<std::size_t>((static_cast<double>(r) + 0.5) * H / rows);
      // Move to the lowest-gradient position in the 3x3 neighbourhood.
      std::size_t bx = cx, by = cy;
      double best = gradient(cx, cy);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const long nx = static_cast<long>(cx) + dx, ny = static_cast<long>(cy) + dy;
          if (nx < 0 || ny < 0 || nx >= static_cast<long>(W) || ny >= static_cast<long>(H)) continue;
          const double g = gradient(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny));
          if (g < best) best = g, bx = static_cast<std::size_t>(nx), by = static_cast<std::size_t>(ny);
        }
      const Lab& p = lab[by * W + bx];
      centers.push_back({p.l, p.a, p.b, static_cast<double>(bx), static_cast<double>(by)});
    }
  }

  const double grid_step = std::max(static_cast<double>(W) / cols, static_cast<double>(H) / rows);
  const double spatial_ratio = (params.compactness / grid_step) * (params.compactness / grid_step);
  const auto window = static_cast<long>(std::ceil(grid_step));

  std::vector<int> label(N, -1);
  std::vector<double> dist(N);
  for (int it = 0; it < params.iterations; ++it) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const Center& c = centers[k];
      const long x0 = std::max(0L, std::lround(c.x) - window), x1 = std::min<long>(W - 1, std::lround(c.x) + window);
      const long y0 = std::max(0L, std::lround(c.y) - window), y1 = std::min<long>(H - 1, std::lround(c.y) + window);
      for (long y = y0; y <= y1; ++y) {
        for (long x = x0; x <= x1; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x);
          const double dl = lab[p].l - c.l, da = lab[p].a - c.a, db = lab[p].b - c.b;
          const double dx = x - c.x, dy = y - c.y;
          const double d = dl * dl + da * da + db * db + spatial_ratio * (dx * dx + dy * dy);
          if (d < dist[p]) dist[p] = d, label[p] = static_cast<int>(k);
        }
      }
    }
    std::vector<std::array<double, 6>> acc(centers.size(), std::array<double, 6>{});
    for (std::size_t p = 0; p < N; ++p) {
      if (label[p] < 0) continue;
      auto& a = acc[static_cast<std::size_t>(label[p])];
      a[0] += lab[p].l, a[1] += lab[p].a, a[2] += lab[p].b;
      a[3] += static_cast<double>(p % W), a[4] += static_cast<double>(p / W), a[5] += 1.0;
    }
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const auto& a = acc[k];
      if (a[5] == 0.0) continue;
      centers[k] = {a[0] / a[5], a[1] / a[5], a[2] / a[5], a[3] / a[5], a[4] / a[5]};
    }
  }

  // Pixels outside every search window fall back to the nearest centre in space.
  for (std::size_t p = 0; p < N; ++p) {
    if (label[p] >= 0) continue;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const double dx = static_cast<double>(p % W) - centers[k].x, dy = static_cast<double>(p / W) - centers[k].y;
      if (dx * dx + dy * dy < best) best = dx * dx + dy * dy, label[p] = static_cast<int>(k);
    }
  }

  const auto min_size =
      static_cast<std::size_t>(params.min_size_factor * static_cast<double>(N) / static_cast<double>(centers.size()));
  std::vector<double> colour(N * 3);
  for (std::size_t p = 0; p < N; ++p) colour[p * 3] = lab[p].l, colour[p * 3 + 1] = lab[p].a, colour[p * 3 + 2] = lab[p].b;
  return enforce_connectivity(label, W, H, std::max<std::size_t>(1, min_size),
                              static_cast<std::size_t>(params.n_segments), colour, 3);
}

}  // namespace cse
