#include <algorithm>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "cse/segmentation.hpp"

namespace cse {

std::vector<std::size_t> LabelMap::region_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(std::max(regions, 0)), 0);
  for (int l : labels) ++sizes.at(static_cast<std::size_t>(l));
  return sizes;
}

std::vector<std::uint8_t> LabelMap::mask_of(std::span<const int> region_ids) const {
  std::vector<std::uint8_t> selected(static_cast<std::size_t>(regions), 0);
  for (int r : region_ids) {
    if (r < 0 || r >= regions) throw InputError("region id " + std::to_string(r) + " out of range");
    selected[static_cast<std::size_t>(r)] = 1;
  }
  std::vector<std::uint8_t> mask(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = selected[static_cast<std::size_t>(labels[i])];
  return mask;
}

void LabelMap::validate() const {
  if (labels.size() != width * height) throw InputError("label map length does not match its dimensions");
  if (regions < 1) throw InputError("label map has no regions");
  std::vector<char> seen(static_cast<std::size_t>(regions), 0);
  for (int l : labels) {
    if (l < 0 || l >= regions) throw InputError("label " + std::to_string(l) + " out of range");
    seen[static_cast<std::size_t>(l)] = 1;
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw InputError("label map has an empty region");
}

LabelMap relabel_sequential(std::span<const int> raw, std::size_t width, std::size_t height) {
  if (raw.size() != width * height) throw InputError("label buffer length does not match dimensions");
  LabelMap out{width, height, 0, std::vector<int>(raw.size())};
  std::unordered_map<int, int> remap;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(raw[i], out.regions);
    if (inserted) ++out.regions;
    out.labels[i] = it->second;
  }
  return out;
}

namespace {

int find_root(std::vector<int>& parent, int v) {
  while (parent[static_cast<std::size_t>(v)] != v) {
    parent[static_cast<std::size_t>(v)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
    v = parent[static_cast<std::size_t>(v)];
  }
  return v;
}

}  // namespace

LabelMap enforce_connectivity(std::span<const int> raw, std::size_t width, std::size_t height,
                              std::size_t min_size, std::size_t max_regions, std::span<const double> features,
                              std::size_t feature_dim) {
  if (raw.size() != width * height) throw InputError("label buffer length does not match dimensions");
  const std::size_t n = raw.size();
  if (!features.empty() && (feature_dim == 0 || features.size() != n * feature_dim)) {
    throw InputError("connectivity features do not match the label buffer");
  }

  // 4-connected components by flood fill in raster order.
  std::vector<int> comp(n, -1);
  std::vector<std::size_t> comp_size;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    const int id = static_cast<int>(comp_size.size());
    comp_size.push_back(0);
    comp[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++comp_size.back();
      const std::size_t x = p % width, y = p / width;
      auto visit = [&](std::size_t q) {
        if (comp[q] < 0 && raw[q] == raw[p]) {
          comp[q] = id;
          stack.push_back(q);
        }
      };
      if (x > 0) visit(p - 1);
      if (x + 1 < width) visit(p + 1);
      if (y > 0) visit(p - width);
      if (y + 1 < height) visit(p + width);
    }
  }

  const std::size_t ncomp = comp_size.size();
  std::vector<int> parent(ncomp);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::vector<std::size_t>> members(ncomp);
  for (std::size_t p = 0; p < n; ++p) members[static_cast<std::size_t>(comp[p])].push_back(p);
  std::vector<double> feature_sum(features.empty() ? 0 : ncomp * feature_dim, 0.0);
  for (std::size_t p = 0; p < (features.empty() ? 0 : n); ++p)
    for (std::size_t k = 0; k < feature_dim; ++k)
      feature_sum[static_cast<std::size_t>(comp[p]) * feature_dim + k] += features[p * feature_dim + k];
  auto feature_gap = [&](std::size_t a, std::size_t b) {
    double d = 0.0;
    const auto na = static_cast<double>(members[a].size()), nb = static_cast<double>(members[b].size());
    for (std::size_t k = 0; k < feature_dim; ++k) {
      const double diff = feature_sum[a * feature_dim + k] / na - feature_sum[b * feature_dim + k] / nb;
      d += diff * diff;
    }
    return d;
  };

  // Repeatedly absorb the smallest undersized piece (or, while over the region
  // cap, the smallest piece of any size) into a neighbour: the one with the
  // closest mean feature when features are given, else the largest.
  std::size_t live = ncomp;
  for (;;) {
    int victim = -1;
    for (std::size_t c = 0; c < ncomp; ++c) {
      if (parent[c] != static_cast<int>(c)) continue;
      if (members[c].size() >= min_size && live <= max_regions) continue;
      if (victim < 0 || members[c].size() < members[static_cast<std::size_t>(victim)].size()) {
        victim = static_cast<int>(c);
      }
    }
    if (victim < 0) break;
    const auto v = static_cast<std::size_t>(victim);
    int best = -1;
    double best_gap = 0.0;
    for (const std::size_t p : members[v]) {
      const std::size_t x = p % width, y = p / width;
      auto consider = [&](std::size_t q) {
        const int r = find_root(parent, comp[q]);
        if (r == victim || r == best) return;
        const auto ru = static_cast<std::size_t>(r);
        const double gap = features.empty() ? 0.0 : feature_gap(v, ru);
        const auto rs = members[ru].size();
        if (best >= 0) {
          const auto bs = members[static_cast<std::size_t>(best)].size();
          if (gap > best_gap || (gap == best_gap && (rs < bs || (rs == bs && r > best)))) return;
        }
        best = r;
        best_gap = gap;
      };
      if (x > 0) consider(p - 1);
      if (x + 1 < width) consider(p + 1);
      if (y > 0) consider(p - width);
      if (y + 1 < height) consider(p + width);
    }
    if (best < 0) break;  // whole image is a single piece
    parent[v] = best;
    --live;
    for (std::size_t k = 0; k < feature_dim && !features.empty(); ++k)
      feature_sum[static_cast<std::size_t>(best) * feature_dim + k] += feature_sum[v * feature_dim + k];
    auto& dst = members[static_cast<std::size_t>(best)];
    auto& src = members[static_cast<std::size_t>(victim)];
    dst.insert(dst.end(), src.begin(), src.end());
    src.clear();
    src.shrink_to_fit();
  }

  std::vector<int> merged(n);
  for (std::size_t p = 0; p < n; ++p) merged[p] = find_root(parent, comp[p]);
  return relabel_sequential(merged, width, height);
}

LabelMap grid_segment(const ImageRGB& image, int rows, int cols) {
  if (rows < 1 || cols < 1 || rows * cols < 2) throw InputError("grid needs rows*cols >= 2");
  if (static_cast<std::size_t>(rows) > image.height || static_cast<std::size_t>(cols) > image.width) {
    throw InputError("grid has more strips than image rows/columns");
  }
  // Strip i spans [floor-based start, next start): base size everywhere, the
  // remainder handed out one extra pixel to each of the last strips.
  auto strip_of = [](std::size_t pos, std::size_t extent, std::size_t strips) {
    const std::size_t base = extent / strips, rem = extent % strips;
    const std::size_t small_strips = strips - rem;
    const std::size_t small_extent = small_strips * base;
    if (pos < small_extent) return pos / base;
    return small_strips + (pos - small_extent) / (base + 1);
  };
  LabelMap out{image.width, image.height, rows * cols, std::vector<int>(image.pixel_count())};
  for (std::size_t y = 0; y < image.height; ++y) {
    const auto r = strip_of(y, image.height, static_cast<std::size_t>(rows));
    for (std::size_t x = 0; x < image.width; ++x) {
      const auto c = strip_of(x, image.width, static_cast<std::size_t>(cols));
      out.labels[y * image.width + x] = static_cast<int>(r * static_cast<std::size_t>(cols) + c);
    }
  }
  return out;
}

void save_label_map(const LabelMap& labels, const std::filesystem::path& png_path, nlohmann::json sidecar) {
  labels.validate();
  if (labels.regions > 65535) throw InputError("too many regions for a 16-bit label PNG");
  std::vector<std::uint16_t> values(labels.labels.begin(), labels.labels.end());
  save_png_gray16(values, labels.width, labels.height, png_path);
  sidecar["K"] = labels.regions;
  std::ofstream out(png_path.string() + ".json");
  if (!out) throw InputError("cannot write label sidecar for " + png_path.string());
  out << sidecar.dump(2) << '\n';
}

LabelMap load_label_map(const std::filesystem::path& png_path) {
  std::size_t w = 0, h = 0;
  const auto values = load_png_gray16(png_path, w, h);
  LabelMap out{w, h, 0, std::vector<int>(values.begin(), values.end())};
  out.regions = values.empty() ? 0 : *std::max_element(values.begin(), values.end()) + 1;
  out.validate();
  return out;
}

}  // namespace cse
