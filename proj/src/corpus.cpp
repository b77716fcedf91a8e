#include "cse/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "json.hpp"

namespace cse {

bool PatchSpec::contains(std::size_t px, std::size_t py) const {
  if (px < x || py < y || px >= x + width || py >= y + height) return false;
  if (!ellipse) return true;
  const double cx = static_cast<double>(x) + 0.5 * static_cast<double>(width);
  const double cy = static_cast<double>(y) + 0.5 * static_cast<double>(height);
  const double dx = (static_cast<double>(px) + 0.5 - cx) / (0.5 * static_cast<double>(width));
  const double dy = (static_cast<double>(py) + 0.5 - cy) / (0.5 * static_cast<double>(height));
  return dx * dx + dy * dy <= 1.0;
}

std::size_t PatchSpec::area() const {
  std::size_t n = 0;
  for (std::size_t py = y; py < y + height; ++py)
    for (std::size_t px = x; px < x + width; ++px) n += contains(px, py);
  return n;
}

std::uint64_t sample_seed(std::uint64_t corpus_seed, std::uint64_t index) {
  // splitmix64 over the pair
  std::uint64_t z = corpus_seed * 0x9E3779B97F4A7C15ull + index + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Keeps red from dominating so that only the planted patch reads as "red".
void suppress_red(float& r, float g, float b) { r = std::min(r, 0.5f * (g + b) + 0.05f); }

}  // namespace

ImageRGB base_texture(std::mt19937_64& rng, std::size_t side) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  std::array<double, 3> bg{};
  bg[1] = uni(0.3, 0.7);
  bg[2] = uni(0.3, 0.7);
  bg[0] = uni(0.15, std::min(bg[1], bg[2]));

  std::vector<std::array<double, 3>> field(side * side, bg);

  const int blobs = 3 + static_cast<int>(u(rng) * 3.0);
  for (int k = 0; k < blobs; ++k) {
    const double cx = uni(0, static_cast<double>(side)), cy = uni(0, static_cast<double>(side));
    const double sigma = uni(6.0, 16.0);
    const std::array<double, 3> delta{uni(-0.15, 0.1), uni(-0.2, 0.2), uni(-0.2, 0.2)};
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        const double w = std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
        for (std::size_t c = 0; c < 3; ++c) field[y * side + x][c] += w * delta[c];
      }
  }

  const int rects = static_cast<int>(u(rng) * 3.0);
  for (int k = 0; k < rects; ++k) {
    const auto w = static_cast<std::size_t>(uni(8.0, 20.0)), h = static_cast<std::size_t>(uni(8.0, 20.0));
    const auto x0 = static_cast<std::size_t>(uni(0.0, static_cast<double>(side - w)));
    const auto y0 = static_cast<std::size_t>(uni(0.0, static_cast<double>(side - h)));
    const double g = uni(0.2, 0.8), b = uni(0.2, 0.8);
    const std::array<double, 3> col{uni(0.1, std::min(g, b)), g, b};
    for (std::size_t y = y0; y < y0 + h; ++y)
      for (std::size_t x = x0; x < x0 + w; ++x) field[y * side + x] = col;
  }

  std::normal_distribution<double> noise(0.0, 0.015);
  ImageRGB img(side, side);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const auto& f = field[y * side + x];
      float r = clamp01(f[0] + noise(rng)), g = clamp01(f[1] + noise(rng)), b = clamp01(f[2] + noise(rng));
      suppress_red(r, g, b);
      img.at(x, y, 0) = r, img.at(x, y, 1) = g, img.at(x, y, 2) = b;
    }
  quantize8(img);
  return img;
}

PatchSpec random_patch(std::mt19937_64& rng, std::size_t side) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  PatchSpec p;
  const double area = uni(0.10, 0.25) * static_cast<double>(side * side);
  const double aspect = uni(0.6, 1.6);
  p.ellipse = u(rng) < 0.5;
  const double box_area = p.ellipse ? area * 4.0 / std::numbers::pi : area;
  const double max_side = static_cast<double>(side) - 2.0;
  p.width = static_cast<std::size_t>(std::clamp(std::round(std::sqrt(box_area * aspect)), 4.0, max_side));
  p.height = static_cast<std::size_t>(
      std::clamp(std::round(box_area / static_cast<double>(p.width)), 4.0, max_side));
  p.x = static_cast<std::size_t>(u(rng) * static_cast<double>(side - p.width + 1));
  p.y = static_cast<std::size_t>(u(rng) * static_cast<double>(side - p.height + 1));
  p.x = std::min(p.x, side - p.width), p.y = std::min(p.y, side - p.height);
  p.color = {static_cast<float>(uni(0.8, 0.95)), static_cast<float>(uni(0.05, 0.25)),
             static_cast<float>(uni(0.1, 0.45))};
  return p;
}

void plant_patch(ImageRGB& image, const PatchSpec& patch, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 0.015);
  for (std::size_t y = patch.y; y < patch.y + patch.height && y < image.height; ++y)
    for (std::size_t x = patch.x; x < patch.x + patch.width && x < image.width; ++x) {
      if (!patch.contains(x, y)) continue;
      for (std::size_t c = 0; c < 3; ++c) image.at(x, y, c) = quantize8(clamp01(patch.color[c] + noise(rng)));
    }
}

CorpusSample make_sample(std::uint64_t corpus_seed, std::uint64_t index, double unsafe_fraction, std::size_t side) {
  std::mt19937_64 rng(sample_seed(corpus_seed, index));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CorpusSample s;
  s.unsafe = u(rng) < unsafe_fraction;
  s.image = base_texture(rng, side);
  if (s.unsafe) {
    s.patch = random_patch(rng, side);
    plant_patch(s.image, *s.patch, rng);
  }
  return s;
}

std::vector<CorpusSample> generate_corpus(std::uint64_t corpus_seed, std::size_t count, double unsafe_fraction,
                                          std::size_t side) {
  std::vector<CorpusSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_sample(corpus_seed, i, unsafe_fraction, side));
  return out;
}

void write_corpus(const std::vector<CorpusSample>& samples, const std::filesystem::path& dir,
                  std::uint64_t corpus_seed) {
  std::filesystem::create_directories(dir);
  nlohmann::json index = {{"seed", corpus_seed}, {"count", samples.size()}, {"images", nlohmann::json::array()}};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.png", i);
    save_image(samples[i].image, dir / name);
    nlohmann::json e = {{"file", name}, {"label", samples[i].unsafe ? "unsafe" : "safe"}};
    if (const auto& p = samples[i].patch) {
      e["patch"] = {{"x", p->x}, {"y", p->y}, {"width", p->width}, {"height", p->height},
                    {"shape", p->ellipse ? "ellipse" : "rect"}, {"color", p->color}};
    }
    index["images"].push_back(std::move(e));
  }
  std::ofstream out(dir / "index.json");
  if (!out) throw InputError("cannot write corpus index in " + dir.string());
  out << index.dump(1) << '\n';
}

std::vector<CorpusEntry> read_corpus(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw InputError("no corpus index.json in " + dir.string());
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed corpus index: " + std::string(e.what()));
  }
  std::vector<CorpusEntry> out;
  for (const auto& e : index.at("images")) {
    CorpusEntry ce;
    ce.path = dir / e.at("file").get<std::string>();
    ce.unsafe = e.at("label").get<std::string>() == "unsafe";
    if (e.contains("patch")) {
      const auto& p = e["patch"];
      PatchSpec ps;
      ps.x = p.at("x"), ps.y = p.at("y"), ps.width = p.at("width"), ps.height = p.at("height");
      ps.ellipse = p.at("shape") == "ellipse";
      ps.color = p.at("color").get<std::array<float, 3>>();
      ce.patch = ps;
    }
    out.push_back(std::move(ce));
  }
  if (out.empty()) throw InputError("corpus " + dir.string() + " is empty");
  return out;
}

ImageRGB two_color_image(std::uint64_t seed, std::size_t side, std::vector<int>& truth) {
  std::mt19937_64 rng(sample_seed(seed, 0x2C));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::array<double, 3> a{}, b{};
  do {
    for (std::size_t c = 0; c < 3; ++c) a[c] = u(rng), b[c] = u(rng);
  } while (std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]) < 0.4);
  // Boundary line through a point in the central half, at a random angle.
  const double s = static_cast<double>(side);
  const double px = s * (0.25 + 0.5 * u(rng)), py = s * (0.25 + 0.5 * u(rng));
  const double theta = u(rng) * std::numbers::pi;
  const double nx = std::cos(theta), ny = std::sin(theta);
  std::normal_distribution<double> noise(0.0, 0.01);
  ImageRGB img(side, side);
  truth.assign(side * side, 0);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const bool side_b = (static_cast<double>(x) + 0.5 - px) * nx + (static_cast<double>(y) + 0.5 - py) * ny > 0.0;
      truth[y * side + x] = side_b;
      const auto& col = side_b ? b : a;
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = quantize8(clamp01(col[c] + noise(rng)));
    }
  return img;
}

double matched_agreement(std::span<const int> labels, std::span<const int> truth) {
  if (labels.size() != truth.size() || labels.empty()) throw InputError("label/truth size mismatch");
  std::map<int, std::map<int, std::size_t>> overlap;
  for (std::size_t i = 0; i < labels.size(); ++i) ++overlap[labels[i]][truth[i]];
  std::size_t agree = 0;
  for (const auto& [region, counts] : overlap) {
    std::size_t best = 0;
    for (const auto& [t, n] : counts) best = std::max(best, n);
    agree += best;
  }
  return static_cast<double>(agree) / static_cast<double>(labels.size());
}

}  // namespace cse
