#pragma once

// Seeded synthetic "planted patch" corpus.
//
// Seed contract (shared with the training tooling): sample i of a corpus with
// seed s draws everything from std::mt19937_64(sample_seed(s, i)), in this order:
//   1. label: unsafe iff U(0,1) < unsafe_fraction
//   2. base texture: background colour, 3-5 Gaussian colour blobs, 0-2 muted
//      rectangles, per-pixel N(0, 0.015) noise; red is never the dominant channel
//   3. unsafe only: a saturated red patch (rectangle or ellipse) covering
//      10-25% of the image at a uniform random position
// Images are 64x64 and quantised to 8 bits.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cse/image.hpp"

namespace cse {

struct PatchSpec {
  std::size_t x = 0, y = 0, width = 0, height = 0;  // bounding box
  bool ellipse = false;
  std::array<float, 3> color{0.9f, 0.1f, 0.2f};

  bool contains(std::size_t px, std::size_t py) const;
  std::size_t area() const;
};

struct CorpusSample {
  ImageRGB image;
  bool unsafe = false;
  std::optional<PatchSpec> patch;
};

std::uint64_t sample_seed(std::uint64_t corpus_seed, std::uint64_t index);

ImageRGB base_texture(std::mt19937_64& rng, std::size_t side = 64);

/// Random patch geometry/colour: area fraction in [0.10, 0.25].
PatchSpec random_patch(std::mt19937_64& rng, std::size_t side = 64);

/// Paints the patch (with mild noise drawn from rng) and re-quantises to 8 bits.
void plant_patch(ImageRGB& image, const PatchSpec& patch, std::mt19937_64& rng);

CorpusSample make_sample(std::uint64_t corpus_seed, std::uint64_t index, double unsafe_fraction = 0.5,
                         std::size_t side = 64);

std::vector<CorpusSample> generate_corpus(std::uint64_t corpus_seed, std::size_t count, double unsafe_fraction = 0.5,
                                          std::size_t side = 64);

struct CorpusEntry {
  std::filesystem::path path;
  bool unsafe = false;
  std::optional<PatchSpec> patch;
};

/// Writes img_NNNNN.png files and index.json into `dir`.
void write_corpus(const std::vector<CorpusSample>& samples, const std::filesystem::path& dir,
                  std::uint64_t corpus_seed);

/// Reads index.json; paths are resolved relative to `dir`.
std::vector<CorpusEntry> read_corpus(const std::filesystem::path& dir);

/// Two flat colours split by a random straight line, with mild noise.
/// `truth` receives the 0/1 side of every pixel.
ImageRGB two_color_image(std::uint64_t seed, std::size_t side, std::vector<int>& truth);

/// Pixel agreement after mapping each region to the truth label it overlaps most.
double matched_agreement(std::span<const int> labels, std::span<const int> truth);

}  // namespace cse
