#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cse/attribution.hpp"
#include "cse/network.hpp"
#include "cse/obfuscation.hpp"
#include "cse/segmentation.hpp"
#include "json.hpp"

namespace cse {

/// Raised when the search is asked to flip an image the classifier does not flag.
class NotFlaggedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RegionScore {
  int region_id = 0;
  double score = 0.0;  // mean attribution over the region
  std::size_t pixel_count = 0;
};

/// Mean attribution per region, indexed by region id.
std::vector<RegionScore> region_scores(const AttributionMap& map, const LabelMap& labels);

/// Score-descending order; ties go to the smaller region, then the lower id.
std::vector<int> region_order(std::span<const RegionScore> scores);

struct ConfidenceReduction {
  int region_id = 0;
  /// p(original class | x) - p(original class | x with the region masked).
  double delta = 0.0;
  /// The masked image changes class, so the reduction is undefined and only delta is reported.
  bool flipped = false;
  std::size_t masked_class = 0;
};

ConfidenceReduction confidence_reduction(const NetworkModel& model, const ImageRGB& image, const LabelMap& labels,
                                         int region, const MaskOp& op);

struct SearchConfig {
  double threshold = 0.5;
  int budget = 10;
  MaskOp mask;
  /// Class index the search tries to flip away from.
  std::size_t flagged_class = 1;
  /// Re-sort the remaining regions by measured confidence drop after each step.
  bool rerank_by_confidence = false;
  /// Compute the per-region confidence reduction of every masked region.
  bool report_confidence = true;
};

struct CounterfactualResult {
  std::vector<int> masked_regions;  // in masking order
  int depth = 0;
  std::size_t original_class = 0;
  double original_score = 0.0;  // softmax of original_class on the clean image
  std::size_t final_class = 0;
  double final_score = 0.0;  // softmax of final_class on the last masked image
  double obfuscation_fraction = 0.0;
  bool success = false;
  std::vector<ConfidenceReduction> confidence;  // one per masked region when reported
  ImageRGB masked_image;
};

/// Masks cumulative prefixes of `order` (t = 1..budget) until the class
/// changes with new-class softmax above the threshold. The image is always
/// masked from the clean input, never compounded.
CounterfactualResult ordered_counterfactual(const NetworkModel& model, const ImageRGB& image, const LabelMap& labels,
                                            std::span<const int> order, const SearchConfig& config);

/// Attribution-ordered greedy search (or confidence-reranked when configured).
CounterfactualResult greedy_counterfactual(const NetworkModel& model, const ImageRGB& image, const LabelMap& labels,
                                           std::span<const RegionScore> scores, const SearchConfig& config);

inline constexpr int kBruteForceMaxRegions = 16;

/// Smallest region subset (lexicographically first among equals) whose masking
/// flips the class with new-class softmax above the threshold, searching
/// cardinalities 1..max_cardinality. Refuses label maps with more than 16 regions.
std::optional<std::vector<int>> brute_force_counterfactual(const NetworkModel& model, const ImageRGB& image,
                                                           const LabelMap& labels, double threshold,
                                                           int max_cardinality, const MaskOp& op,
                                                           std::size_t flagged_class = 1);

/// Re-renders the result's regions from the clean image with `op`.
ImageRGB render_obfuscated(const ImageRGB& image, const LabelMap& labels, const CounterfactualResult& result,
                           const MaskOp& op);

/// Renders at the image's own resolution from a model-resolution label map:
/// the masked regions are projected by nearest neighbour and dilated by one pixel.
ImageRGB render_obfuscated_projected(const ImageRGB& original, const LabelMap& model_labels,
                                     const CounterfactualResult& result, const MaskOp& op);

nlohmann::json to_json(const CounterfactualResult& result, const NetworkModel& model);

}  // namespace cse
