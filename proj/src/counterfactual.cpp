#include "cse/counterfactual.hpp"

#include <algorithm>
#include <numeric>

namespace cse {

namespace {

struct Prediction {
  std::size_t cls = 0;
  Tensor probs;
};

Prediction predict(const NetworkModel& model, const ImageRGB& image) {
  Tensor p = softmax(logits(model, to_tensor(image)));
  return {argmax(p), std::move(p)};
}

double masked_fraction(const LabelMap& labels, std::span<const int> regions) {
  const auto sizes = labels.region_sizes();
  std::size_t n = 0;
  for (int r : regions) n += sizes.at(static_cast<std::size_t>(r));
  return static_cast<double>(n) / static_cast<double>(labels.pixel_count());
}

void check_inputs(const ImageRGB& image, const LabelMap& labels) {
  if (labels.width != image.width || labels.height != image.height) {
    throw InputError("label map and image sizes differ");
  }
  labels.validate();
}

}  // namespace

std::vector<RegionScore> region_scores(const AttributionMap& map, const LabelMap& labels) {
  if (map.width != labels.width || map.height != labels.height) {
    throw InputError("attribution map and label map shapes differ");
  }
  labels.validate();
  std::vector<double> sum(static_cast<std::size_t>(labels.regions), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(labels.regions), 0);
  for (std::size_t p = 0; p < labels.labels.size(); ++p) {
    const auto r = static_cast<std::size_t>(labels.labels[p]);
    sum[r] += map.values[p];
    ++count[r];
  }
  std::vector<RegionScore> out;
  out.reserve(sum.size());
  for (std::size_t r = 0; r < sum.size(); ++r) {
    out.push_back({static_cast<int>(r), sum[r] / static_cast<double>(count[r]), count[r]});
  }
  return out;
}

std::vector<int> region_order(std::span<const RegionScore> scores) {
  std::vector<RegionScore> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), [](const RegionScore& a, const RegionScore& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.pixel_count != b.pixel_count) return a.pixel_count < b.pixel_count;
    return a.region_id < b.region_id;
  });
  std::vector<int> order;
  order.reserve(sorted.size());
  for (const auto& s : sorted) order.push_back(s.region_id);
  return order;
}

ConfidenceReduction confidence_reduction(const NetworkModel& model, const ImageRGB& image, const LabelMap& labels,
                                         int region, const MaskOp& op) {
  check_inputs(image, labels);
  const Prediction clean = predict(model, image);
  const int regions[] = {region};
  const Prediction masked = predict(model, apply_mask(image, labels, regions, op));
  ConfidenceReduction cr;
  cr.region_id = region;
  cr.delta = static_cast<double>(clean.probs[clean.cls]) - masked.probs[clean.cls];
  cr.flipped = masked.cls != clean.cls;
  cr.masked_class = masked.cls;
  return cr;
}

CounterfactualResult ordered_counterfactual(const NetworkModel& model, const ImageRGB& image, const LabelMap& labels,
                                            std::span<const int> order, const SearchConfig& config) {
  check_inputs(image, labels);
  if (config.budget < 1) throw InputError("search budget must be >= 1");
  const Prediction clean = predict(model, image);
  if (clean.cls != config.flagged_class) {
    throw NotFlaggedError("image is classified as '" + model.class_names.at(clean.cls) + "', not flagged");
  }

  CounterfactualResult res;
  res.original_class = clean.cls;
  res.original_score = clean.probs[clean.cls];
  res.final_class = clean.cls;
  res.final_score = res.original_score;
  res.masked_image = image;

  const auto steps = std::min<std::size_t>(static_cast<std::size_t>(config.budget), order.size());
  for (std::size_t t = 1; t <= steps; ++t) {
    const auto prefix = order.first(t);
    ImageRGB masked = apply_mask(image, labels, prefix, config.mask);
    const Prediction p = predict(model, masked);
    res.masked_regions.assign(prefix.begin(), prefix.end());
    res.final_class = p.cls;
    res.final_score = p.probs[p.cls];
    res.masked_image = std::move(masked);
    if (p.cls != res.original_class && p.probs[p.cls] > config.threshold) {
      res.success = true;
      res.depth = static_cast<int>(t);
      break;
    }
  }
  if (!res.success) res.depth = config.budget;
  res.obfuscation_fraction = masked_fraction(labels, res.masked_regions);

  if (config.report_confidence) {
    for (int r : res.masked_regions) res.confidence.push_back(confidence_reduction(model, image, labels, r, config.mask));
  }
  return res;
}

namespace {

// Each step appends the remaining region whose addition lowers the original
// class probability the most (ties: earlier in attribution order).
std::vector<int> confidence_reranked_order(const NetworkModel& model, const ImageRGB& image, const LabelMap& labels,
                                           std::vector<int> remaining, const SearchConfig& config,
                                           std::size_t original) {
  std::vector<int> order;
  const auto steps = std::min<std::size_t>(static_cast<std::size_t>(config.budget), remaining.size());
  for (std::size_t t = 0; t < steps; ++t) {
    std::size_t best = 0;
    double best_p = 2.0;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      std::vector<int> trial = order;
      trial.push_back(remaining[i]);
      const Prediction p = predict(model, apply_mask(image, labels, trial, config.mask));
      if (p.probs[original] < best_p) best_p = p.probs[original], best = i;
    }
    order.push_back(remaining[best]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
    if (best_p < config.threshold) break;
  }
  return order;
}

}  // namespace

CounterfactualResult greedy_counterfactual(const NetworkModel& model, const ImageRGB& image, const LabelMap& labels,
                                           std::span<const RegionScore> scores, const SearchConfig& config) {
  if (scores.size() != static_cast<std::size_t>(labels.regions)) {
    throw InputError("region scores were not computed from this label map");
  }
  std::vector<int> order = region_order(scores);
  if (config.rerank_by_confidence) {
    const Prediction clean = predict(model, image);
    if (clean.cls != config.flagged_class) throw NotFlaggedError("image is not flagged");
    order = confidence_reranked_order(model, image, labels, std::move(order), config, clean.cls);
  }
  return ordered_counterfactual(model, image, labels, order, config);
}

std::optional<std::vector<int>> brute_force_counterfactual(const NetworkModel& model, const ImageRGB& image,
                                                           const LabelMap& labels, double threshold,
                                                           int max_cardinality, const MaskOp& op,
                                                           std::size_t flagged_class) {
  check_inputs(image, labels);
  if (labels.regions > kBruteForceMaxRegions) {
    throw InputError("brute-force oracle refuses K = " + std::to_string(labels.regions) + " > 16");
  }
  const Prediction clean = predict(model, image);
  if (clean.cls != flagged_class) throw NotFlaggedError("image is not flagged");

  const int K = labels.regions;
  const int kmax = std::min(max_cardinality, K);
  for (int k = 1; k <= kmax; ++k) {
    // Lexicographic k-combinations of 0..K-1.
    std::vector<int> comb(static_cast<std::size_t>(k));
    std::iota(comb.begin(), comb.end(), 0);
    for (;;) {
      const Prediction p = predict(model, apply_mask(image, labels, comb, op));
      if (p.cls != clean.cls && p.probs[p.cls] > threshold) return comb;
      int i = k - 1;
      while (i >= 0 && comb[static_cast<std::size_t>(i)] == K - k + i) --i;
      if (i < 0) break;
      ++comb[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < k; ++j) comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return std::nullopt;
}

ImageRGB render_obfuscated(const ImageRGB& image, const LabelMap& labels, const CounterfactualResult& result,
                           const MaskOp& op) {
  if (!result.success) throw InputError("cannot render an unsuccessful counterfactual");
  check_inputs(image, labels);
  return apply_mask(image, labels, result.masked_regions, op);
}

ImageRGB render_obfuscated_projected(const ImageRGB& original, const LabelMap& model_labels,
                                     const CounterfactualResult& result, const MaskOp& op) {
  if (!result.success) throw InputError("cannot render an unsuccessful counterfactual");
  if (original.width == model_labels.width && original.height == model_labels.height) {
    return render_obfuscated(original, model_labels, result, op);
  }
  const auto mask = model_labels.mask_of(result.masked_regions);
  const auto projected =
      project_mask(mask, model_labels.width, model_labels.height, original.width, original.height, 1);
  return apply_mask(original, projected, op);
}

nlohmann::json to_json(const CounterfactualResult& r, const NetworkModel& model) {
  nlohmann::json cr = nlohmann::json::array();
  for (const auto& c : r.confidence) {
    nlohmann::json e = {{"region", c.region_id}, {"delta", c.delta}, {"flipped", c.flipped}};
    e["confidence_reduction"] = c.flipped ? nlohmann::json(nullptr) : nlohmann::json(c.delta);
    cr.push_back(std::move(e));
  }
  return {
      {"region_order", r.masked_regions},
      {"depth", r.depth},
      {"success", r.success},
      {"original_class", model.class_names.at(r.original_class)},
      {"original_score", r.original_score},
      {"final_class", model.class_names.at(r.final_class)},
      {"final_score", r.final_score},
      {"obfuscation_fraction", r.obfuscation_fraction},
      {"confidence", std::move(cr)},
  };
}

}  // namespace cse
