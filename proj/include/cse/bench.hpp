#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cse/attribution.hpp"
#include "cse/corpus.hpp"
#include "cse/counterfactual.hpp"
#include "cse/segmentation.hpp"
#include "json.hpp"

namespace cse {

struct SegmenterConfig {
  std::string method = "bass";  // grid | slic | bass
  int grid_rows = 3;
  int grid_cols = 4;
  SlicParams slic;
  BassParams bass;
};

/// Runs the configured segmenter; `seed` overrides the method's own seed.
LabelMap run_segmenter(const SegmenterConfig& config, const ImageRGB& image, std::uint64_t seed);

/// "fullgrad" or "gradcam" (last conv layer).
AttributionMap run_attributor(const std::string& method, const NetworkModel& model, const ImageRGB& image);

struct BenchConfig {
  std::vector<std::string> segmenters{"grid", "slic", "bass"};
  /// "random" is the ablation that masks regions in a seeded random order.
  std::vector<std::string> attributors{"fullgrad", "gradcam", "random"};
  SegmenterConfig segmentation;
  SearchConfig search;
  std::vector<std::uint64_t> seeds{0};
  bool oracle = true;
  /// Only unsafe-labelled corpus images are searched.
  bool unsafe_only = true;
};

struct BenchRow {
  std::string segmenter;
  std::string attributor;
  std::size_t searched = 0;     // flagged images searched (per seed, summed)
  std::size_t not_flagged = 0;  // unsafe-labelled images the classifier passed as safe
  std::size_t successes = 0;
  double success_pct = 0.0;
  double avg_depth = 0.0;            // over successes
  double avg_obfuscation_pct = 0.0;  // over successes
  double avg_regions = 0.0;
  std::size_t oracle_instances = 0;  // both greedy and oracle succeeded
  std::size_t oracle_matches = 0;    // greedy depth == oracle minimum
  std::size_t oracle_violations = 0;  // greedy depth < oracle minimum (must stay 0)
  std::size_t oracle_only = 0;       // oracle succeeded within budget, greedy did not
  std::size_t minimality_violations = 0;  // rendered pixels changed outside the mask
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::size_t corpus_size = 0;
  std::vector<std::uint64_t> seeds;
  nlohmann::json config;

  const BenchRow& row(const std::string& segmenter, const std::string& attributor) const;
};

/// Deterministic for fixed inputs: images run in parallel, results merge in corpus order.
BenchReport run_bench(const std::vector<CorpusEntry>& corpus, const NetworkModel& model, const BenchConfig& config);

nlohmann::json to_json(const BenchReport& report);
std::string format_table(const BenchReport& report);

nlohmann::json to_json(const SegmenterConfig& config);
nlohmann::json to_json(const SearchConfig& config);
/// Applies any keys present in `j` over `config`.
void apply_json(const nlohmann::json& j, SegmenterConfig& config);

}  // namespace cse
