#include "cse/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <optional>
#include <random>
#include <sstream>

namespace cse {

LabelMap run_segmenter(const SegmenterConfig& config, const ImageRGB& image, std::uint64_t seed) {
  if (config.method == "grid") return grid_segment(image, config.grid_rows, config.grid_cols);
  if (config.method == "slic") {
    SlicParams p = config.slic;
    p.seed = seed;
    return slic_segment(image, p);
  }
  if (config.method == "bass") {
    BassParams p = config.bass;
    p.seed = seed;
    return bass_segment(image, p);
  }
  throw InputError("unknown segmenter: " + config.method);
}

AttributionMap run_attributor(const std::string& method, const NetworkModel& model, const ImageRGB& image) {
  if (method == "fullgrad") return fullgrad(model, image);
  if (method == "gradcam") return gradcam(model, image, last_conv_layer(model));
  throw InputError("unknown attributor: " + method);
}

const BenchRow& BenchReport::row(const std::string& segmenter, const std::string& attributor) const {
  for (const auto& r : rows) {
    if (r.segmenter == segmenter && r.attributor == attributor) return r;
  }
  throw InputError("no bench row for " + segmenter + "+" + attributor);
}

namespace {

struct AttemptOutcome {
  bool flagged = false;
  bool success = false;
  int depth = 0;
  double obfuscation = 0.0;
  bool minimality_ok = true;
};

struct JobOutcome {
  int regions = 0;
  std::vector<AttemptOutcome> attempts;  // one per attributor
  std::optional<int> oracle_min;
  bool oracle_ran = false;
};

// Every pixel outside the masked regions must be bit-identical to the input.
bool outside_unchanged(const ImageRGB& clean, const ImageRGB& rendered, const LabelMap& labels,
                       std::span<const int> regions) {
  const auto mask = labels.mask_of(regions);
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (mask[p]) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      if (clean.pixels[p * 3 + c] != rendered.pixels[p * 3 + c]) return false;
    }
  }
  return true;
}

JobOutcome run_job(const ImageRGB& image, const NetworkModel& model, const BenchConfig& config,
                   const std::string& segmenter, std::uint64_t seed, std::uint64_t image_index) {
  JobOutcome out;
  SegmenterConfig seg = config.segmentation;
  seg.method = segmenter;
  const std::uint64_t job_seed = sample_seed(seed, image_index);
  const LabelMap labels = run_segmenter(seg, image, job_seed);
  out.regions = labels.regions;

  SearchConfig search = config.search;
  search.report_confidence = false;

  for (const auto& attr : config.attributors) {
    AttemptOutcome a;
    std::vector<int> order;
    if (attr == "random") {
      order.resize(static_cast<std::size_t>(labels.regions));
      for (int i = 0; i < labels.regions; ++i) order[static_cast<std::size_t>(i)] = i;
      std::mt19937_64 rng(job_seed ^ 0xA5A5A5A5ull);
      std::shuffle(order.begin(), order.end(), rng);
    } else {
      order = region_order(region_scores(run_attributor(attr, model, image), labels));
    }
    try {
      const CounterfactualResult r = ordered_counterfactual(model, image, labels, order, search);
      a.flagged = true;
      a.success = r.success;
      a.depth = r.depth;
      a.obfuscation = r.obfuscation_fraction;
      if (r.success) {
        const ImageRGB rendered = render_obfuscated(image, labels, r, search.mask);
        a.minimality_ok = outside_unchanged(image, rendered, labels, r.masked_regions);
      }
    } catch (const NotFlaggedError&) {
      a.flagged = false;
    }
    out.attempts.push_back(a);
  }

  const bool flagged = !out.attempts.empty() && out.attempts.front().flagged;
  if (config.oracle && flagged && labels.regions <= kBruteForceMaxRegions) {
    out.oracle_ran = true;
    const auto best = brute_force_counterfactual(model, image, labels, search.threshold, search.budget, search.mask,
                                                 search.flagged_class);
    if (best) out.oracle_min = static_cast<int>(best->size());
  }
  return out;
}

}  // namespace

BenchReport run_bench(const std::vector<CorpusEntry>& corpus, const NetworkModel& model, const BenchConfig& config) {
  if (corpus.empty()) throw InputError("bench corpus is empty");
  if (config.segmenters.empty() || config.attributors.empty() || config.seeds.empty()) {
    throw InputError("bench needs at least one segmenter, attributor and seed");
  }
  for (const auto& s : config.segmenters)
    if (s != "grid" && s != "slic" && s != "bass") throw InputError("unknown segmenter: " + s);
  for (const auto& a : config.attributors)
    if (a != "fullgrad" && a != "gradcam" && a != "random") throw InputError("unknown attributor: " + a);
  std::vector<ImageRGB> images;
  std::vector<std::size_t> index;  // corpus position of each searched image
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (config.unsafe_only && !corpus[i].unsafe) continue;
    images.push_back(model_view(load_image(corpus[i].path), model.input_shape.at(1)));
    index.push_back(i);
  }
  if (images.empty()) throw InputError("bench corpus has no unsafe-labelled images");

  const std::size_t S = config.seeds.size(), G = config.segmenters.size(), N = images.size();
  const std::size_t jobs = S * G * N;
  std::vector<JobOutcome> outcomes(jobs);
  std::vector<std::exception_ptr> errors(jobs);
#pragma omp parallel for schedule(dynamic, 1)
  for (long j = 0; j < static_cast<long>(jobs); ++j) {
    const auto ju = static_cast<std::size_t>(j);
    const std::size_t s = ju / (G * N), g = (ju / N) % G, n = ju % N;
    try {
      outcomes[ju] = run_job(images[n], model, config, config.segmenters[g], config.seeds[s], index[n]);
    } catch (...) {
      errors[ju] = std::current_exception();
    }
  }
  // Exceptions cannot cross the parallel region; rethrow the first in job order.
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  BenchReport report;
  report.corpus_size = corpus.size();
  report.seeds = config.seeds;
  report.config = {
      {"segmenters", config.segmenters},
      {"attributors", config.attributors},
      {"segmentation", to_json(config.segmentation)},
      {"search", to_json(config.search)},
      {"oracle", config.oracle},
      {"unsafe_only", config.unsafe_only},
  };
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t a = 0; a < config.attributors.size(); ++a) {
      BenchRow row;
      row.segmenter = config.segmenters[g];
      row.attributor = config.attributors[a];
      double depth_sum = 0.0, obf_sum = 0.0, region_sum = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t n = 0; n < N; ++n) {
          const JobOutcome& o = outcomes[(s * G + g) * N + n];
          const AttemptOutcome& at = o.attempts[a];
          if (!at.flagged) {
            ++row.not_flagged;
            continue;
          }
          ++row.searched;
          region_sum += o.regions;
          if (at.success) {
            ++row.successes;
            depth_sum += at.depth;
            obf_sum += at.obfuscation;
            row.minimality_violations += !at.minimality_ok;
          }
          if (o.oracle_ran) {
            if (at.success && o.oracle_min) {
              ++row.oracle_instances;
              row.oracle_matches += at.depth == *o.oracle_min;
              row.oracle_violations += at.depth < *o.oracle_min;
            } else if (at.success && !o.oracle_min) {
              ++row.oracle_violations;  // greedy found a subset the exhaustive search missed
            } else if (!at.success && o.oracle_min) {
              ++row.oracle_only;
            }
          }
        }
      }
      if (row.searched > 0) {
        row.success_pct = 100.0 * static_cast<double>(row.successes) / static_cast<double>(row.searched);
        row.avg_regions = region_sum / static_cast<double>(row.searched);
      }
      if (row.successes > 0) {
        row.avg_depth = depth_sum / static_cast<double>(row.successes);
        row.avg_obfuscation_pct = 100.0 * obf_sum / static_cast<double>(row.successes);
      }
      report.rows.push_back(row);
    }
  }
  return report;
}

nlohmann::json to_json(const BenchReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({
        {"segmenter", r.segmenter},
        {"attributor", r.attributor},
        {"searched", r.searched},
        {"not_flagged", r.not_flagged},
        {"successes", r.successes},
        {"counterfactual_pct", r.success_pct},
        {"avg_depth", r.avg_depth},
        {"avg_obfuscation_pct", r.avg_obfuscation_pct},
        {"avg_regions", r.avg_regions},
        {"oracle_instances", r.oracle_instances},
        {"oracle_matches", r.oracle_matches},
        {"oracle_violations", r.oracle_violations},
        {"oracle_only", r.oracle_only},
        {"minimality_violations", r.minimality_violations},
    });
  }
  return {{"corpus_size", report.corpus_size}, {"seeds", report.seeds}, {"config", report.config}, {"rows", rows}};
}

std::string format_table(const BenchReport& report) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-6s %-9s %8s %14s %9s %15s %8s %12s\n", "seg", "attr", "searched",
                "counterfactual", "avg_depth", "avg_obfuscation", "regions", "oracle_match");
  out << line;
  for (const auto& r : report.rows) {
    std::string oracle = "-";
    if (r.oracle_instances > 0) oracle = std::to_string(r.oracle_matches) + "/" + std::to_string(r.oracle_instances);
    std::snprintf(line, sizeof line, "%-6s %-9s %8zu %13.1f%% %9.2f %14.1f%% %8.1f %12s\n", r.segmenter.c_str(),
                  r.attributor.c_str(), r.searched, r.success_pct, r.avg_depth, r.avg_obfuscation_pct, r.avg_regions,
                  oracle.c_str());
    out << line;
  }
  return out.str();
}

nlohmann::json to_json(const SegmenterConfig& c) {
  return {
      {"method", c.method},
      {"grid", {{"rows", c.grid_rows}, {"cols", c.grid_cols}}},
      {"slic",
       {{"n_segments", c.slic.n_segments},
        {"compactness", c.slic.compactness},
        {"iterations", c.slic.iterations},
        {"min_size_factor", c.slic.min_size_factor}}},
      {"bass",
       {{"init_components", c.bass.init_components},
        {"alpha", c.bass.alpha},
        {"kappa0", c.bass.kappa0},
        {"nu0", c.bass.nu0},
        {"psi_scale", c.bass.psi_scale},
        {"spatial_weight", c.bass.spatial_weight},
        {"gibbs_sweeps", c.bass.gibbs_sweeps},
        {"min_region_fraction", c.bass.min_region_fraction}}},
  };
}

nlohmann::json to_json(const SearchConfig& c) {
  return {
      {"T", c.threshold},
      {"budget", c.budget},
      {"mask", c.mask.name()},
      {"flagged_class", c.flagged_class},
      {"rerank_by_cr", c.rerank_by_confidence},
  };
}

void apply_json(const nlohmann::json& j, SegmenterConfig& c) {
  try {
    if (j.contains("method")) c.method = j["method"];
    if (j.contains("grid")) {
      c.grid_rows = j["grid"].value("rows", c.grid_rows);
      c.grid_cols = j["grid"].value("cols", c.grid_cols);
    }
    if (j.contains("slic")) {
      const auto& s = j["slic"];
      c.slic.n_segments = s.value("n_segments", c.slic.n_segments);
      c.slic.compactness = s.value("compactness", c.slic.compactness);
      c.slic.iterations = s.value("iterations", c.slic.iterations);
      c.slic.min_size_factor = s.value("min_size_factor", c.slic.min_size_factor);
    }
    if (j.contains("bass")) {
      const auto& b = j["bass"];
      c.bass.init_components = b.value("init_components", c.bass.init_components);
      c.bass.alpha = b.value("alpha", c.bass.alpha);
      c.bass.kappa0 = b.value("kappa0", c.bass.kappa0);
      c.bass.nu0 = b.value("nu0", c.bass.nu0);
      c.bass.psi_scale = b.value("psi_scale", c.bass.psi_scale);
      c.bass.spatial_weight = b.value("spatial_weight", c.bass.spatial_weight);
      c.bass.gibbs_sweeps = b.value("gibbs_sweeps", c.bass.gibbs_sweeps);
      c.bass.min_region_fraction = b.value("min_region_fraction", c.bass.min_region_fraction);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad segmentation config: ") + e.what());
  }
}

}  // namespace cse
