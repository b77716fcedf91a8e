// cse: counterfactual subobject obfuscation command line.
//
//   cse explain    --image in.png  --model m.csew --seg bass --attr fullgrad --out dir
//   cse bench      --corpus dir    --model m.csew --seeds 0,1 --out report.json
//   cse segment    --image in.png  --seg slic --out labels.png
//   cse attribute  --image in.png  --model m.csew --attr gradcam --out heat.png
//   cse gen-corpus --seed 7 --count 200 --out corpus/
//
// Exit codes: 0 ok, 1 error, 2 image not flagged unsafe, 3 no counterfactual within budget.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "cse/bench.hpp"
#include "cse/corpus.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNotFlagged = 2;
constexpr int kExitNoCounterfactual = 3;

#ifndef CSE_DEFAULT_MODEL
#define CSE_DEFAULT_MODEL "data/reference.csew"
#endif

struct CommonOptions {
  std::string model = CSE_DEFAULT_MODEL;
  std::string config;
  std::string seg = "bass";
  std::string attr = "fullgrad";
  std::uint64_t seed = 0;
  double threshold = 0.5;
  int budget = 10;
  std::string mask = "means";
  std::string out;
  int grid_rows = -1, grid_cols = -1;
  int slic_segments = -1;
  double slic_compactness = -1;
  int bass_components = -1;
  int bass_sweeps = -1;
  bool rerank = false;
};

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw cse::InputError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw cse::InputError("malformed config " + path + ": " + e.what());
  }
}

// Config file first, then explicit flags on top.
cse::SegmenterConfig resolve_segmenter(const CommonOptions& o, const json& cfg, const CLI::App& app) {
  cse::SegmenterConfig s;
  if (cfg.contains("segmentation")) cse::apply_json(cfg["segmentation"], s);
  if (app.count("--seg") || !cfg.contains("segmentation") || !cfg["segmentation"].contains("method")) s.method = o.seg;
  if (o.grid_rows > 0) s.grid_rows = o.grid_rows;
  if (o.grid_cols > 0) s.grid_cols = o.grid_cols;
  if (o.slic_segments > 0) s.slic.n_segments = o.slic_segments;
  if (o.slic_compactness > 0) s.slic.compactness = o.slic_compactness;
  if (o.bass_components > 0) s.bass.init_components = o.bass_components;
  if (o.bass_sweeps > 0) s.bass.gibbs_sweeps = o.bass_sweeps;
  return s;
}

cse::SearchConfig resolve_search(const CommonOptions& o, const json& cfg, const CLI::App& app,
                                 const cse::NetworkModel& model) {
  cse::SearchConfig s;
  const json search = cfg.value("search", json::object());
  s.threshold = app.count("--T") ? o.threshold : search.value("T", o.threshold);
  s.budget = app.count("--budget") ? o.budget : search.value("budget", o.budget);
  s.mask = cse::parse_mask_op(app.count("--mask") ? o.mask : search.value("mask", o.mask), model.channel_means);
  s.rerank_by_confidence = o.rerank || search.value("rerank_by_cr", false);
  return s;
}

std::string resolve_attr(const CommonOptions& o, const json& cfg, const CLI::App& app) {
  return app.count("--attr") ? o.attr : cfg.value("attribution", o.attr);
}

std::uint64_t resolve_seed(const CommonOptions& o, const json& cfg, const CLI::App& app) {
  return app.count("--seed") ? o.seed : cfg.value("seed", o.seed);
}

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw cse::InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void add_common(CLI::App& app, CommonOptions& o) {
  app.add_option("--model", o.model, "CSEW weight file");
  app.add_option("--config", o.config, "JSON config file; flags override it");
  app.add_option("--seg", o.seg, "segmenter: grid | slic | bass");
  app.add_option("--attr", o.attr, "attributor: fullgrad | gradcam");
  app.add_option("--seed", o.seed, "seed for stochastic segmenters");
  app.add_option("--T", o.threshold, "softmax threshold for the new class");
  app.add_option("--budget", o.budget, "maximum number of masked regions");
  app.add_option("--mask", o.mask, "means | black | white | constant:r,g,b | blur:sigma | pixelate:block");
  app.add_option("--grid-rows", o.grid_rows);
  app.add_option("--grid-cols", o.grid_cols);
  app.add_option("--slic-segments", o.slic_segments);
  app.add_option("--slic-compactness", o.slic_compactness);
  app.add_option("--bass-components", o.bass_components);
  app.add_option("--bass-sweeps", o.bass_sweeps);
}

int cmd_explain(const CommonOptions& o, const std::string& image_path, const std::string& render_mask,
                const CLI::App& app) {
  const json cfg = read_config(o.config);
  const cse::NetworkModel model = cse::load_weights(o.model);
  const cse::SegmenterConfig seg = resolve_segmenter(o, cfg, app);
  cse::SearchConfig search = resolve_search(o, cfg, app, model);
  const std::string attr = resolve_attr(o, cfg, app);
  const std::uint64_t seed = resolve_seed(o, cfg, app);
  const fs::path out_dir = o.out.empty() ? fs::path("cse_out") : fs::path(o.out);

  const cse::ImageRGB original = cse::load_image(image_path);
  const cse::ImageRGB view = cse::model_view(original, model.input_shape.at(1));
  const cse::LabelMap labels = cse::run_segmenter(seg, view, seed);
  const cse::AttributionMap map = cse::run_attributor(attr, model, view);
  const auto scores = cse::region_scores(map, labels);

  cse::CounterfactualResult result;
  try {
    result = cse::greedy_counterfactual(model, view, labels, scores, search);
  } catch (const cse::NotFlaggedError& e) {
    std::cerr << "not flagged: " << e.what() << '\n';
    return kExitNotFlagged;
  }

  json j = {
      {"input", image_path},
      {"seed", seed},
      {"model", fs::path(o.model).filename().string()},
      {"params", {{"segmentation", cse::to_json(seg)}, {"attribution", attr}, {"search", cse::to_json(search)}}},
      {"regions", labels.regions},
      {"region_ranking", cse::region_order(scores)},
      {"result", cse::to_json(result, model)},
  };
  j["params"]["segmentation"]["method"] = seg.method;

  fs::create_directories(out_dir);
  if (result.success) {
    const cse::MaskOp render =
        render_mask.empty() ? search.mask : cse::parse_mask_op(render_mask, model.channel_means);
    if (render.name() != search.mask.name()) {
      // The flip was found under the search mask; check it survives the rendering mask.
      const cse::ImageRGB check = cse::render_obfuscated(view, labels, result, render);
      const cse::Tensor p = cse::softmax(cse::logits(model, cse::to_tensor(check)));
      const std::size_t cls = cse::argmax(p);
      j["render_validation"] = {{"mask", render.name()},
                                {"class", model.class_names.at(cls)},
                                {"score", p[cls]},
                                {"flipped", cls != result.original_class && p[cls] > search.threshold}};
    }
    const cse::ImageRGB rendered = cse::render_obfuscated_projected(original, labels, result, render);
    cse::save_image(rendered, out_dir / "obfuscated.png");
    j["output_image"] = "obfuscated.png";
  }
  write_json(j, out_dir / "result.json");
  std::cout << (result.success ? "counterfactual found" : "no counterfactual") << " at depth " << result.depth
            << ", obfuscation " << 100.0 * result.obfuscation_fraction << "%\n";
  return result.success ? kExitOk : kExitNoCounterfactual;
}

int cmd_segment(const CommonOptions& o, const std::string& image_path, const CLI::App& app) {
  const json cfg = read_config(o.config);
  const cse::SegmenterConfig seg = resolve_segmenter(o, cfg, app);
  const std::uint64_t seed = resolve_seed(o, cfg, app);
  const cse::ImageRGB image = cse::load_image(image_path);
  const cse::LabelMap labels = cse::run_segmenter(seg, image, seed);
  const fs::path out = o.out.empty() ? fs::path("labels.png") : fs::path(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  json params = cse::to_json(seg);
  cse::save_label_map(labels, out, {{"seed", seed}, {"method", seg.method}, {"params", params}, {"input", image_path}});
  std::cout << labels.regions << " regions -> " << out.string() << '\n';
  return kExitOk;
}

int cmd_attribute(const CommonOptions& o, const std::string& image_path, const CLI::App& app) {
  const json cfg = read_config(o.config);
  const cse::NetworkModel model = cse::load_weights(o.model);
  const std::string attr = resolve_attr(o, cfg, app);
  const cse::ImageRGB view = cse::model_view(cse::load_image(image_path), model.input_shape.at(1));
  const cse::AttributionMap map = cse::run_attributor(attr, model, view);
  const fs::path out = o.out.empty() ? fs::path("attribution.png") : fs::path(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::vector<std::uint8_t> gray(map.values.size());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = static_cast<std::uint8_t>(std::lround(map.values[i] * 255.0f));
  cse::save_png_gray8(gray, map.width, map.height, out);
  write_json({{"method", map.method},
              {"target_class", model.class_names.at(map.target_class)},
              {"width", map.width},
              {"height", map.height},
              {"entropy", cse::map_entropy(map)},
              {"values", map.values}},
             out.string() + ".json");
  std::cout << map.method << " map -> " << out.string() << '\n';
  return kExitOk;
}

int cmd_bench(const CommonOptions& o, const std::string& corpus_dir, const std::vector<std::uint64_t>& seeds,
              const std::vector<std::string>& segs, const std::vector<std::string>& attrs, bool no_oracle,
              const CLI::App& app) {
  const json cfg = read_config(o.config);
  const cse::NetworkModel model = cse::load_weights(o.model);
  cse::BenchConfig bc;
  bc.segmentation = resolve_segmenter(o, cfg, app);
  bc.search = resolve_search(o, cfg, app, model);
  if (!seeds.empty()) bc.seeds = seeds;
  if (!segs.empty()) bc.segmenters = segs;
  if (!attrs.empty()) bc.attributors = attrs;
  bc.oracle = !no_oracle;

  const auto corpus = cse::read_corpus(corpus_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const cse::BenchReport report = cse::run_bench(corpus, model, bc);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path out = o.out.empty() ? fs::path("bench_report.json") : fs::path(o.out);
  write_json(cse::to_json(report), out);
  const std::string table = cse::format_table(report);
  std::ofstream(out.string() + ".txt") << table;
  std::cout << table;
  std::cerr << "bench runtime " << seconds << " s\n";
  return kExitOk;
}

int cmd_gen_corpus(std::uint64_t seed, std::size_t count, double unsafe_fraction, const std::string& out) {
  const auto samples = cse::generate_corpus(seed, count, unsafe_fraction);
  cse::write_corpus(samples, out.empty() ? fs::path("corpus") : fs::path(out), seed);
  std::size_t unsafe = 0;
  for (const auto& s : samples) unsafe += s.unsafe;
  std::cout << count << " images (" << unsafe << " unsafe) -> " << out << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual subobject obfuscation"};
  app.require_subcommand(1);

  CommonOptions explain_opts, segment_opts, attr_opts, bench_opts;

  std::string image_path, render_mask;
  auto* explain = app.add_subcommand("explain", "find and render a minimal counterfactual obfuscation");
  add_common(*explain, explain_opts);
  explain->add_option("--image", image_path, "input PNG/PPM")->required();
  explain->add_option("--out", explain_opts.out, "output directory");
  explain->add_option("--render-mask", render_mask, "mask used for the rendered image (default: search mask)");
  explain->add_flag("--rerank-by-cr", explain_opts.rerank, "re-sort remaining regions by confidence reduction");

  std::string seg_image;
  auto* segment = app.add_subcommand("segment", "write a 16-bit label PNG and JSON sidecar");
  add_common(*segment, segment_opts);
  segment->add_option("--image", seg_image)->required();
  segment->add_option("--out", segment_opts.out, "label PNG path");

  std::string attr_image;
  auto* attribute = app.add_subcommand("attribute", "write an attribution heatmap PNG and JSON values");
  add_common(*attribute, attr_opts);
  attribute->add_option("--image", attr_image)->required();
  attribute->add_option("--out", attr_opts.out, "heatmap PNG path");

  std::string corpus_dir;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> segs, attrs;
  bool no_oracle = false;
  auto* bench = app.add_subcommand("bench", "run the segmenter x attributor benchmark over a corpus");
  add_common(*bench, bench_opts);
  bench->add_option("--corpus", corpus_dir)->required();
  bench->add_option("--seeds", seeds, "comma-separated seeds")->delimiter(',');
  bench->add_option("--segmenters", segs, "subset of grid,slic,bass")->delimiter(',');
  bench->add_option("--attributors", attrs, "subset of fullgrad,gradcam,random")->delimiter(',');
  bench->add_flag("--no-oracle", no_oracle, "skip the brute-force oracle column");
  bench->add_option("--out", bench_opts.out, "report JSON path (table goes to <out>.txt)");

  std::uint64_t corpus_seed = 0;
  std::size_t count = 200;
  double unsafe_fraction = 1.0;
  std::string corpus_out;
  auto* gen = app.add_subcommand("gen-corpus", "write a seeded synthetic planted-patch corpus");
  gen->add_option("--seed", corpus_seed);
  gen->add_option("--count", count);
  gen->add_option("--unsafe-fraction", unsafe_fraction)->check(CLI::Range(0.0, 1.0));
  gen->add_option("--out", corpus_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*explain) return cmd_explain(explain_opts, image_path, render_mask, *explain);
    if (*segment) return cmd_segment(segment_opts, seg_image, *segment);
    if (*attribute) return cmd_attribute(attr_opts, attr_image, *attribute);
    if (*bench) return cmd_bench(bench_opts, corpus_dir, seeds, segs, attrs, no_oracle, *bench);
    if (*gen) return cmd_gen_corpus(corpus_seed, count, unsafe_fraction, corpus_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
