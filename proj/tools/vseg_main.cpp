// Command-line front end: simulate, make-dataset, segment, trace, evaluate, bench.

#include "vseg/dataset.hpp"
#include "vseg/evaluation.hpp"
#include "vseg/pipeline.hpp"
#include "vseg/simulator.hpp"
#include "vseg/summary.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using namespace vseg;
namespace fs = std::filesystem;

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const std::string& text, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text << '\n';
}

// A mask set is either a paged TIFF or a JSON manifest whose "masks" field
// names one, relative to the manifest.
std::vector<MaskImage> load_mask_set(const fs::path& path) {
  if (path.extension() == ".json") {
    const auto j = read_json(path);
    if (!j.contains("masks") || !j["masks"].is_string()) throw ConfigError(path.string() + ": no \"masks\" entry");
    return load_masks(path.parent_path() / j["masks"].get<std::string>());
  }
  return load_masks(path);
}

struct SimulateArgs {
  fs::path out = "sim";
  fs::path scene;
  std::uint64_t seed = 1;
  int frames = 0;
  int size = 0;
};

struct DatasetArgs {
  fs::path out = "dataset";
  int videos = 1000;
  int patches = 10;
  std::uint64_t seed = 1000;
  fs::path scene;
  int frames = 0;
  int threads = 1;
  bool no_videos = false;
};

// Flags that mirror PipelineConfig; only flags actually given override the file.
struct PipelineFlags {
  fs::path config;
  std::string input, out, weights, masks, stages;
  int threads = 1, segment_length = 50, search_radius = 10, stride = 32;
  double threshold = 0.5, frame_rate = 0.0;
  bool batch = false, write_corrected = false, write_maps = false;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "flat JSON config file")->check(CLI::ExistingFile);
    app->add_option("-i,--input", input, "input video (TIFF or .vsegv1)");
    app->add_option("-o,--out", out, "output directory");
    app->add_option("-w,--weights", weights, "VSEGW1 weights");
    app->add_option("--stages", stages, "comma list of motion,segment,trace");
    app->add_option("-j,--threads", threads, "thread budget")->check(CLI::PositiveNumber);
    app->add_option("--segment-length", segment_length);
    app->add_option("--search-radius", search_radius);
    app->add_option("--stride", stride);
    app->add_option("--threshold", threshold);
    app->add_option("--frame-rate", frame_rate, "override the recording frame rate");
    app->add_flag("--batch", batch, "run stages one after another instead of streaming");
    app->add_flag("--write-corrected", write_corrected);
    app->add_flag("--write-maps", write_maps);
  }

  PipelineConfig resolve(const CLI::App* app) const {
    PipelineConfig c = config.empty() ? PipelineConfig{} : load_config(config);
    auto given = [&](const char* name) { return app->count(name) > 0; };
    if (given("--input")) c.input = input;
    if (given("--out")) c.output_dir = out;
    if (given("--weights")) c.weights = weights;
    if (given("--stages")) c.set_stages(stages);
    if (given("--threads")) c.threads = threads;
    if (given("--segment-length")) c.segment_length = segment_length;
    if (given("--search-radius")) c.search_radius = search_radius;
    if (given("--stride")) c.stride = stride;
    if (given("--threshold")) c.threshold = threshold;
    if (given("--frame-rate")) c.frame_rate = frame_rate;
    if (batch) c.streaming = false;
    if (write_corrected) c.write_corrected = true;
    if (write_maps) c.write_maps = true;
    c.validate();
    return c;
  }
};

int run_main(int argc, char** argv) {
  CLI::App app{"Voltage imaging segmentation pipeline"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "synthesize a recording with ground truth");
  simulate->add_option("-o,--out", sim.out, "output directory");
  simulate->add_option("--scene", sim.scene, "scene config JSON")->check(CLI::ExistingFile);
  simulate->add_option("--seed", sim.seed);
  simulate->add_option("--frames", sim.frames)->check(CLI::PositiveNumber);
  simulate->add_option("--size", sim.size, "frame width and height")->check(CLI::PositiveNumber);

  DatasetArgs ds;
  auto* dataset = app.add_subcommand("make-dataset", "generate the U-Net training set");
  dataset->add_option("-o,--out", ds.out);
  dataset->add_option("--videos", ds.videos)->check(CLI::NonNegativeNumber);
  dataset->add_option("--patches", ds.patches, "patches per summary pair")->check(CLI::NonNegativeNumber);
  dataset->add_option("--seed", ds.seed, "seed of the first video");
  dataset->add_option("--scene", ds.scene, "scene config JSON shared by all videos")->check(CLI::ExistingFile);
  dataset->add_option("--frames", ds.frames)->check(CLI::PositiveNumber);
  dataset->add_option("-j,--threads", ds.threads)->check(CLI::PositiveNumber);
  dataset->add_flag("--no-videos", ds.no_videos, "drop the raw frames after summarizing");

  PipelineFlags seg_flags;
  auto* segment = app.add_subcommand("segment", "run the pipeline and write all artifacts");
  seg_flags.add_to(segment);

  std::string trace_input, trace_masks, trace_out = "out";
  bool trace_motion = false;
  int trace_threads = 1;
  auto* trace = app.add_subcommand("trace", "extract traces for given footprint masks");
  trace->add_option("-i,--input", trace_input)->required();
  trace->add_option("-m,--masks", trace_masks, "mask TIFF or footprint manifest")->required();
  trace->add_option("-o,--out", trace_out);
  trace->add_flag("--motion", trace_motion, "motion-correct before tracing");
  trace->add_option("-j,--threads", trace_threads)->check(CLI::PositiveNumber);

  std::string pred_path, gt_path, report_path, overlay_path, background_path;
  double match_threshold = kMatchThreshold;
  auto* evaluate = app.add_subcommand("evaluate", "match predicted footprints against ground truth");
  evaluate->add_option("--pred", pred_path, "mask TIFF or JSON manifest")->required();
  evaluate->add_option("--gt", gt_path, "mask TIFF or JSON manifest")->required();
  evaluate->add_option("--iou", match_threshold, "minimum IoU for a match");
  evaluate->add_option("-o,--out", report_path, "write the report JSON here");
  evaluate->add_option("--overlay", overlay_path, "write an RGB overlay PNG");
  evaluate->add_option("--background", background_path, "video whose mean frame backs the overlay");

  PipelineFlags bench_flags;
  int bench_frames = 2500, bench_size = 128;
  double bench_fps = 400.0;
  std::uint64_t bench_seed = 1;
  std::string bench_report;
  auto* bench = app.add_subcommand("bench", "time the pipeline and emit a throughput report");
  bench_flags.add_to(bench);
  bench->add_option("--frames", bench_frames, "synthetic recording length")->check(CLI::PositiveNumber);
  bench->add_option("--size", bench_size, "synthetic frame size")->check(CLI::PositiveNumber);
  bench->add_option("--fps", bench_fps, "synthetic recording rate")->check(CLI::PositiveNumber);
  bench->add_option("--seed", bench_seed);
  bench->add_option("--report", bench_report, "write the report JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorKind::config);
  }

  try {
    if (*simulate) {
      SceneConfig scene = sim.scene.empty() ? SceneConfig{} : SceneConfig::from_json(read_json(sim.scene));
      if (simulate->count("--seed")) scene.seed = sim.seed;
      if (sim.frames > 0) scene.frames = sim.frames;
      if (sim.size > 0) scene.width = scene.height = sim.size;
      save_simulation(synthesize(scene), scene, sim.out);
      std::cout << "wrote " << sim.out.string() << '\n';
    } else if (*dataset) {
      DatasetConfig cfg;
      if (!ds.scene.empty()) cfg.scene = SceneConfig::from_json(read_json(ds.scene));
      cfg.n_videos = ds.videos;
      cfg.patches_per_pair = ds.patches;
      cfg.seed = ds.seed;
      if (ds.frames > 0) cfg.scene.frames = ds.frames;
      cfg.threads = ds.threads;
      cfg.write_videos = !ds.no_videos;
      const auto manifest = generate_training_set(ds.out, cfg);
      std::cout << manifest.entries.size() << " patches (" << manifest.validation_count() << " validation) in "
                << ds.out.string() << '\n';
    } else if (*segment) {
      const auto result = run(seg_flags.resolve(segment));
      std::cout << result.footprints.footprints.size() << " footprints, " << result.throughput.effective_fps
                << " fps\n";
    } else if (*trace) {
      PipelineConfig c;
      c.input = trace_input;
      c.masks = fs::path(trace_masks).extension() == ".json"
                    ? fs::path(trace_masks).parent_path() / read_json(trace_masks).at("masks").get<std::string>()
                    : fs::path(trace_masks);
      c.output_dir = trace_out;
      c.threads = trace_threads;
      c.set_stages(trace_motion ? "motion,trace" : "trace");
      const auto result = run(c);
      std::cout << result.traces.size() << " traces\n";
    } else if (*evaluate) {
      const auto preds = load_mask_set(pred_path);
      const auto gts = load_mask_set(gt_path);
      const auto report = match_and_score(preds, gts, match_threshold);
      const std::string text = report.to_json().dump(2);
      if (!report_path.empty()) write_text(text, report_path);
      std::cout << text << '\n';
      if (!overlay_path.empty()) {
        std::optional<Image> background;
        if (!background_path.empty()) background = mean_reference(load_video(background_path), 1 << 30);
        write_overlay_png(preds, gts, background ? &*background : nullptr, overlay_path);
      }
    } else if (*bench) {
      const PipelineConfig c = bench_flags.resolve(bench);
      const auto report = benchmark_pipeline(c, bench_frames, bench_size, bench_fps, bench_seed);
      const std::string text = report.to_json().dump(2);
      if (!bench_report.empty()) write_text(text, bench_report);
      std::cout << text << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(ErrorKind::config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(ErrorKind::numeric);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run_main(argc, argv); }
