#include "vseg/pipeline.hpp"

#include "vseg/parallel.hpp"
#include "vseg/simulator.hpp"
#include "vseg/summary.hpp"

#include <chrono>
#include <fstream>
#include <thread>

namespace vseg {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Rethrows the in-flight exception tagged with `stage`, keeping its kind.
[[noreturn]] void rethrow_tagged(const std::string& stage) {
  try {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.kind(), e.what());
  } catch (const std::bad_alloc&) {
    throw StageError(stage, ErrorKind::numeric, "out of memory");
  } catch (const std::exception& e) {
    throw StageError(stage, ErrorKind::numeric, e.what());
  }
}

template <typename F>
auto tagged(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (...) {
    rethrow_tagged(stage);
  }
}

struct SegmentRange {
  int first;
  int count;
};

std::vector<SegmentRange> segment_ranges(int frames, int length) {
  std::vector<SegmentRange> out;
  for (int first = 0; first < frames; first += length) out.push_back({first, std::min(length, frames - first)});
  return out;
}

ProbabilityMap segment_map(const UNet& net, const Video& corrected, std::size_t index, SegmentRange range, int stride,
                           int threads) {
  const std::size_t frame = corrected.frame_size();
  const auto segment = make_segment(index, range.first, range.count, corrected.height(), corrected.width(),
                                    corrected.data().subspan(range.first * frame, range.count * frame));
  return tile_and_merge(net, normalize_pair(summarize_any(segment)), index, stride, threads);
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

PipelineResult process(const Video& video, const WeightBundle* weights, const PipelineConfig& config,
                       const std::vector<MaskImage>* trace_masks) {
  tagged("config", [&] {
    config.validate();
    if (video.frames() < 1) throw NumericError("input video has no frames");
    if (config.stage_segment && !weights) throw ConfigError("segmentation needs U-Net weights");
    if (config.stage_trace && !config.stage_segment && !trace_masks) {
      throw ConfigError("tracing without segmentation needs footprint masks");
    }
    return 0;
  });

  const auto start = Clock::now();
  const double fps = config.frame_rate > 0 ? config.frame_rate : video.frame_rate();
  const auto ranges = segment_ranges(video.frames(), config.segment_length);
  PipelineResult result;
  std::vector<StageTime> stages;
  double motion_busy = 0.0, segment_busy = 0.0;

  std::optional<UNet> net;
  if (config.stage_segment) net.emplace(tagged("segment", [&] { return UNet(*weights); }));

  const bool stream = config.streaming && config.stage_motion && config.stage_segment;
  const int motion_threads = stream ? std::max(1, config.threads / 2) : config.threads;
  const int unet_threads = stream ? std::max(1, config.threads - config.threads / 2) : config.threads;

  if (config.stage_motion) {
    result.corrected = Video(video.frames(), video.height(), video.width(), fps);
    result.motion.resize(video.frames());
    const auto t0 = Clock::now();
    const MotionConfig mc = config.motion_config();
    const auto estimator = tagged("motion", [&] {
      return MotionEstimator(mean_reference(video, mc.reference_frames), mc);
    });
    motion_busy += seconds_since(t0);

    auto correct_range = [&](SegmentRange r) {
      parallel_for(r.count, motion_threads, [&](std::size_t k) {
        const int t = r.first + static_cast<int>(k);
        const Image frame = video.frame(t);
        result.motion[t] = estimator.estimate(frame);
        result.corrected.frame(t) = apply_correction(frame, result.motion[t], mc.subpixel);
      });
    };

    if (stream) {
      // Segment i is summarized and segmented as soon as its frames are corrected.
      result.maps.resize(ranges.size());
      BoundedQueue<std::size_t> ready(4);
      std::exception_ptr consumer_failure;
      std::jthread consumer([&] {
        try {
          while (auto k = ready.pop()) {
            const auto t1 = Clock::now();
            result.maps[*k] = segment_map(*net, result.corrected, *k, ranges[*k], config.stride, unet_threads);
            segment_busy += seconds_since(t1);
          }
        } catch (...) {
          consumer_failure = std::current_exception();
          ready.close();
        }
      });
      std::exception_ptr producer_failure;
      try {
        for (std::size_t k = 0; k < ranges.size(); ++k) {
          const auto t1 = Clock::now();
          correct_range(ranges[k]);
          motion_busy += seconds_since(t1);
          ready.push(k);
        }
      } catch (...) {
        producer_failure = std::current_exception();
      }
      ready.close();
      consumer.join();
      if (producer_failure) {
        try {
          std::rethrow_exception(producer_failure);
        } catch (...) {
          rethrow_tagged("motion");
        }
      }
      if (consumer_failure) {
        try {
          std::rethrow_exception(consumer_failure);
        } catch (...) {
          rethrow_tagged("segment");
        }
      }
    } else {
      const auto t1 = Clock::now();
      tagged("motion", [&] {
        for (const auto& r : ranges) correct_range(r);
        return 0;
      });
      motion_busy += seconds_since(t1);
    }
    stages.push_back({"motion", motion_busy});
  } else {
    result.corrected = video;
    result.corrected.set_frame_rate(fps);
  }

  if (config.stage_segment) {
    if (!stream) {
      const auto t1 = Clock::now();
      result.maps.resize(ranges.size());
      tagged("segment", [&] {
        for (std::size_t k = 0; k < ranges.size(); ++k) {
          result.maps[k] = segment_map(*net, result.corrected, k, ranges[k], config.stride, config.threads);
        }
        return 0;
      });
      segment_busy = seconds_since(t1);
    }
    stages.push_back({"segment", segment_busy});

    const auto t2 = Clock::now();
    result.footprints =
        tagged("reconstruct", [&] { return reconstruct_footprints(result.maps, config.reconstruction_config()); });
    stages.push_back({"reconstruct", seconds_since(t2)});
  }

  if (config.stage_trace) {
    const auto t3 = Clock::now();
    result.traces = tagged("trace", [&] {
      auto traces = config.stage_segment ? extract_all(result.corrected, result.footprints, config.threads)
                                         : extract_all(result.corrected, *trace_masks, config.threads);
      for (auto& t : traces) t.frame_rate = fps;
      return traces;
    });
    stages.push_back({"trace", seconds_since(t3)});
  }

  result.throughput = make_throughput_report(video.frames(), std::move(stages), seconds_since(start), fps);
  result.throughput.streaming = stream;
  return result;
}

PipelineResult run(const PipelineConfig& config) {
  const auto& out = config.output_dir;
  nlohmann::json manifest = {{"status", "partial"}, {"stages", config.stages()}, {"artifacts", nlohmann::json::array()}};
  auto record = [&](const std::string& name) { manifest["artifacts"].push_back(name); };
  auto write_manifest = [&] {
    try {
      write_json(manifest, out / "manifest.json");
    } catch (const Error&) {
      // The original failure matters more than a missing manifest.
    }
  };

  try {
    tagged("config", [&] {
      config.validate();
      std::filesystem::create_directories(out);
      save_config(config, out / "config.json");
      return 0;
    });
    record("config.json");

    const Video video = tagged("load", [&] {
      if (config.input.empty()) throw ConfigError("no input video given");
      return load_video(config.input);
    });
    std::optional<WeightBundle> weights;
    if (config.stage_segment) {
      weights = tagged("load", [&] {
        if (config.weights.empty()) throw ConfigError("no weights file given");
        return load_weights(config.weights);
      });
    }
    std::vector<MaskImage> masks;
    if (config.stage_trace && !config.stage_segment) {
      masks = tagged("load", [&] {
        if (config.masks.empty()) throw ConfigError("tracing without segmentation needs --masks");
        return load_masks(config.masks);
      });
    }

    PipelineResult result = process(video, weights ? &*weights : nullptr, config, &masks);

    tagged("write", [&] {
      if (config.stage_motion) {
        write_motion_csv(result.motion, out / "motion.csv");
        record("motion.csv");
        if (config.write_corrected || !config.stage_segment) {
          save_video(result.corrected, out / "corrected.tif");
          record("corrected.tif");
        }
      }
      if (config.write_maps && !result.maps.empty()) {
        std::vector<Image> pages;
        for (const auto& m : result.maps) pages.push_back(m.values);
        save_images(pages, out / "maps.tif");
        record("maps.tif");
      }
      if (config.stage_segment) {
        save_footprints(result.footprints, out / "footprints.tif", out / "footprints.json");
        record("footprints.tif");
        record("footprints.json");
      }
      if (config.stage_trace) {
        write_traces_csv(result.traces, video.frames(), result.corrected.frame_rate(), out / "traces.csv",
                         out / "traces.json");
        record("traces.csv");
        record("traces.json");
      }
      write_json(result.throughput.to_json(), out / "throughput.json");
      record("throughput.json");
      return 0;
    });
    manifest["status"] = "complete";
    manifest["footprints"] = result.footprints.footprints.size();
    write_manifest();
    return result;
  } catch (const StageError& e) {
    manifest["failed_stage"] = e.stage();
    manifest["error"] = e.what();
    write_manifest();
    throw;
  }
}

ThroughputReport benchmark_pipeline(const PipelineConfig& config, int frames, int size, double frame_rate,
                                    std::uint64_t seed) {
  Video video;
  if (!config.input.empty()) {
    video = load_video(config.input);
  } else {
    SceneConfig scene;
    scene.frames = frames;
    scene.width = scene.height = size;
    scene.frame_rate = frame_rate;
    scene.seed = seed;
    video = synthesize(scene).video;
  }
  const WeightBundle weights = config.weights.empty() ? random_weights(seed) : load_weights(config.weights);
  return process(video, &weights, config).throughput;
}

}  // namespace vseg
