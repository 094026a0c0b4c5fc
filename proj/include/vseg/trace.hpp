#pragma once

#include "vseg/footprints.hpp"
#include "vseg/video_io.hpp"

#include <filesystem>
#include <vector>

namespace vseg {

struct Trace {
  int footprint_id = 0;
  std::vector<double> samples;  ///< one per frame
  double frame_rate = 0.0;
};

/// Mean intensity over the mask pixels, per frame.
Trace extract_trace(const Video& video, const MaskImage& mask, int footprint_id = 0);

std::vector<Trace> extract_all(const Video& video, const FootprintSet& footprints, int threads = 1);
std::vector<Trace> extract_all(const Video& video, const std::vector<MaskImage>& masks, int threads = 1);

/// (sample - baseline) / baseline with the baseline at the given percentile
/// of the trace.
std::vector<double> delta_f_over_f(const std::vector<double>& samples, double baseline_percentile = 0.1);

/// `frame,<id0>,<id1>,...` rows plus a sidecar JSON holding the frame rate.
void write_traces_csv(const std::vector<Trace>& traces, int frames, double frame_rate,
                      const std::filesystem::path& csv, const std::filesystem::path& sidecar_json);

}  // namespace vseg
