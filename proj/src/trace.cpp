#include "vseg/trace.hpp"

#include "vseg/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace vseg {

Trace extract_trace(const Video& video, const MaskImage& mask, int footprint_id) {
  if (mask.rows() != video.height() || mask.cols() != video.width()) {
    throw NumericError("trace mask dimensions differ from the video frame");
  }
  std::vector<std::size_t> pixels;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (mask.data()[i]) pixels.push_back(static_cast<std::size_t>(i));
  }
  if (pixels.empty()) throw NumericError("trace mask " + std::to_string(footprint_id) + " is empty");
  Trace trace{footprint_id, std::vector<double>(video.frames()), video.frame_rate()};
  const auto data = video.data();
  for (int t = 0; t < video.frames(); ++t) {
    const float* frame = data.data() + t * video.frame_size();
    double sum = 0.0;
    for (std::size_t p : pixels) sum += frame[p];
    trace.samples[t] = sum / static_cast<double>(pixels.size());
  }
  return trace;
}

std::vector<Trace> extract_all(const Video& video, const std::vector<MaskImage>& masks, int threads) {
  std::vector<Trace> traces(masks.size());
  parallel_for(masks.size(), threads,
               [&](std::size_t i) { traces[i] = extract_trace(video, masks[i], static_cast<int>(i)); });
  return traces;
}

std::vector<Trace> extract_all(const Video& video, const FootprintSet& footprints, int threads) {
  std::vector<Trace> traces(footprints.footprints.size());
  parallel_for(traces.size(), threads, [&](std::size_t i) {
    const auto& f = footprints.footprints[i];
    traces[i] = extract_trace(video, f.roi, f.id);
  });
  return traces;
}

std::vector<double> delta_f_over_f(const std::vector<double>& samples, double baseline_percentile) {
  if (samples.empty()) return {};
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::clamp(baseline_percentile, 0.0, 1.0) * (sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double baseline = sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
  if (!(baseline > 0.0)) throw NumericError("dF/F baseline is not positive");
  std::vector<double> out(samples.size());
  std::transform(samples.begin(), samples.end(), out.begin(), [&](double s) { return (s - baseline) / baseline; });
  return out;
}

void write_traces_csv(const std::vector<Trace>& traces, int frames, double frame_rate,
                      const std::filesystem::path& csv, const std::filesystem::path& sidecar_json) {
  std::ofstream out(csv);
  if (!out) throw IoError("cannot open " + csv.string() + " for writing");
  out << "frame";
  for (const auto& t : traces) out << ',' << t.footprint_id;
  out << '\n' << std::setprecision(9);
  for (int f = 0; f < frames; ++f) {
    out << f;
    for (const auto& t : traces) out << ',' << t.samples.at(f);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + csv.string());

  nlohmann::json side;
  side["frame_rate"] = frame_rate;
  side["frames"] = frames;
  side["traces"] = traces.size();
  std::ofstream js(sidecar_json);
  if (!js) throw IoError("cannot open " + sidecar_json.string() + " for writing");
  js << side.dump(2) << '\n';
}

}  // namespace vseg
