#include "vseg/evaluation.hpp"

#include <algorithm>
#include <limits>

namespace vseg {

double iou(const MaskImage& a, const MaskImage& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw NumericError("iou: mask dimensions differ");
  const auto inter = (a && b).count();
  const auto uni = (a || b).count();
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<int> max_weight_assignment(const ImageD& weights) {
  const int rows = static_cast<int>(weights.rows());
  const int cols = static_cast<int>(weights.cols());
  std::vector<int> assignment(rows, -1);
  if (rows == 0 || cols == 0) return assignment;
  // Square min-cost problem on -weights, zero-padded; potentials method, 1-based.
  const int n = std::max(rows, cols);
  auto cost = [&](int i, int j) { return (i < rows && j < cols) ? -weights(i, j) : 0.0; };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (int j = 1; j <= n; ++j) {
    if (p[j] >= 1 && p[j] <= rows && j <= cols) assignment[p[j] - 1] = j - 1;
  }
  return assignment;
}

MatchReport match_and_score(const std::vector<MaskImage>& preds, const std::vector<MaskImage>& gts,
                            double threshold) {
  MatchReport report;
  ImageD scores = ImageD::Zero(static_cast<Eigen::Index>(preds.size()), static_cast<Eigen::Index>(gts.size()));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const double v = iou(preds[i], gts[j]);
      scores(i, j) = v >= threshold ? v : 0.0;
    }
  }
  const auto assignment = max_weight_assignment(scores);
  std::vector<char> gt_used(gts.size(), false);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int j = assignment[i];
    if (j >= 0 && scores(i, j) > 0.0) {
      report.matches.push_back({static_cast<int>(i), j, scores(i, j)});
      gt_used[j] = true;
    } else {
      report.unmatched_preds.push_back(static_cast<int>(i));
    }
  }
  for (std::size_t j = 0; j < gts.size(); ++j) {
    if (!gt_used[j]) report.unmatched_gts.push_back(static_cast<int>(j));
  }
  const double tp = static_cast<double>(report.matches.size());
  // Vacuous cases: nothing predicted and nothing to find counts as perfect.
  report.precision = preds.empty() ? (gts.empty() ? 1.0 : 0.0) : tp / preds.size();
  report.recall = gts.empty() ? (preds.empty() ? 1.0 : 0.0) : tp / gts.size();
  const double s = report.precision + report.recall;
  report.f1 = s > 0 ? 2.0 * report.precision * report.recall / s : 0.0;
  return report;
}

nlohmann::json MatchReport::to_json() const {
  nlohmann::json j;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["true_positives"] = nlohmann::json::array();
  for (const auto& m : matches) j["true_positives"].push_back({{"pred", m.pred}, {"gt", m.gt}, {"iou", m.iou}});
  j["unmatched_preds"] = unmatched_preds;
  j["unmatched_gts"] = unmatched_gts;
  return j;
}

double ThroughputReport::stage_sum() const {
  double s = 0.0;
  for (const auto& st : stages) s += st.seconds;
  return s;
}

nlohmann::json ThroughputReport::to_json() const {
  nlohmann::json j;
  j["frames"] = frames;
  j["total_seconds"] = total_seconds;
  j["effective_fps"] = effective_fps;
  j["streaming"] = streaming;
  j["stages"] = nlohmann::json::object();
  for (const auto& st : stages) j["stages"][st.name] = st.seconds;
  if (recording_fps) j["recording_fps"] = *recording_fps;
  if (realtime_ratio) j["realtime_ratio"] = *realtime_ratio;
  return j;
}

ThroughputReport make_throughput_report(int frames, std::vector<StageTime> stages, double total_seconds,
                                        double recording_fps) {
  constexpr double kMinSeconds = 1e-3;
  ThroughputReport r;
  for (auto& st : stages) st.seconds = std::max(st.seconds, kMinSeconds);
  r.stages = std::move(stages);
  r.frames = frames;
  r.total_seconds = std::max(total_seconds, kMinSeconds);
  r.effective_fps = frames / r.total_seconds;
  if (recording_fps > 0.0) {
    r.recording_fps = recording_fps;
    r.realtime_ratio = r.effective_fps / recording_fps;
  }
  return r;
}

}  // namespace vseg
