#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace facepad {

struct ScoredSample {
  std::string id;
  double score = 0;  // positive means genuine
  bool genuine = true;
  std::string attack_type;  // empty when untagged
};

// Where the operating threshold comes from.
struct ThresholdSpec {
  enum class Mode { Fixed, Eer, Devset };
  Mode mode = Mode::Eer;
  double value = 0;                 // Fixed
  std::vector<ScoredSample> dev;    // Devset: EER threshold of this set

  static ThresholdSpec fixed(double t) { return {Mode::Fixed, t, {}}; }
  static ThresholdSpec eer() { return {Mode::Eer, 0, {}}; }
  static ThresholdSpec devset(std::vector<ScoredSample> dev) { return {Mode::Devset, 0, std::move(dev)}; }
};

struct MetricsReport {
  std::size_t n_genuine = 0;
  std::size_t n_attack = 0;
  double threshold = 0;
  double accuracy = 0;
  double far = 0;  // attacks accepted (score >= threshold)
  double frr = 0;  // genuine rejected (score < threshold)
  double apcer = 0;
  double bpcer = 0;
  double hter = 0;
  double eer = 0;
  double eer_threshold = 0;
  double auc = 0;
  double far_level = 0.1;
  double tpr_at_far = 0;
  std::map<std::string, double> apcer_by_type;
};

struct EerPoint {
  double eer = 0;
  double threshold = 0;
};

// Sweep over midpoints of adjacent distinct scores (plus one threshold below
// and one above all scores); linear interpolation between the two sweep
// points that bracket FAR = FRR.
EerPoint equal_error_rate(std::span<const ScoredSample> samples);

double area_under_roc(std::span<const ScoredSample> samples);

MetricsReport compute_metrics(std::span<const ScoredSample> samples, const ThresholdSpec& threshold = {},
                              double far_level = 0.1);

std::string format_report(const MetricsReport& r);
std::string report_to_json(const MetricsReport& r);

}  // namespace facepad
