#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "facepad/image.hpp"
#include "facepad/spmt.hpp"
#include "facepad/svm.hpp"

namespace facepad {

inline constexpr int kLabelBackground = 0;
inline constexpr int kLabelReal = 1;
inline constexpr int kLabelFake = 2;

struct DetectionRecord {
  std::string image_id;
  BoundingBox box;
  int label = kLabelReal;
  double confidence = 0;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

struct CascadeConfig {
  double theta_c = 0.92;
  double iou_nms = 0.45;
  double iou_conflict = 0.5;
  bool conflict_rule = true;

  // theta_c in [0, 1] (the endpoints select the detector-only and SVM-only
  // ablations); IoU thresholds in (0, 1).
  void validate() const;
};

// Greedy suppression per (image, label), highest confidence first. Background
// records are dropped. Output is sorted by image id, then descending
// confidence, independent of input order.
std::vector<DetectionRecord> nms(std::span<const DetectionRecord> records, double iou_threshold);

enum class Certainty { Certain, Uncertain };

// Uncertain iff confidence < theta_c, or (conflict rule) an opposite-label box
// in the same image overlaps it with IoU > iou_conflict while both
// confidences are >= theta_c. theta_c <= 0 marks everything certain and
// theta_c >= 1 marks everything uncertain.
std::vector<Certainty> classify_uncertainty(std::span<const DetectionRecord> records, const CascadeConfig& cfg);

struct CascadeDecision {
  DetectionRecord record;
  Certainty certainty = Certainty::Certain;
  int final_label = -1;  // kLabelReal / kLabelFake, -1 when unresolved
  std::string provenance;  // "detector", "svm" or "unresolved"
  std::optional<double> svm_score;
  std::string error;
};

// Expanded crop (x1.1) -> SPMT -> SVM decision for one box.
double spmt_box_score(const GrayImage& image, const BoundingBox& box, const SpmtModel& spmt, const SvmModel& svm,
                      const BovwEncoder* encoder = nullptr);

// NMS, uncertainty routing and per-box decisions for one image.
std::vector<CascadeDecision> cascade_decide(const GrayImage& image, std::span<const DetectionRecord> records,
                                            const CascadeConfig& cfg, const SpmtModel& spmt, const SvmModel& svm);

// Linearly spaced anchor scales from sc_min (first layer) to sc_max (last).
std::vector<double> anchor_scales(double sc_min, double sc_max, int layers);

// Line-delimited JSON: {"image_id","x","y","w","h","label","confidence"}.
DetectionRecord parse_detection(const std::string& line);
std::string detection_to_json(const DetectionRecord& r);
std::vector<DetectionRecord> read_detections(const std::string& path);
void write_detections(const std::string& path, std::span<const DetectionRecord> records);
std::string decision_to_json(const CascadeDecision& d);

// Mock detector output for tests: `count` records spread over the given
// images, mixing confident, low-confidence and conflicting boxes.
struct MockImage {
  std::string id;
  int height = 0;
  int width = 0;
};
std::vector<DetectionRecord> mock_detections(std::span<const MockImage> images, std::size_t count,
                                             std::uint64_t seed);

}  // namespace facepad
