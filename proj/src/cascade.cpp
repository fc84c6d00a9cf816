#include "facepad/cascade.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "facepad/errors.hpp"
#include "facepad/random.hpp"

namespace facepad {

namespace {

bool record_order(const DetectionRecord& a, const DetectionRecord& b) {
  if (a.image_id != b.image_id) return a.image_id < b.image_id;
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.label != b.label) return a.label < b.label;
  return std::tie(a.box.x, a.box.y, a.box.w, a.box.h) < std::tie(b.box.x, b.box.y, b.box.w, b.box.h);
}

bool opposite(int a, int b) {
  return (a == kLabelReal && b == kLabelFake) || (a == kLabelFake && b == kLabelReal);
}

}  // namespace

void CascadeConfig::validate() const {
  if (!(theta_c >= 0 && theta_c <= 1)) throw ConfigError("theta_c must lie in [0, 1]");
  if (!(iou_nms > 0 && iou_nms < 1)) throw ConfigError("iou_nms must lie in (0, 1)");
  if (!(iou_conflict > 0 && iou_conflict < 1)) throw ConfigError("iou_conflict must lie in (0, 1)");
}

std::vector<DetectionRecord> nms(std::span<const DetectionRecord> records, double iou_threshold) {
  std::vector<DetectionRecord> sorted;
  for (const auto& r : records)
    if (r.label != kLabelBackground) sorted.push_back(r);
  std::sort(sorted.begin(), sorted.end(), record_order);
  std::vector<DetectionRecord> kept;
  for (const auto& r : sorted) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (k.image_id == r.image_id && k.label == r.label && iou(k.box, r.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(r);
  }
  return kept;
}

std::vector<Certainty> classify_uncertainty(std::span<const DetectionRecord> records, const CascadeConfig& cfg) {
  std::vector<Certainty> out(records.size(), Certainty::Certain);
  if (cfg.theta_c <= 0) return out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (cfg.theta_c >= 1 || r.confidence < cfg.theta_c) {
      out[i] = Certainty::Uncertain;
      continue;
    }
    if (!cfg.conflict_rule) continue;
    for (std::size_t j = 0; j < records.size(); ++j) {
      const auto& o = records[j];
      if (j != i && o.image_id == r.image_id && opposite(r.label, o.label) && o.confidence >= cfg.theta_c &&
          iou(r.box, o.box) > cfg.iou_conflict) {
        out[i] = Certainty::Uncertain;
        break;
      }
    }
  }
  return out;
}

double spmt_box_score(const GrayImage& image, const BoundingBox& box, const SpmtModel& spmt, const SvmModel& svm,
                      const BovwEncoder* encoder) {
  const auto face = crop_expanded(image, box, 1.1);
  if (encoder) return svm_score(svm, extract_spmt(face, spmt, *encoder).features());
  return svm_score(svm, extract_spmt(face, spmt).features());
}

std::vector<CascadeDecision> cascade_decide(const GrayImage& image, std::span<const DetectionRecord> records,
                                            const CascadeConfig& cfg, const SpmtModel& spmt, const SvmModel& svm) {
  cfg.validate();
  const auto kept = nms(records, cfg.iou_nms);
  const auto certainty = classify_uncertainty(kept, cfg);
  std::optional<BovwEncoder> encoder;
  if (std::find(certainty.begin(), certainty.end(), Certainty::Uncertain) != certainty.end()) {
    encoder.emplace(spmt.codebook);
  }
  std::vector<CascadeDecision> out;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    CascadeDecision d{kept[i], certainty[i], -1, "", std::nullopt, ""};
    if (certainty[i] == Certainty::Certain) {
      d.final_label = kept[i].label;
      d.provenance = "detector";
    } else {
      try {
        const double s = spmt_box_score(image, kept[i].box, spmt, svm, &*encoder);
        d.svm_score = s;
        d.final_label = s >= 0 ? kLabelReal : kLabelFake;
        d.provenance = "svm";
      } catch (const GeometryError& e) {
        d.provenance = "unresolved";
        d.error = e.what();
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<double> anchor_scales(double sc_min, double sc_max, int layers) {
  if (!(sc_min > 0 && sc_min < sc_max && sc_max <= 1)) throw ConfigError("anchor scales need 0 < sc_min < sc_max <= 1");
  if (layers < 2) throw ConfigError("anchor scales need at least two layers");
  std::vector<double> out(layers);
  for (int i = 1; i <= layers; ++i) out[i - 1] = sc_min + (i - 1) * (sc_max - sc_min) / (layers - 1);
  out.back() = sc_max;
  return out;
}

DetectionRecord parse_detection(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    DetectionRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.box = {j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(), j.at("h").get<double>()};
    r.label = j.at("label").get<int>();
    r.confidence = j.at("confidence").get<double>();
    if (r.label < 0 || r.label > 2) throw FormatError("detection label must be 0, 1 or 2");
    if (!(r.confidence >= 0 && r.confidence <= 1)) throw FormatError("detection confidence must lie in [0, 1]");
    if (!(r.box.w > 0 && r.box.h > 0)) throw FormatError("detection box must have positive extent");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed detection record: ") + e.what());
  }
}

std::string detection_to_json(const DetectionRecord& r) {
  nlohmann::ordered_json j;
  j["image_id"] = r.image_id;
  j["x"] = r.box.x;
  j["y"] = r.box.y;
  j["w"] = r.box.w;
  j["h"] = r.box.h;
  j["label"] = r.label;
  j["confidence"] = r.confidence;
  return j.dump();
}

std::vector<DetectionRecord> read_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<DetectionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_detection(line));
  }
  return out;
}

void write_detections(const std::string& path, std::span<const DetectionRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  for (const auto& r : records) out << detection_to_json(r) << "\n";
}

std::string decision_to_json(const CascadeDecision& d) {
  auto j = nlohmann::ordered_json::parse(detection_to_json(d.record));
  j["certainty"] = d.certainty == Certainty::Certain ? "certain" : "uncertain";
  j["final_label"] = d.final_label;
  j["provenance"] = d.provenance;
  if (d.svm_score) j["svm_score"] = *d.svm_score;
  if (!d.error.empty()) j["error"] = d.error;
  return j.dump();
}

std::vector<DetectionRecord> mock_detections(std::span<const MockImage> images, std::size_t count,
                                             std::uint64_t seed) {
  if (images.empty()) throw PreconditionError("mock detections need at least one image");
  Rng rng(seed);
  std::vector<DetectionRecord> out;
  while (out.size() < count) {
    const auto& img = images[uniform_index(rng, images.size())];
    const double side = uniform(rng, 0.25, 0.5) * std::min(img.height, img.width);
    DetectionRecord r;
    r.image_id = img.id;
    r.box = {uniform(rng, 0, img.width - side), uniform(rng, 0, img.height - side), side, side * 1.2};
    r.box.h = std::min(r.box.h, img.height - r.box.y);
    r.label = uniform01(rng) < 0.5 ? kLabelReal : kLabelFake;
    const double kind = uniform01(rng);
    r.confidence = kind < 0.5 ? uniform(rng, 0.92, 0.999) : uniform(rng, 0.3, 0.92);
    out.push_back(r);
    if (kind > 0.85 && out.size() < count) {
      // Conflicting box: opposite label, near-identical location.
      DetectionRecord c = r;
      c.label = r.label == kLabelReal ? kLabelFake : kLabelReal;
      c.box.x = std::clamp(r.box.x + uniform(rng, -2, 2), 0.0, img.width - r.box.w);
      c.confidence = uniform(rng, 0.93, 0.999);
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace facepad
