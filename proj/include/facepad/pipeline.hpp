#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "facepad/cascade.hpp"
#include "facepad/metrics.hpp"
#include "facepad/spmt.hpp"
#include "facepad/svm.hpp"
#include "facepad/tfbd.hpp"

namespace facepad {

// One line of a dataset manifest (line-delimited JSON):
// {"path", "label": "genuine"|"attack", "attack_type"?, "landmark_path"?, "pair_path"?, "id"?}
// Relative paths are resolved against the manifest's directory.
struct ManifestEntry {
  std::string id;
  std::string path;
  FaceClass label = FaceClass::Genuine;
  std::string attack_type;
  std::string landmark_path;  // eye-centre file used to crop the face
  std::string pair_path;      // landmark-pair file holding one record
};

FaceClass parse_face_class(std::string_view s);
ManifestEntry parse_manifest_line(const std::string& line, const std::string& base_dir = "");
std::vector<ManifestEntry> read_manifest(const std::string& path);
// Paths are written as stored.
void write_manifest(const std::string& path, std::span<const ManifestEntry> entries);

// {"left_eye": [x, y], "right_eye": [x, y]}
EyeCropSpec read_eye_file(const std::string& path);
void write_eye_file(const std::string& path, const EyeCropSpec& eyes);

// The 120x100 face plane of an entry: eye-based crop when landmark_path is
// set, otherwise the whole image resized.
GrayImage load_face(const ManifestEntry& entry);

// {"units": {"intrinsics": "px", "translation": <unit>}, "M_l": 3x3, "M_r": 3x3,
//  "R_c": 3x3, "t_c": [3]}; (R_c, t_c) map right-camera coordinates to the left frame.
CameraCalib parse_calibration(const nlohmann::json& j);
nlohmann::json calibration_to_json(const CameraCalib& calib);
CameraCalib read_calibration(const std::string& path);
void write_calibration(const std::string& path, const CameraCalib& calib);

// Line-delimited {"id", "left": [[u, v] x 68], "right": [[u, v] x 68]}.
LandmarkPair parse_landmark_pair(const std::string& line);
std::string landmark_pair_to_json(const LandmarkPair& pair);
std::vector<LandmarkPair> read_landmark_pairs(const std::string& path);
void write_landmark_pairs(const std::string& path, std::span<const LandmarkPair> pairs);

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t pair_budget = kDefaultPairBudget;
  int fisher_faces_per_class = 1000;
  double sample_rate = kDefaultSampleRate;
  int codebook_size = kDefaultCodebookSize;
  int pyramid_levels = kDefaultPyramidLevels;
  int pca_components = kDefaultPcaComponents;
  RegistrationOptions registration;
  CascadeConfig cascade;
  FusionRatio fusion{0.5, 0.5};
  SvmGrid grid;
  double far_level = 0.1;
  std::string calibration_path;
  std::string template_pairs_path;  // captures for the template face; genuine training pairs otherwise
  int threads = 0;                  // 0 picks the hardware concurrency

  // Throws ConfigError for out-of-range values.
  void validate() const;

  // Unknown keys are rejected; missing keys keep their defaults.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

inline constexpr std::string_view kBundleVersion = "facepad-bundle/1";

struct ModelBundle {
  std::string version{kBundleVersion};
  SpmtModel spmt;
  SvmModel spmt_svm;
  std::optional<TemplateFace> tmpl;
  std::optional<SvmModel> tfbd_svm;
  std::optional<CameraCalib> calib;
  RegistrationOptions registration;
  CascadeConfig cascade;
  FusionRatio fusion{0.5, 0.5};

  bool has_tfbd() const { return tmpl && tfbd_svm && calib; }

  std::string serialize() const;
  static ModelBundle deserialize(std::string_view bytes);
  void save(const std::string& path) const;
  static ModelBundle load(const std::string& path);
};

// A decoded training or test sample.
struct Sample {
  std::string id;
  FaceClass label = FaceClass::Genuine;
  std::string attack_type;
  GrayImage face;  // 120x100
  std::optional<LandmarkPair> pair;
};

std::vector<Sample> load_samples(std::span<const ManifestEntry> entries, int threads = 0);

// Fisher face, codebook, class-specific faces, PCA and the SPMT SVM, then the
// template face and TFBD SVM when every sample carries a landmark pair.
// Throws ManifestError when only some samples carry pairs or when pairs come
// without a calibration.
ModelBundle train_bundle(std::span<const Sample> samples, const RunConfig& config,
                         const std::optional<CameraCalib>& calib = std::nullopt,
                         std::span<const LandmarkPair> template_pairs = {});

// Reads the manifest entries plus the calibration and template captures named
// in the config.
ModelBundle train_all(std::span<const ManifestEntry> entries, const RunConfig& config);

enum class Mode { Spmt, Tfbd, Fused, Cascade };

Mode parse_mode(std::string_view s);
const char* to_string(Mode m);

struct PredictInput {
  GrayImage face;  // 120x100
  std::optional<LandmarkPair> pair;
};

struct Prediction {
  FaceClass label = FaceClass::Genuine;
  // SVM decision value for spmt/tfbd; fused probability for fused.
  double score = 0;
  std::string provenance;
  std::optional<double> spmt_score;
  std::optional<double> tfbd_score;
};

// Throws ModeError when the bundle lacks the mode's components (or for
// cascade, which needs detections; see predict_cascade) and
// PreconditionError when tfbd input lacks a landmark pair.
Prediction predict(const PredictInput& input, const ModelBundle& bundle, Mode mode);

std::vector<CascadeDecision> predict_cascade(const GrayImage& image, std::span<const DetectionRecord> records,
                                             const ModelBundle& bundle);

// Per-sample scores in manifest order.
std::vector<ScoredSample> score_samples(std::span<const Sample> samples, const ModelBundle& bundle, Mode mode,
                                        int threads = 0);

struct Evaluation {
  MetricsReport report;
  std::vector<ScoredSample> scores;
};

// Throws ManifestError for an empty manifest.
Evaluation evaluate(std::span<const ManifestEntry> entries, const ModelBundle& bundle, Mode mode,
                    const ThresholdSpec& threshold = ThresholdSpec::eer(), double far_level = 0.1,
                    int threads = 0);

// Line-delimited {"id", "score", "label", "attack_type"}.
std::string scores_to_jsonl(std::span<const ScoredSample> scores);
void write_scores(const std::string& path, std::span<const ScoredSample> scores);
std::vector<ScoredSample> read_scores(const std::string& path);

// On-disk synthetic dataset: texture faces, optional stereo landmark pairs
// (curved genuine faces, planar attacks), template captures, and optional
// scene images with mock detector records.
struct SyntheticSpec {
  int n_per_class = 20;
  double cutoff = 0.08;
  double grain = 12.0;
  bool stereo = true;
  int template_captures = 20;
  double noise_px = 0.5;
  int scenes = 0;
  std::size_t detections_per_scene = 40;
  std::uint64_t seed = 0;
};

struct SyntheticPaths {
  std::string manifest;
  std::string config;          // names the calibration and template captures
  std::string calibration;     // empty without stereo
  std::string template_pairs;  // empty without stereo
  std::string detections;      // empty without scenes
  std::vector<std::string> scenes;
};

SyntheticPaths write_synthetic_dataset(const std::string& dir, const SyntheticSpec& spec);

}  // namespace facepad
