#include "facepad/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include "facepad/errors.hpp"
#include "facepad/image_io.hpp"
#include "facepad/random.hpp"
#include "facepad/serialize.hpp"
#include "facepad/synth.hpp"

namespace facepad {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Runs fn(i) for i in [0, n) on a small worker pool. Results must be written
// to per-index slots; the lowest-index failure is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct Line {
  std::size_t number;  // 1-based, counting blank lines
  std::string text;
};

// Non-blank lines of a text file.
std::vector<Line> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path);
  std::vector<Line> lines;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    lines.push_back({n, line});
  }
  return lines;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out << text;
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("malformed " + what + ": " + e.what());
  }
}

Mat3 mat3_from_json(const json& j, const char* name) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(name) + " must be a 3x3 matrix");
  Mat3 m{};
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_array() || j[i].size() != 3) throw ConfigError(std::string(name) + " must be a 3x3 matrix");
    for (int k = 0; k < 3; ++k) m[i][k] = j[i][k].get<double>();
  }
  return m;
}

json mat3_to_json(const Mat3& m) {
  json j = json::array();
  for (const auto& row : m) j.push_back({row[0], row[1], row[2]});
  return j;
}

Intrinsics intrinsics_from(const Mat3& k, const char* name) {
  if (k[0][1] != 0 || k[1][0] != 0 || k[2][0] != 0 || k[2][1] != 0 || k[2][2] != 1) {
    throw ConfigError(std::string(name) + " must be a zero-skew intrinsic matrix with last row [0, 0, 1]");
  }
  return {k[0][0], k[1][1], k[0][2], k[1][2]};
}

std::vector<Pixel> pixels_from(const json& j, const char* side) {
  if (!j.is_array() || j.size() != kLandmarkCount) {
    throw FormatError(std::string("landmark pair needs 68 ") + side + " points");
  }
  std::vector<Pixel> out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2) throw FormatError("landmark points are [u, v] pairs");
    Pixel px{p[0].get<double>(), p[1].get<double>()};
    if (!std::isfinite(px.u) || !std::isfinite(px.v)) throw FormatError("landmark coordinates must be finite");
    out.push_back(px);
  }
  return out;
}

void write_calib(ByteWriter& w, const CameraCalib& c) {
  for (const auto* k : {&c.left, &c.right}) {
    w.f64(k->fx);
    w.f64(k->fy);
    w.f64(k->cx);
    w.f64(k->cy);
  }
  for (const auto& row : c.rotation)
    for (double v : row) w.f64(v);
  for (double v : c.translation) w.f64(v);
  w.str(c.units);
}

CameraCalib read_calib(ByteReader& r) {
  CameraCalib c;
  for (auto* k : {&c.left, &c.right}) {
    k->fx = r.f64();
    k->fy = r.f64();
    k->cx = r.f64();
    k->cy = r.f64();
  }
  for (auto& row : c.rotation)
    for (double& v : row) v = r.f64();
  for (double& v : c.translation) v = r.f64();
  c.units = r.str();
  return c;
}

std::string write_conf(const ModelBundle& b) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(b.spmt.levels));
  w.f64(b.cascade.theta_c);
  w.f64(b.cascade.iou_nms);
  w.f64(b.cascade.iou_conflict);
  w.u8(b.cascade.conflict_rule ? 1 : 0);
  w.f64(b.fusion.spmt);
  w.f64(b.fusion.tfbd);
  w.u32(static_cast<std::uint32_t>(b.registration.n_max));
  w.u32(static_cast<std::uint32_t>(b.registration.n_min));
  w.u8(b.registration.reweight ? 1 : 0);
  return w.take();
}

void read_conf(std::string_view bytes, ModelBundle& b) {
  ByteReader r(bytes);
  b.spmt.levels = static_cast<int>(r.u32());
  b.cascade.theta_c = r.f64();
  b.cascade.iou_nms = r.f64();
  b.cascade.iou_conflict = r.f64();
  b.cascade.conflict_rule = r.u8() != 0;
  b.fusion.spmt = r.f64();
  b.fusion.tfbd = r.f64();
  b.registration.n_max = static_cast<int>(r.u32());
  b.registration.n_min = static_cast<int>(r.u32());
  b.registration.reweight = r.u8() != 0;
  if (!r.done()) throw FormatError("trailing bytes in bundle configuration");
}

int label_sign(FaceClass c) { return c == FaceClass::Genuine ? 1 : -1; }

std::vector<int> labels_of(std::span<const Sample> samples) {
  std::vector<int> y;
  for (const auto& s : samples) y.push_back(label_sign(s.label));
  return y;
}

// Deterministic per-stage seeds derived from the run seed.
std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stage + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::vector<GrayImage> pick_faces(std::span<const Sample> samples, FaceClass cls, int limit, std::uint64_t seed) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].label == cls) idx.push_back(i);
  if (static_cast<int>(idx.size()) > limit) {
    Rng rng(seed);
    for (std::size_t i = 0; i < static_cast<std::size_t>(limit); ++i) {
      std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
    }
    idx.resize(static_cast<std::size_t>(limit));
    std::sort(idx.begin(), idx.end());
  }
  std::vector<GrayImage> out;
  for (std::size_t i : idx) out.push_back(samples[i].face);
  return out;
}

double tfbd_score(const LandmarkPair& pair, const ModelBundle& b) {
  const auto reg = extract_tfbd(pair, *b.calib, *b.tmpl, b.registration);
  return svm_score(*b.tfbd_svm, reg.depths);
}

}  // namespace

FaceClass parse_face_class(std::string_view s) {
  if (s == "genuine" || s == "real") return FaceClass::Genuine;
  if (s == "attack" || s == "fake") return FaceClass::Attack;
  throw ManifestError("unknown label '" + std::string(s) + "' (expected genuine or attack)");
}

ManifestEntry parse_manifest_line(const std::string& line, const std::string& base_dir) {
  json j;
  try {
    j = parse_json(line, "manifest line");
  } catch (const FormatError& ex) {
    throw ManifestError(ex.what());
  }
  ManifestEntry e;
  try {
    e.path = resolve(base_dir, j.at("path").get<std::string>());
    e.label = parse_face_class(j.at("label").get<std::string>());
    e.attack_type = j.value("attack_type", std::string());
    e.landmark_path = resolve(base_dir, j.value("landmark_path", std::string()));
    e.pair_path = resolve(base_dir, j.value("pair_path", std::string()));
    e.id = j.value("id", fs::path(e.path).stem().string());
  } catch (const json::exception& ex) {
    throw ManifestError(std::string("malformed manifest line: ") + ex.what());
  }
  return e;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  const std::string base = fs::path(path).parent_path().string();
  std::vector<ManifestEntry> out;
  const auto lines = read_lines(path);
  for (const auto& line : lines) {
    try {
      out.push_back(parse_manifest_line(line.text, base));
    } catch (const Error& e) {
      throw ManifestError(path + ":" + std::to_string(line.number) + ": " + e.what());
    }
  }
  return out;
}

void write_manifest(const std::string& path, std::span<const ManifestEntry> entries) {
  std::string text;
  for (const auto& e : entries) {
    ordered_json j;
    j["id"] = e.id;
    j["path"] = e.path;
    j["label"] = to_string(e.label);
    if (!e.attack_type.empty()) j["attack_type"] = e.attack_type;
    if (!e.landmark_path.empty()) j["landmark_path"] = e.landmark_path;
    if (!e.pair_path.empty()) j["pair_path"] = e.pair_path;
    text += j.dump() + "\n";
  }
  write_text(path, text);
}

EyeCropSpec read_eye_file(const std::string& path) {
  const auto j = parse_json(read_file(path), "eye file " + path);
  EyeCropSpec s;
  try {
    s.left_eye = {j.at("left_eye").at(0).get<double>(), j.at("left_eye").at(1).get<double>()};
    s.right_eye = {j.at("right_eye").at(0).get<double>(), j.at("right_eye").at(1).get<double>()};
  } catch (const json::exception& e) {
    throw FormatError("malformed eye file " + path + ": " + e.what());
  }
  return s;
}

void write_eye_file(const std::string& path, const EyeCropSpec& eyes) {
  ordered_json j;
  j["left_eye"] = {eyes.left_eye.x, eyes.left_eye.y};
  j["right_eye"] = {eyes.right_eye.x, eyes.right_eye.y};
  write_text(path, j.dump() + "\n");
}

GrayImage load_face(const ManifestEntry& entry) {
  const GrayImage img = load_gray(entry.path);
  if (!entry.landmark_path.empty()) return crop_by_eyes(img, read_eye_file(entry.landmark_path));
  return to_face_plane(img);
}

CameraCalib parse_calibration(const json& j) {
  try {
    const auto& units = j.at("units");
    const std::string intr = units.at("intrinsics").get<std::string>();
    if (intr != "px" && intr != "pixels") throw ConfigError("intrinsics must be given in pixels");
    CameraCalib c;
    c.units = units.at("translation").get<std::string>();
    if (c.units.empty()) throw ConfigError("translation units must be named");
    c.left = intrinsics_from(mat3_from_json(j.at("M_l"), "M_l"), "M_l");
    c.right = intrinsics_from(mat3_from_json(j.at("M_r"), "M_r"), "M_r");
    c.rotation = mat3_from_json(j.at("R_c"), "R_c");
    const auto& t = j.at("t_c");
    if (!t.is_array() || t.size() != 3) throw ConfigError("t_c must hold three values");
    for (int i = 0; i < 3; ++i) c.translation[i] = t[i].get<double>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed calibration: ") + e.what());
  }
}

json calibration_to_json(const CameraCalib& c) {
  ordered_json j;
  j["units"] = {{"intrinsics", "px"}, {"translation", c.units}};
  j["M_l"] = mat3_to_json(c.left.matrix());
  j["M_r"] = mat3_to_json(c.right.matrix());
  j["R_c"] = mat3_to_json(c.rotation);
  j["t_c"] = {c.translation[0], c.translation[1], c.translation[2]};
  return json(j);
}

CameraCalib read_calibration(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  try {
    return parse_calibration(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError("malformed calibration " + path + ": " + e.what());
  }
}

void write_calibration(const std::string& path, const CameraCalib& calib) {
  write_text(path, calibration_to_json(calib).dump(2) + "\n");
}

LandmarkPair parse_landmark_pair(const std::string& line) {
  const auto j = parse_json(line, "landmark pair");
  LandmarkPair p;
  try {
    p.id = j.value("id", std::string());
    p.left = pixels_from(j.at("left"), "left");
    p.right = pixels_from(j.at("right"), "right");
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed landmark pair: ") + e.what());
  }
  return p;
}

std::string landmark_pair_to_json(const LandmarkPair& pair) {
  ordered_json j;
  j["id"] = pair.id;
  for (const auto& [key, pts] : {std::pair{"left", &pair.left}, std::pair{"right", &pair.right}}) {
    json arr = json::array();
    for (const auto& p : *pts) arr.push_back({p.u, p.v});
    j[key] = arr;
  }
  return j.dump();
}

std::vector<LandmarkPair> read_landmark_pairs(const std::string& path) {
  std::vector<LandmarkPair> out;
  const auto lines = read_lines(path);
  for (const auto& line : lines) {
    try {
      out.push_back(parse_landmark_pair(line.text));
    } catch (const Error& e) {
      throw FormatError(path + ":" + std::to_string(line.number) + ": " + e.what());
    }
  }
  return out;
}

void write_landmark_pairs(const std::string& path, std::span<const LandmarkPair> pairs) {
  std::string text;
  for (const auto& p : pairs) text += landmark_pair_to_json(p) + "\n";
  write_text(path, text);
}

void RunConfig::validate() const {
  if (pair_budget < 1) throw ConfigError("pair_budget must be at least 1");
  if (fisher_faces_per_class < 2) throw ConfigError("fisher_faces_per_class must be at least 2");
  if (!(sample_rate > 0 && sample_rate <= 1)) throw ConfigError("sample_rate must lie in (0, 1]");
  if (codebook_size < 2 || codebook_size > 65535) throw ConfigError("codebook_size must lie in [2, 65535]");
  if (pyramid_levels < 1 || pyramid_levels > 4) throw ConfigError("pyramid_levels must lie in [1, 4]");
  if (pca_components < 0) throw ConfigError("pca_components must be non-negative (0 disables PCA)");
  if (registration.n_max < 1) throw ConfigError("n_max must be at least 1");
  if (registration.n_min < 3 || registration.n_min > kLandmarkCount) throw ConfigError("n_min must lie in [3, 68]");
  cascade.validate();
  if (fusion.spmt < 0 || fusion.tfbd < 0 || !(fusion.spmt + fusion.tfbd > 0)) {
    throw ConfigError("fusion ratio must be non-negative with a positive sum");
  }
  if (grid.c_values.empty() || grid.gamma_factors.empty()) throw ConfigError("SVM grid must not be empty");
  for (double c : grid.c_values)
    if (!(c > 0)) throw ConfigError("SVM C values must be positive");
  for (double g : grid.gamma_factors)
    if (!(g > 0)) throw ConfigError("SVM gamma factors must be positive");
  if (grid.folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (!(far_level > 0 && far_level < 1)) throw ConfigError("far_level must lie in (0, 1)");
  if (threads < 0) throw ConfigError("threads must be non-negative");
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  static const char* kKeys[] = {"seed",           "pair_budget",  "fisher_faces_per_class", "sample_rate",
                                "codebook_size",  "pyramid_levels", "pca_components",      "n_max",
                                "n_min",          "reweight",     "theta_c",                "iou_nms",
                                "iou_conflict",   "conflict_rule", "fusion",                "svm_c",
                                "svm_gamma_factors", "svm_folds", "far_level",              "calibration_path",
                                "template_pairs_path", "threads"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; }) ==
        std::end(kKeys)) {
      throw ConfigError("unknown configuration key '" + key + "'");
    }
  }
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.pair_budget = j.value("pair_budget", c.pair_budget);
    c.fisher_faces_per_class = j.value("fisher_faces_per_class", c.fisher_faces_per_class);
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    c.codebook_size = j.value("codebook_size", c.codebook_size);
    c.pyramid_levels = j.value("pyramid_levels", c.pyramid_levels);
    c.pca_components = j.value("pca_components", c.pca_components);
    c.registration.n_max = j.value("n_max", c.registration.n_max);
    c.registration.n_min = j.value("n_min", c.registration.n_min);
    c.registration.reweight = j.value("reweight", c.registration.reweight);
    c.cascade.theta_c = j.value("theta_c", c.cascade.theta_c);
    c.cascade.iou_nms = j.value("iou_nms", c.cascade.iou_nms);
    c.cascade.iou_conflict = j.value("iou_conflict", c.cascade.iou_conflict);
    c.cascade.conflict_rule = j.value("conflict_rule", c.cascade.conflict_rule);
    if (j.contains("fusion")) {
      const auto& f = j.at("fusion");
      if (!f.is_array() || f.size() != 2) throw ConfigError("fusion must be [spmt, tfbd]");
      c.fusion = {f[0].get<double>(), f[1].get<double>()};
    }
    c.grid.c_values = j.value("svm_c", c.grid.c_values);
    c.grid.gamma_factors = j.value("svm_gamma_factors", c.grid.gamma_factors);
    c.grid.folds = j.value("svm_folds", c.grid.folds);
    c.far_level = j.value("far_level", c.far_level);
    c.calibration_path = j.value("calibration_path", c.calibration_path);
    c.template_pairs_path = j.value("template_pairs_path", c.template_pairs_path);
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("malformed configuration " + path + ": " + e.what());
  }
  RunConfig c = from_json(j);
  // Paths inside the config are relative to the config file.
  const std::string base = fs::path(path).parent_path().string();
  c.calibration_path = resolve(base, c.calibration_path);
  c.template_pairs_path = resolve(base, c.template_pairs_path);
  return c;
}

json RunConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["pair_budget"] = pair_budget;
  j["fisher_faces_per_class"] = fisher_faces_per_class;
  j["sample_rate"] = sample_rate;
  j["codebook_size"] = codebook_size;
  j["pyramid_levels"] = pyramid_levels;
  j["pca_components"] = pca_components;
  j["n_max"] = registration.n_max;
  j["n_min"] = registration.n_min;
  j["reweight"] = registration.reweight;
  j["theta_c"] = cascade.theta_c;
  j["iou_nms"] = cascade.iou_nms;
  j["iou_conflict"] = cascade.iou_conflict;
  j["conflict_rule"] = cascade.conflict_rule;
  j["fusion"] = {fusion.spmt, fusion.tfbd};
  j["svm_c"] = grid.c_values;
  j["svm_gamma_factors"] = grid.gamma_factors;
  j["svm_folds"] = grid.folds;
  j["far_level"] = far_level;
  j["calibration_path"] = calibration_path;
  j["template_pairs_path"] = template_pairs_path;
  j["threads"] = threads;
  return json(j);
}

std::string ModelBundle::serialize() const {
  std::vector<std::pair<std::string, std::string>> sections;
  sections.emplace_back("CONF", write_conf(*this));
  sections.emplace_back("FISH", spmt.fisher.serialize());
  sections.emplace_back("CBOK", spmt.codebook.serialize());
  sections.emplace_back("CSFG", spmt.genuine.serialize());
  sections.emplace_back("CSFA", spmt.attack.serialize());
  if (spmt.pca) sections.emplace_back("PCAM", spmt.pca->serialize());
  sections.emplace_back("SSVM", spmt_svm.serialize());
  if (tmpl) sections.emplace_back("TMPL", tmpl->serialize());
  if (tfbd_svm) sections.emplace_back("TSVM", tfbd_svm->serialize());
  if (calib) {
    ByteWriter cw;
    write_calib(cw, *calib);
    sections.emplace_back("CALB", cw.take());
  }
  ByteWriter w;
  w.magic("FPBUNDLE");
  w.str(version);
  w.u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& [tag, payload] : sections) {
    w.str(tag);
    w.str(payload);
  }
  return w.take();
}

ModelBundle ModelBundle::deserialize(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect_magic("FPBUNDLE");
  ModelBundle b;
  b.version = r.str();
  if (b.version != kBundleVersion) {
    throw ModelCompatibilityError("bundle version '" + b.version + "' is not supported (expected " +
                                  std::string(kBundleVersion) + ")");
  }
  std::map<std::string, std::string> sections;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string tag = r.str();
    if (sections.count(tag)) throw FormatError("duplicate bundle section " + tag);
    sections[tag] = r.str();
  }
  if (!r.done()) throw FormatError("trailing bytes after bundle sections");
  for (const char* required : {"CONF", "FISH", "CBOK", "CSFG", "CSFA", "SSVM"}) {
    if (!sections.count(required)) throw FormatError(std::string("bundle lacks section ") + required);
  }
  for (const auto& [tag, _] : sections) {
    static const char* kKnown[] = {"CONF", "FISH", "CBOK", "CSFG", "CSFA", "PCAM", "SSVM", "TMPL", "TSVM", "CALB"};
    if (std::find_if(std::begin(kKnown), std::end(kKnown), [&](const char* k) { return tag == k; }) ==
        std::end(kKnown)) {
      throw FormatError("unknown bundle section " + tag);
    }
  }
  read_conf(sections["CONF"], b);
  b.spmt.fisher = FisherFace::deserialize(sections["FISH"]);
  b.spmt.codebook = Codebook::deserialize(sections["CBOK"]);
  b.spmt.genuine = ClassSpecificFace::deserialize(sections["CSFG"]);
  b.spmt.attack = ClassSpecificFace::deserialize(sections["CSFA"]);
  if (sections.count("PCAM")) b.spmt.pca = PcaModel::deserialize(sections["PCAM"]);
  b.spmt_svm = SvmModel::deserialize(sections["SSVM"]);
  if (sections.count("TMPL")) b.tmpl = TemplateFace::deserialize(sections["TMPL"]);
  if (sections.count("TSVM")) b.tfbd_svm = SvmModel::deserialize(sections["TSVM"]);
  if (sections.count("CALB")) {
    ByteReader cr(sections["CALB"]);
    b.calib = read_calib(cr);
    if (!cr.done()) throw FormatError("trailing bytes in calibration section");
  }
  b.spmt.validate();
  const int expected = b.spmt.pca ? b.spmt.pca->components() : spmt_raw_length(b.spmt.codebook.size(), b.spmt.levels);
  if (b.spmt_svm.feature_dim != expected) {
    throw ModelCompatibilityError("SPMT SVM expects " + std::to_string(b.spmt_svm.feature_dim) +
                                  " features but the SPMT stage yields " + std::to_string(expected));
  }
  if (b.tfbd_svm && b.tfbd_svm->feature_dim != kLandmarkCount) {
    throw ModelCompatibilityError("TFBD SVM must take 68 features");
  }
  return b;
}

void ModelBundle::save(const std::string& path) const { write_file(path, serialize()); }

ModelBundle ModelBundle::load(const std::string& path) { return deserialize(read_file(path)); }

std::vector<Sample> load_samples(std::span<const ManifestEntry> entries, int threads) {
  std::vector<Sample> out(entries.size());
  parallel_for(entries.size(), threads, [&](std::size_t i) {
    const auto& e = entries[i];
    Sample s;
    s.id = e.id;
    s.label = e.label;
    s.attack_type = e.attack_type;
    try {
      s.face = load_face(e);
      if (!e.pair_path.empty()) {
        auto pairs = read_landmark_pairs(e.pair_path);
        if (pairs.size() != 1) throw FormatError("expected exactly one landmark pair record");
        if (pairs[0].id.empty()) pairs[0].id = e.id;
        s.pair = std::move(pairs[0]);
      }
    } catch (const Error& ex) {
      throw ManifestError("sample '" + e.id + "': " + ex.what());
    }
    out[i] = std::move(s);
  });
  return out;
}

ModelBundle train_bundle(std::span<const Sample> samples, const RunConfig& config,
                         const std::optional<CameraCalib>& calib, std::span<const LandmarkPair> template_pairs) {
  config.validate();
  if (samples.empty()) throw ManifestError("training manifest is empty");
  for (const auto& s : samples) {
    if (s.face.height != kFaceHeight || s.face.width != kFaceWidth) {
      throw DimensionError("sample '" + s.id + "' is not a 120x100 face");
    }
  }

  // TFBD is trained when any sample carries stereo landmarks; then all must.
  std::vector<std::string> missing;
  std::size_t with_pairs = 0;
  for (const auto& s : samples) {
    if (s.pair) ++with_pairs;
    else missing.push_back(s.id);
  }
  const bool want_tfbd = with_pairs > 0;
  if (want_tfbd) {
    std::string gaps;
    if (!missing.empty()) {
      gaps += "samples without landmark pairs:";
      for (const auto& id : missing) gaps += " " + id;
    }
    if (!calib) gaps += std::string(gaps.empty() ? "" : "; ") + "no stereo calibration supplied";
    if (!gaps.empty()) throw ManifestError("TFBD training inputs incomplete: " + gaps);
  }

  ModelBundle b;
  b.registration = config.registration;
  b.cascade = config.cascade;
  b.fusion = config.fusion;
  b.spmt.levels = config.pyramid_levels;

  // Fisher face.
  const auto real = pick_faces(samples, FaceClass::Genuine, config.fisher_faces_per_class, stage_seed(config.seed, 0));
  const auto fake = pick_faces(samples, FaceClass::Attack, config.fisher_faces_per_class, stage_seed(config.seed, 1));
  b.spmt.fisher = build_fisher_face(real, fake, config.pair_budget, stage_seed(config.seed, 2));

  // Codebook.
  std::vector<MslbpFace> codes(samples.size());
  parallel_for(samples.size(), config.threads, [&](std::size_t i) { codes[i] = mslbp_face(samples[i].face); });
  b.spmt.codebook = train_codebook(codes, config.sample_rate, config.codebook_size, stage_seed(config.seed, 3));

  // Class-specific faces.
  const BovwEncoder encoder(b.spmt.codebook);
  std::vector<BovwFace> bovw(samples.size());
  parallel_for(samples.size(), config.threads, [&](std::size_t i) { bovw[i] = encoder.encode(codes[i]); });
  codes.clear();
  std::vector<BovwFace> g_faces, f_faces;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (samples[i].label == FaceClass::Genuine ? g_faces : f_faces).push_back(bovw[i]);
  }
  if (g_faces.empty() || f_faces.empty()) throw InsufficientDataError("training needs both genuine and attack samples");
  b.spmt.genuine = class_specific_face(g_faces, FaceClass::Genuine);
  b.spmt.attack = class_specific_face(f_faces, FaceClass::Attack);

  // PCA over raw SPMT vectors.
  std::vector<std::vector<double>> raw(samples.size());
  parallel_for(samples.size(), config.threads, [&](std::size_t i) { raw[i] = extract_spmt(bovw[i], b.spmt).raw; });
  std::vector<std::vector<double>> features;
  if (config.pca_components > 0) {
    b.spmt.pca = pca_fit(raw, config.pca_components);
    features.resize(raw.size());
    parallel_for(raw.size(), config.threads,
                 [&](std::size_t i) { features[i] = pca_project(raw[i], *b.spmt.pca); });
  } else {
    features = std::move(raw);
  }

  // SPMT SVM.
  const auto labels = labels_of(samples);
  b.spmt_svm = svm_train_cv(features, labels, config.grid, stage_seed(config.seed, 4));

  // Template face and TFBD SVM.
  if (want_tfbd) {
    b.calib = *calib;
    std::vector<LandmarkPair> captures(template_pairs.begin(), template_pairs.end());
    if (captures.empty()) {
      for (const auto& s : samples)
        if (s.label == FaceClass::Genuine) captures.push_back(*s.pair);
    }
    b.tmpl = build_template(captures, *calib);
    std::vector<std::vector<double>> depths(samples.size());
    parallel_for(samples.size(), config.threads, [&](std::size_t i) {
      try {
        depths[i] = extract_tfbd(*samples[i].pair, *calib, *b.tmpl, config.registration).depths;
      } catch (const Error& e) {
        throw ManifestError("sample '" + samples[i].id + "': " + e.what());
      }
    });
    b.tfbd_svm = svm_train_cv(depths, labels, config.grid, stage_seed(config.seed, 5));
  }
  return b;
}

ModelBundle train_all(std::span<const ManifestEntry> entries, const RunConfig& config) {
  config.validate();
  if (entries.empty()) throw ManifestError("training manifest is empty");
  const auto samples = load_samples(entries, config.threads);
  std::optional<CameraCalib> calib;
  if (!config.calibration_path.empty()) calib = read_calibration(config.calibration_path);
  std::vector<LandmarkPair> captures;
  if (!config.template_pairs_path.empty()) captures = read_landmark_pairs(config.template_pairs_path);
  return train_bundle(samples, config, calib, captures);
}

Mode parse_mode(std::string_view s) {
  if (s == "spmt") return Mode::Spmt;
  if (s == "tfbd") return Mode::Tfbd;
  if (s == "fused") return Mode::Fused;
  if (s == "cascade") return Mode::Cascade;
  throw ModeError("unknown mode '" + std::string(s) + "' (expected spmt, tfbd, fused or cascade)");
}

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Spmt: return "spmt";
    case Mode::Tfbd: return "tfbd";
    case Mode::Fused: return "fused";
    case Mode::Cascade: return "cascade";
  }
  return "?";
}

namespace {

Prediction predict_with(const PredictInput& input, const ModelBundle& bundle, Mode mode, const BovwEncoder* encoder) {
  if (mode == Mode::Cascade) throw ModeError("cascade mode needs detection records");
  if ((mode == Mode::Tfbd || mode == Mode::Fused) && !bundle.has_tfbd()) {
    throw ModeError(std::string(to_string(mode)) + " mode needs TFBD components, which this bundle lacks");
  }
  if ((mode == Mode::Tfbd || mode == Mode::Fused) && !input.pair) {
    throw PreconditionError(std::string(to_string(mode)) + " mode needs a landmark pair");
  }
  Prediction p;
  p.provenance = to_string(mode);
  if (mode == Mode::Spmt || mode == Mode::Fused) {
    const auto v = encoder ? extract_spmt(input.face, bundle.spmt, *encoder) : extract_spmt(input.face, bundle.spmt);
    p.spmt_score = svm_score(bundle.spmt_svm, v.features());
  }
  if (mode == Mode::Tfbd || mode == Mode::Fused) p.tfbd_score = tfbd_score(*input.pair, bundle);
  if (mode == Mode::Fused) {
    p.score = fuse_scores(*p.spmt_score, *p.tfbd_score, bundle.fusion);
    p.label = p.score >= 0.5 ? FaceClass::Genuine : FaceClass::Attack;
  } else {
    p.score = mode == Mode::Spmt ? *p.spmt_score : *p.tfbd_score;
    p.label = p.score >= 0 ? FaceClass::Genuine : FaceClass::Attack;
  }
  return p;
}

}  // namespace

Prediction predict(const PredictInput& input, const ModelBundle& bundle, Mode mode) {
  return predict_with(input, bundle, mode, nullptr);
}

std::vector<CascadeDecision> predict_cascade(const GrayImage& image, std::span<const DetectionRecord> records,
                                             const ModelBundle& bundle) {
  return cascade_decide(image, records, bundle.cascade, bundle.spmt, bundle.spmt_svm);
}

std::vector<ScoredSample> score_samples(std::span<const Sample> samples, const ModelBundle& bundle, Mode mode,
                                        int threads) {
  if (mode == Mode::Cascade) throw ModeError("cascade mode scores detection records, not manifest samples");
  if ((mode == Mode::Tfbd || mode == Mode::Fused) && !bundle.has_tfbd()) {
    throw ModeError(std::string(to_string(mode)) + " mode needs TFBD components, which this bundle lacks");
  }
  if (mode != Mode::Spmt) {
    std::string gaps;
    for (const auto& s : samples)
      if (!s.pair) gaps += " " + s.id;
    if (!gaps.empty()) throw ManifestError("samples without landmark pairs:" + gaps);
  }
  std::optional<BovwEncoder> encoder;
  if (mode != Mode::Tfbd) encoder.emplace(bundle.spmt.codebook);
  std::vector<ScoredSample> out(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const auto& s = samples[i];
    const auto p = predict_with({s.face, s.pair}, bundle, mode, encoder ? &*encoder : nullptr);
    out[i] = {s.id, p.score, s.label == FaceClass::Genuine, s.attack_type};
  });
  return out;
}

Evaluation evaluate(std::span<const ManifestEntry> entries, const ModelBundle& bundle, Mode mode,
                    const ThresholdSpec& threshold, double far_level, int threads) {
  if (entries.empty()) throw ManifestError("evaluation manifest is empty");
  const auto samples = load_samples(entries, threads);
  Evaluation ev;
  ev.scores = score_samples(samples, bundle, mode, threads);
  ev.report = compute_metrics(ev.scores, threshold, far_level);
  return ev;
}

std::string scores_to_jsonl(std::span<const ScoredSample> scores) {
  std::string text;
  for (const auto& s : scores) {
    ordered_json j;
    j["id"] = s.id;
    j["score"] = s.score;
    j["label"] = s.genuine ? "genuine" : "attack";
    j["attack_type"] = s.attack_type;
    text += j.dump() + "\n";
  }
  return text;
}

void write_scores(const std::string& path, std::span<const ScoredSample> scores) {
  write_text(path, scores_to_jsonl(scores));
}

std::vector<ScoredSample> read_scores(const std::string& path) {
  std::vector<ScoredSample> out;
  for (const auto& line : read_lines(path)) {
    const auto j = parse_json(line.text, "score record");
    try {
      out.push_back({j.at("id").get<std::string>(), j.at("score").get<double>(),
                     parse_face_class(j.at("label").get<std::string>()) == FaceClass::Genuine,
                     j.value("attack_type", std::string())});
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed score record: ") + e.what());
    }
  }
  return out;
}

SyntheticPaths write_synthetic_dataset(const std::string& dir, const SyntheticSpec& spec) {
  if (spec.n_per_class < 1) throw ConfigError("n_per_class must be at least 1");
  if (spec.stereo && spec.template_captures < 1) throw ConfigError("template_captures must be at least 1");
  if (spec.scenes < 0) throw ConfigError("scenes must be non-negative");
  const fs::path root(dir);
  fs::create_directories(root / "images");
  SyntheticPaths out;
  out.manifest = (root / "manifest.jsonl").string();
  out.config = (root / "config.json").string();

  const auto images = gen_texture_dataset(spec.n_per_class, spec.cutoff, spec.grain, stage_seed(spec.seed, 1));
  const CameraCalib calib = default_calib();
  Rng rng(stage_seed(spec.seed, 2));
  std::vector<ManifestEntry> entries;
  for (const auto& img : images) {
    ManifestEntry e;
    e.id = img.id;
    e.label = img.label;
    e.attack_type = img.attack_type;
    e.path = "images/" + img.id + ".png";
    save_gray((root / e.path).string(), img.image);
    if (spec.stereo) {
      // Near-frontal pose jitter; see the README on pose sensitivity.
      StereoScene sc;
      sc.surface = img.label == FaceClass::Genuine ? SurfaceKind::Curved : SurfaceKind::Plane;
      sc.rotation = rotation_from_euler(uniform(rng, -0.05, 0.05), uniform(rng, -0.05, 0.05), uniform(rng, -0.1, 0.1));
      sc.translation = {uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, 50, 75)};
      sc.scale = uniform(rng, 0.9, 1.1);
      sc.noise_px = spec.noise_px;
      sc.calib = calib;
      sc.seed = rng();
      auto pair = gen_stereo_scene(sc).pair;
      pair.id = img.id;
      fs::create_directories(root / "pairs");
      e.pair_path = "pairs/" + img.id + ".jsonl";
      write_landmark_pairs((root / e.pair_path).string(), std::vector{pair});
    }
    entries.push_back(std::move(e));
  }
  write_manifest(out.manifest, entries);

  ordered_json cfg;
  cfg["seed"] = spec.seed;
  if (spec.stereo) {
    out.calibration = (root / "calib.json").string();
    out.template_pairs = (root / "template_pairs.jsonl").string();
    write_calibration(out.calibration, calib);
    write_landmark_pairs(out.template_pairs,
                         gen_template_captures(spec.template_captures, calib, stage_seed(spec.seed, 3)));
    cfg["calibration_path"] = "calib.json";
    cfg["template_pairs_path"] = "template_pairs.jsonl";
  }
  write_text(out.config, cfg.dump(2) + "\n");

  if (spec.scenes > 0) {
    fs::create_directories(root / "scenes");
    std::vector<MockImage> mocks;
    for (int i = 0; i < spec.scenes; ++i) {
      const std::string id = "scene_" + std::to_string(i);
      const auto cls = i % 2 ? FaceClass::Attack : FaceClass::Genuine;
      const auto img = gen_texture_image({cls, spec.cutoff, spec.grain, stage_seed(spec.seed, 100 + i)}, 240, 320);
      out.scenes.push_back((root / "scenes" / (id + ".png")).string());
      save_gray(out.scenes.back(), img);
      mocks.push_back({id, img.height, img.width});
    }
    out.detections = (root / "detections.jsonl").string();
    write_detections(out.detections,
                     mock_detections(mocks, spec.detections_per_scene * mocks.size(), stage_seed(spec.seed, 4)));
  }
  return out;
}

}  // namespace facepad
