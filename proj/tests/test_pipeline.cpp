#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "facepad/errors.hpp"
#include "facepad/image_io.hpp"
#include "facepad/pipeline.hpp"
#include "facepad/serialize.hpp"
#include "facepad/synth.hpp"
#include "test_util.hpp"

using namespace facepad;
namespace fs = std::filesystem;

namespace {

RunConfig quick(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.codebook_size = 64;
  c.pca_components = 16;
  c.grid = {{1, 10}, {1, 0.1}, 3};
  c.threads = 1;
  return c;
}

struct Fixture {
  testutil::TempDir dir{"pipeline"};
  SyntheticPaths paths;
  std::vector<ManifestEntry> entries;
  RunConfig config;
  ModelBundle bundle;

  Fixture() {
    SyntheticSpec spec;
    spec.n_per_class = 12;
    spec.template_captures = 8;
    spec.scenes = 1;
    spec.detections_per_scene = 30;
    spec.seed = 5;
    paths = write_synthetic_dataset(dir.path().string(), spec);
    entries = read_manifest(paths.manifest);
    config = RunConfig::load(paths.config);
    const auto q = quick(config.seed);
    config.codebook_size = q.codebook_size;
    config.pca_components = q.pca_components;
    config.grid = q.grid;
    config.threads = q.threads;
    bundle = train_all(entries, config);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

TEST_CASE("manifest") {
  CHECK(parse_face_class("genuine") == FaceClass::Genuine);
  CHECK(parse_face_class("real") == FaceClass::Genuine);
  CHECK(parse_face_class("attack") == FaceClass::Attack);
  CHECK(parse_face_class("fake") == FaceClass::Attack);
  CHECK_THROWS_AS(parse_face_class("spoofish"), ManifestError);

  const auto e = parse_manifest_line(R"({"path":"imgs/a.png","label":"attack","attack_type":"print"})", "/data");
  CHECK(e.path == "/data/imgs/a.png");
  CHECK(e.id == "a");
  CHECK(e.attack_type == "print");
  CHECK(parse_manifest_line(R"({"path":"/abs/b.png","label":"real","id":"x"})", "/data").path == "/abs/b.png");
  CHECK_THROWS_AS(parse_manifest_line(R"({"label":"real"})"), ManifestError);
  CHECK_THROWS_AS(parse_manifest_line("not json"), ManifestError);

  testutil::TempDir dir("manifest");
  write_text(dir.file("m.jsonl"), "{\"path\":\"a.png\",\"label\":\"real\"}\n\n{\"path\":\"b.png\",\"label\":\"bogus\"}\n");
  CHECK_THROWS_WITH_AS(read_manifest(dir.file("m.jsonl")), doctest::Contains(":3:"), ManifestError);

  std::vector<ManifestEntry> entries{e, {"y", "rel/c.png", FaceClass::Genuine, "", "eyes/c.json", "pairs/c.jsonl"}};
  write_manifest(dir.file("w.jsonl"), entries);
  const auto back = read_manifest(dir.file("w.jsonl"));
  REQUIRE(back.size() == 2);
  CHECK(back[0].path == e.path);
  CHECK(back[1].path == (dir.path() / "rel/c.png").string());
  CHECK(back[1].landmark_path == (dir.path() / "eyes/c.json").string());
  CHECK(back[1].id == "y");
}

TEST_CASE("eye files and face loading") {
  testutil::TempDir dir("eyes");
  const auto img = testutil::random_image(200, 180, 3);
  save_gray(dir.file("f.png"), img);
  EyeCropSpec eyes;
  eyes.left_eye = {70, 80};
  eyes.right_eye = {110, 82};
  write_eye_file(dir.file("f.json"), eyes);
  const auto back = read_eye_file(dir.file("f.json"));
  CHECK(back.left_eye.x == 70);
  CHECK(back.right_eye.y == 82);
  ManifestEntry e{"f", dir.file("f.png"), FaceClass::Genuine, "", dir.file("f.json"), ""};
  CHECK(load_face(e).data == crop_by_eyes(img, eyes).data);
  e.landmark_path.clear();
  CHECK(load_face(e).data == to_face_plane(img).data);
  write_text(dir.file("bad.json"), "{\"left_eye\":[1]}");
  CHECK_THROWS_AS(read_eye_file(dir.file("bad.json")), FormatError);
}

TEST_CASE("calibration and landmark files") {
  CameraCalib c;
  c.left = {510, 505, 321, 239};
  c.rotation = rotation_from_euler(0.1, 0, 0);
  c.translation = {-11, 0.2, 0.3};
  const auto back = parse_calibration(calibration_to_json(c));
  CHECK(back.left.fx == 510);
  CHECK(back.left.cy == 239);
  CHECK(back.rotation[0][2] == c.rotation[0][2]);
  CHECK(back.translation[0] == -11);
  CHECK(back.units == "cm");

  auto j = calibration_to_json(c);
  j["M_l"][0][1] = 2.0;  // skew
  CHECK_THROWS_AS(parse_calibration(j), ConfigError);
  j = calibration_to_json(c);
  j["units"]["intrinsics"] = "mm";
  CHECK_THROWS_AS(parse_calibration(j), ConfigError);
  j = calibration_to_json(c);
  j["R_c"] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 2}};
  CHECK_THROWS_AS(parse_calibration(j), ConfigError);

  auto pair = gen_stereo_scene({}).pair;
  pair.id = "p";
  const auto p2 = parse_landmark_pair(landmark_pair_to_json(pair));
  CHECK(p2.id == "p");
  CHECK(p2.left[5].u == pair.left[5].u);
  CHECK(p2.right[67].v == pair.right[67].v);
  pair.left.pop_back();
  CHECK_THROWS_AS(parse_landmark_pair(landmark_pair_to_json(pair)), FormatError);
}

TEST_CASE("run configuration") {
  const auto d = RunConfig::from_json(nlohmann::json::object());
  CHECK(d.codebook_size == 256);
  CHECK(d.cascade.theta_c == 0.92);
  auto c = quick(9);
  c.fusion = {2, 1};
  const auto back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK_THROWS_AS(RunConfig::from_json({{"codebok_size", 3}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"codebook_size", 1}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"theta_c", 1.2}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"n_min", 2}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"fusion", {1}}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"seed", "x"}}), ConfigError);
  testutil::TempDir dir("config");
  write_text(dir.file("c.json"), R"({"calibration_path": "calib.json", "seed": 4})");
  const auto loaded = RunConfig::load(dir.file("c.json"));
  CHECK(loaded.calibration_path == dir.file("calib.json"));
  CHECK(loaded.seed == 4);
  CHECK_THROWS_AS(RunConfig::load(dir.file("none.json")), ConfigError);
}

TEST_CASE("modes") {
  CHECK(parse_mode("spmt") == Mode::Spmt);
  CHECK(parse_mode("fused") == Mode::Fused);
  CHECK(std::string(to_string(Mode::Cascade)) == "cascade");
  CHECK_THROWS_AS(parse_mode("both"), ModeError);
}

TEST_CASE("training and prediction") {
  auto& f = fixture();
  const auto& b = f.bundle;
  REQUIRE(b.has_tfbd());
  const auto samples = load_samples(f.entries, 1);

  SUBCASE("bundle round trip and determinism") {
    const auto bytes = b.serialize();
    CHECK(ModelBundle::deserialize(bytes).serialize() == bytes);
    CHECK(train_all(f.entries, f.config).serialize() == bytes);
    auto threaded = f.config;
    threaded.threads = 3;
    CHECK(train_all(f.entries, threaded).serialize() == bytes);
  }
  SUBCASE("corrupt bundles") {
    auto other = b;
    other.version = "facepad-bundle/99";
    CHECK_THROWS_AS(ModelBundle::deserialize(other.serialize()), ModelCompatibilityError);
    const auto bytes = b.serialize();
    CHECK_THROWS_AS(ModelBundle::deserialize(bytes.substr(0, bytes.size() / 2)), FormatError);
    CHECK_THROWS_AS(ModelBundle::deserialize(bytes + "x"), FormatError);
  }
  SUBCASE("fused scores") {
    for (const auto& s : samples) {
      const auto p = predict({s.face, s.pair}, b, Mode::Fused);
      CHECK(p.score == fuse_scores(*p.spmt_score, *p.tfbd_score, b.fusion));
      CHECK(*p.spmt_score == predict({s.face, {}}, b, Mode::Spmt).score);
      CHECK(*p.tfbd_score == predict({s.face, s.pair}, b, Mode::Tfbd).score);
      CHECK(predict({s.face, s.pair}, b, Mode::Fused).score == p.score);
    }
    auto spmt_only = b;
    spmt_only.fusion = {1, 0};
    for (const auto& s : samples) {
      const auto fused = predict({s.face, s.pair}, spmt_only, Mode::Fused);
      const auto plain = predict({s.face, s.pair}, spmt_only, Mode::Spmt);
      CHECK(fused.label == plain.label);
    }
  }
  SUBCASE("mode gating") {
    CHECK_THROWS_AS(predict({samples[0].face, {}}, b, Mode::Tfbd), PreconditionError);
    CHECK_THROWS_AS(predict({samples[0].face, samples[0].pair}, b, Mode::Cascade), ModeError);
    auto texture = b;
    texture.tmpl.reset();
    texture.tfbd_svm.reset();
    texture.calib.reset();
    const auto reloaded = ModelBundle::deserialize(texture.serialize());
    CHECK(!reloaded.has_tfbd());
    CHECK_THROWS_AS(predict({samples[0].face, samples[0].pair}, reloaded, Mode::Tfbd), ModeError);
    CHECK_THROWS_AS(predict({samples[0].face, samples[0].pair}, reloaded, Mode::Fused), ModeError);
    CHECK_NOTHROW(predict({samples[0].face, {}}, reloaded, Mode::Spmt));
  }
  SUBCASE("incomplete stereo inputs") {
    auto partial = samples;
    partial[3].pair.reset();
    CHECK_THROWS_WITH_AS(train_bundle(partial, f.config, b.calib), doctest::Contains(partial[3].id.c_str()), ManifestError);
    CHECK_THROWS_AS(train_bundle(samples, f.config), ManifestError);
  }
  SUBCASE("evaluation") {
    const auto a = evaluate(f.entries, b, Mode::Fused, ThresholdSpec::eer(), 0.1, 1);
    const auto again = evaluate(f.entries, b, Mode::Fused, ThresholdSpec::eer(), 0.1, 2);
    CHECK(scores_to_jsonl(a.scores) == scores_to_jsonl(again.scores));
    CHECK(report_to_json(a.report) == report_to_json(again.report));
    CHECK(a.report.eer == 0);  // training set, separable
    CHECK(a.report.apcer_by_type.count("print") == 1);
    CHECK(a.report.apcer_by_type.count("replay") == 1);
    CHECK_THROWS_AS(evaluate(std::vector<ManifestEntry>{}, b, Mode::Spmt), ManifestError);

    testutil::TempDir dir("scores");
    write_scores(dir.file("s.jsonl"), a.scores);
    const auto back = read_scores(dir.file("s.jsonl"));
    REQUIRE(back.size() == a.scores.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].id == a.scores[i].id);
      CHECK(back[i].score == a.scores[i].score);
      CHECK(back[i].genuine == a.scores[i].genuine);
      CHECK(back[i].attack_type == a.scores[i].attack_type);
    }
  }
  SUBCASE("cascade") {
    const auto scene = load_gray(f.paths.scenes.at(0));
    const auto recs = read_detections(f.paths.detections);
    auto detector = b;
    detector.cascade.theta_c = 0;
    const auto kept = nms(recs, b.cascade.iou_nms);
    const auto d = predict_cascade(scene, recs, detector);
    REQUIRE(d.size() == kept.size());
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i].final_label == kept[i].label);
  }
}

TEST_CASE("synthetic dataset layout") {
  auto& f = fixture();
  CHECK(f.entries.size() == 24);
  CHECK(fs::exists(f.paths.calibration));
  CHECK(read_landmark_pairs(f.paths.template_pairs).size() == 8);
  CHECK(!f.entries[0].pair_path.empty());
  testutil::TempDir dir("synthetic2");
  SyntheticSpec spec;
  spec.n_per_class = 2;
  spec.stereo = false;
  spec.seed = 5;
  const auto p = write_synthetic_dataset(dir.path().string(), spec);
  CHECK(p.calibration.empty());
  const auto e = read_manifest(p.manifest);
  CHECK(e[0].pair_path.empty());
  // Same seed, same images.
  CHECK(load_face(e[0]).data == load_face(f.entries[0]).data);
  CHECK_THROWS_AS(write_synthetic_dataset(dir.path().string(), {0}), ConfigError);
}
