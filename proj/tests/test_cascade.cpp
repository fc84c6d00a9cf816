#include <algorithm>

#include "doctest.h"
#include "facepad/cascade.hpp"
#include "facepad/errors.hpp"
#include "facepad/pipeline.hpp"
#include "facepad/random.hpp"
#include "facepad/synth.hpp"
#include "test_util.hpp"

using namespace facepad;

namespace {

DetectionRecord rec(double x, double y, double w, double h, int label, double conf, std::string id = "img") {
  return {std::move(id), {x, y, w, h}, label, conf};
}

std::vector<int> labels_of(const std::vector<DetectionRecord>& r) {
  std::vector<int> out;
  for (const auto& d : r) out.push_back(d.label);
  return out;
}

const ModelBundle& small_bundle() {
  static const ModelBundle bundle = [] {
    std::vector<Sample> samples;
    for (std::uint64_t i = 0; i < 16; ++i) {
      const auto cls = i % 2 ? FaceClass::Attack : FaceClass::Genuine;
      samples.push_back({"s" + std::to_string(i), cls, "", gen_texture_image({cls, 0.08, 12, 40 + i}), {}});
    }
    RunConfig cfg;
    cfg.codebook_size = 32;
    cfg.pca_components = 0;
    cfg.grid = {{1, 10}, {1}, 2};
    cfg.threads = 1;
    return train_bundle(samples, cfg);
  }();
  return bundle;
}

}  // namespace

TEST_CASE("non-maximum suppression") {
  CHECK(nms(std::vector{rec(0, 0, 10, 10, 1, 0.5)}, 0.45).size() == 1);
  const auto two = nms(std::vector{rec(0, 0, 10, 10, 1, 0.8), rec(0, 0, 10, 10, 1, 0.9)}, 0.45);
  REQUIRE(two.size() == 1);
  CHECK(two[0].confidence == 0.9);
  CHECK(nms(std::vector{rec(0, 0, 10, 10, 1, 0.8), rec(50, 50, 10, 10, 1, 0.9)}, 0.45).size() == 2);
  // Different labels are suppressed separately; background is dropped.
  CHECK(nms(std::vector{rec(0, 0, 10, 10, 1, 0.8), rec(0, 0, 10, 10, 2, 0.9), rec(0, 0, 5, 5, 0, 1)}, 0.45).size() == 2);

  std::vector<MockImage> imgs{{"a", 240, 320}, {"b", 240, 320}};
  auto recs = mock_detections(imgs, 120, 3);
  const auto ref = nms(recs, 0.45);
  Rng rng(4);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(recs.begin(), recs.end(), rng);
    CHECK(nms(recs, 0.45) == ref);
  }
}

TEST_CASE("uncertainty rules") {
  const CascadeConfig cfg;
  CHECK(classify_uncertainty(std::vector{rec(0, 0, 10, 10, 1, 0.95)}, cfg)[0] == Certainty::Certain);
  CHECK(classify_uncertainty(std::vector{rec(0, 0, 10, 10, 1, 0.80)}, cfg)[0] == Certainty::Uncertain);
  // IoU of these boxes is 0.8.
  const auto a = rec(0, 0, 10, 10, 1, 0.95), b = rec(0, 0, 10, 8, 2, 0.94);
  REQUIRE(iou(a.box, b.box) == doctest::Approx(0.8));
  const auto both = classify_uncertainty(std::vector{a, b}, cfg);
  CHECK(both[0] == Certainty::Uncertain);
  CHECK(both[1] == Certainty::Uncertain);
  auto other_image = b;
  other_image.image_id = "other";
  CHECK(classify_uncertainty(std::vector{a, other_image}, cfg)[0] == Certainty::Certain);
  CascadeConfig off = cfg;
  off.conflict_rule = false;
  CHECK(classify_uncertainty(std::vector{a, b}, off)[0] == Certainty::Certain);

  CascadeConfig zero = cfg, one = cfg;
  zero.theta_c = 0;
  one.theta_c = 1;
  for (auto c : classify_uncertainty(std::vector{a, b, rec(3, 3, 4, 4, 1, 0.1)}, zero)) CHECK(c == Certainty::Certain);
  for (auto c : classify_uncertainty(std::vector{rec(3, 3, 4, 4, 1, 1.0)}, one)) CHECK(c == Certainty::Uncertain);

  std::vector<MockImage> imgs{{"a", 240, 320}};
  const auto recs = nms(mock_detections(imgs, 80, 5), cfg.iou_nms);
  auto flipped = recs;
  for (auto& r : flipped) r.label = 3 - r.label;
  CHECK(classify_uncertainty(recs, cfg) == classify_uncertainty(flipped, cfg));

  CascadeConfig bad = cfg;
  bad.theta_c = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.iou_nms = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("cascade decisions") {
  const auto& bundle = small_bundle();
  const auto scene = gen_texture_image({FaceClass::Genuine, 0.08, 12, 99}, 240, 320);
  const CascadeConfig cfg;
  CHECK(cascade_decide(scene, std::vector<DetectionRecord>{}, cfg, bundle.spmt, bundle.spmt_svm).empty());

  std::vector<MockImage> imgs{{"img", 240, 320}};
  const auto recs = mock_detections(imgs, 40, 6);
  CascadeConfig zero = cfg, one = cfg;
  zero.theta_c = 0;
  one.theta_c = 1;
  const auto kept = nms(recs, cfg.iou_nms);
  const auto det = cascade_decide(scene, recs, zero, bundle.spmt, bundle.spmt_svm);
  REQUIRE(det.size() == kept.size());
  for (std::size_t i = 0; i < det.size(); ++i) {
    CHECK(det[i].final_label == kept[i].label);
    CHECK(det[i].provenance == "detector");
  }
  const auto svm = cascade_decide(scene, recs, one, bundle.spmt, bundle.spmt_svm);
  for (std::size_t i = 0; i < svm.size(); ++i) {
    const double s = spmt_box_score(scene, kept[i].box, bundle.spmt, bundle.spmt_svm);
    CHECK(svm[i].provenance == "svm");
    CHECK(*svm[i].svm_score == s);
    CHECK(svm[i].final_label == (s >= 0 ? kLabelReal : kLabelFake));
  }

  // A low-confidence box is rerouted; a box outside the image is unresolved.
  const auto low = rec(100, 60, 90, 110, 2, 0.3);
  const auto out = rec(1000, 1000, 50, 50, 1, 0.3);
  const auto d = cascade_decide(scene, std::vector{low, out}, cfg, bundle.spmt, bundle.spmt_svm);
  REQUIRE(d.size() == 2);
  const auto& routed = d[0].record == low ? d[0] : d[1];
  const auto& failed = d[0].record == low ? d[1] : d[0];
  CHECK(routed.provenance == "svm");
  CHECK(routed.final_label == (*routed.svm_score >= 0 ? kLabelReal : kLabelFake));
  CHECK(failed.provenance == "unresolved");
  CHECK(failed.final_label == -1);
  CHECK(!failed.error.empty());
}

TEST_CASE("anchor scales") {
  const auto s = anchor_scales(0.2, 0.9, 4);
  REQUIRE(s.size() == 4);
  CHECK(s[0] == 0.2);
  CHECK(s[1] == doctest::Approx(0.2 + 0.7 / 3));
  CHECK(s[2] == doctest::Approx(0.2 + 1.4 / 3));
  CHECK(s[3] == doctest::Approx(0.9));
  CHECK(anchor_scales(0.3, 0.5, 2) == std::vector<double>{0.3, 0.5});
  const auto six = anchor_scales(0.1, 1.0, 6);
  CHECK(std::is_sorted(six.begin(), six.end()));
  CHECK(std::adjacent_find(six.begin(), six.end()) == six.end());
  CHECK_THROWS_AS(anchor_scales(0.9, 0.2, 4), ConfigError);
  CHECK_THROWS_AS(anchor_scales(0.2, 0.9, 1), ConfigError);
}

TEST_CASE("detection records") {
  const auto r = rec(1.5, 2.5, 30, 40, 2, 0.75, "frame_7");
  CHECK(parse_detection(detection_to_json(r)) == r);
  CHECK_THROWS_AS(parse_detection("{\"image_id\":\"a\"}"), FormatError);
  CHECK_THROWS_AS(parse_detection(R"({"image_id":"a","x":0,"y":0,"w":1,"h":1,"label":3,"confidence":0.5})"), FormatError);
  CHECK_THROWS_AS(parse_detection(R"({"image_id":"a","x":0,"y":0,"w":1,"h":1,"label":1,"confidence":1.5})"), FormatError);
  testutil::TempDir dir("cascade");
  std::vector<MockImage> imgs{{"a", 100, 100}};
  const auto recs = mock_detections(imgs, 25, 8);
  write_detections(dir.file("d.jsonl"), recs);
  CHECK(read_detections(dir.file("d.jsonl")) == recs);
}
