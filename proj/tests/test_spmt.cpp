#include <cmath>
#include <numeric>

#include "doctest.h"
#include "facepad/errors.hpp"
#include "facepad/random.hpp"
#include "facepad/spmt.hpp"
#include "facepad/synth.hpp"
#include "test_util.hpp"

using namespace facepad;

namespace {

BovwFace random_bovw(int h, int w, int n_cb, std::uint64_t seed) {
  Rng rng(seed);
  BovwFace f{h, w, n_cb, {}};
  for (int i = 0; i < h * w; ++i) f.indices.push_back(static_cast<std::uint16_t>(uniform_index(rng, n_cb)));
  return f;
}

FisherFace random_fisher(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  auto f = FisherFace::uniform(h, w, 0);
  for (auto& v : f.weights) v = uniform01(rng);
  return f;
}

double l1(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += std::abs(x);
  return s;
}

}  // namespace

TEST_CASE("pyramid regions") {
  const auto r = pyramid_regions(2);
  REQUIRE(r.size() == 7);
  CHECK(r[0].rect.w == 100);
  CHECK(r[0].rect.h == 120);
  const int hs[] = {30, 30, 60, 60, 30, 30};
  std::vector<int> cover(120 * 100, 0);
  for (int i = 0; i < 6; ++i) {
    const auto& q = r[i + 1];
    CHECK(q.level == 1);
    CHECK(q.rect.h == hs[i]);
    CHECK(q.rect.w == 50);
    for (int y = q.rect.y0; y < q.rect.y0 + q.rect.h; ++y)
      for (int x = q.rect.x0; x < q.rect.x0 + q.rect.w; ++x) ++cover[y * 100 + x];
  }
  for (int c : cover) CHECK(c == 1);
  // Classical grid above level 1.
  const auto r3 = pyramid_regions(3);
  CHECK(r3.size() == 7 + 16);
  int area = 0;
  for (std::size_t i = 7; i < r3.size(); ++i) area += r3[i].rect.w * r3[i].rect.h;
  CHECK(area == 12000);
  CHECK(spmt_raw_length(256) == 5376);
}

TEST_CASE("weighted histogram") {
  BovwFace b{1, 2, 8, {3, 5}};
  auto f = FisherFace::uniform(1, 2, 0);
  f.weights = {0.2, 0.8};
  const PyramidRegion whole{0, 0, {0, 0, 2, 1}};
  const auto h = weighted_bovw_histogram(b, f, whole);
  REQUIRE(h.size() == 8);
  CHECK(h[3] == doctest::Approx(0.1));
  CHECK(h[5] == doctest::Approx(0.4));
  CHECK(std::accumulate(h.begin(), h.end(), 0.0) == doctest::Approx(0.5));

  const auto big = random_bovw(120, 100, 16, 1);
  const auto region = pyramid_regions(2)[3];
  const auto ones = weighted_bovw_histogram(big, FisherFace::uniform(120, 100, 1), region);
  std::vector<double> plain(16, 0);
  for (int y = region.rect.y0; y < region.rect.y0 + region.rect.h; ++y)
    for (int x = region.rect.x0; x < region.rect.x0 + region.rect.w; ++x) plain[big.at(y, x)] += 1.0 / 3000;
  for (int k = 0; k < 16; ++k) CHECK(ones[k] == doctest::Approx(plain[k]).epsilon(1e-12));
  for (double v : weighted_bovw_histogram(big, FisherFace::uniform(120, 100, 0), region)) CHECK(v == 0);
  CHECK_THROWS_AS(weighted_bovw_histogram(big, FisherFace::uniform(120, 100, 1), {0, 0, {90, 0, 20, 10}}),
                  GeometryError);
}

TEST_CASE("class specific face") {
  BovwFace a{1, 2, 8, {2, 2}}, b{1, 2, 8, {2, 7}}, c{1, 2, 8, {7, 2}};
  CHECK(class_specific_face(std::vector{a}, FaceClass::Genuine).face == a);
  const auto three = class_specific_face(std::vector{a, b, c}, FaceClass::Attack);
  CHECK(three.face.indices == std::vector<std::uint16_t>{2, 2});
  CHECK(three.class_tag == FaceClass::Attack);
  const auto tie = class_specific_face(std::vector{b, c}, FaceClass::Genuine);
  CHECK(tie.face.indices == std::vector<std::uint16_t>{2, 2});
  CHECK_THROWS_AS(class_specific_face(std::vector<BovwFace>{}, FaceClass::Genuine), InsufficientDataError);
  const auto back = ClassSpecificFace::deserialize(three.serialize());
  CHECK(back.face == three.face);
  CHECK(back.class_tag == FaceClass::Attack);
}

TEST_CASE("matching degree") {
  const PyramidRegion whole{0, 0, {0, 0, 3, 2}};
  const auto unit = FisherFace::uniform(2, 3, 1);
  BovwFace face{2, 3, 4, {1, 1, 2, 2, 2, 0}};
  ClassSpecificFace csf{FaceClass::Genuine, {2, 3, 4, {1, 1, 1, 1, 3, 0}}};
  const auto m = matching_degree_raw(face, csf, unit, whole);
  // k=0: f=1 c=1; k=1: f=2 c=4; k=2: f=3 c=0; k=3: f=0 c=1.
  CHECK(m[0] == 1.0);
  CHECK(m[1] == doctest::Approx(0.5));
  CHECK(m[2] == 0.0);
  CHECK(m[3] == 0.0);
  const auto same = matching_degree_raw(face, {FaceClass::Genuine, face}, unit, whole);
  CHECK(same == std::vector<double>{1, 1, 1, 1});  // k=3 absent from both
  const auto n = matching_degree(face, csf, unit, whole);
  CHECK(l1(n) == doctest::Approx(1.0));
  CHECK(n[1] == doctest::Approx(0.5 / 1.5));

  const auto big = random_bovw(120, 100, 32, 2);
  const ClassSpecificFace other{FaceClass::Attack, random_bovw(120, 100, 32, 3)};
  const auto fisher = random_fisher(120, 100, 4);
  auto scaled = fisher;
  for (auto& w : scaled.weights) w *= 0.37;
  for (const auto& region : pyramid_regions(2)) {
    const auto raw = matching_degree_raw(big, other, fisher, region);
    for (double v : raw) CHECK((v >= 0 && v <= 1));
    const auto r2 = matching_degree_raw(big, other, scaled, region);
    for (std::size_t k = 0; k < raw.size(); ++k) CHECK(r2[k] == doctest::Approx(raw[k]).epsilon(1e-12));
  }
}

TEST_CASE("pca") {
  Rng rng(5);
  std::vector<std::vector<double>> line;
  std::vector<double> dir(50);
  for (auto& d : dir) d = gaussian(rng);
  for (int i = 0; i < 20; ++i) {
    const double t = gaussian(rng);
    std::vector<double> v(50);
    for (int j = 0; j < 50; ++j) v[j] = 3 + t * dir[j];
    line.push_back(v);
  }
  const auto m = pca_fit(line, 10);
  CHECK(m.components() == 1);
  CHECK(m.requested == 10);
  const double total = std::accumulate(m.explained_variance.begin(), m.explained_variance.end(), 0.0);
  CHECK(m.explained_variance[0] / total == doctest::Approx(1.0));
  for (double x : pca_project(m.mean, m)) CHECK(std::abs(x) < 1e-12);

  std::vector<std::vector<double>> data;
  for (int i = 0; i < 30; ++i) {
    std::vector<double> v(40);
    for (auto& x : v) x = gaussian(rng);
    data.push_back(v);
  }
  const auto full = pca_fit(data, 100);
  CHECK(full.components() == 29);
  for (int a = 0; a < full.components(); ++a)
    for (int b = 0; b < full.components(); ++b) {
      double dot = 0;
      for (int j = 0; j < 40; ++j) dot += full.basis[a * 40 + j] * full.basis[b * 40 + j];
      CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-8).scale(1));
    }
  for (int i = 1; i < full.components(); ++i)
    CHECK(full.explained_variance[i] <= full.explained_variance[i - 1]);
  double prev = 1e300;
  for (int k = 1; k <= 29; k += 4) {
    const auto mk = pca_fit(data, k);
    double err = 0;
    for (const auto& v : data) {
      const auto rec = pca_reconstruct(pca_project(v, mk), mk);
      for (int j = 0; j < 40; ++j) err += (rec[j] - v[j]) * (rec[j] - v[j]);
    }
    CHECK(err <= prev + 1e-9);
    prev = err;
  }
  CHECK_THROWS_AS(pca_fit(std::vector<std::vector<double>>{data[0]}, 2), InsufficientDataError);
  CHECK(PcaModel::deserialize(full.serialize()).basis == full.basis);
}

TEST_CASE("spmt descriptor") {
  std::vector<GrayImage> faces;
  for (std::uint64_t i = 0; i < 4; ++i)
    faces.push_back(gen_texture_image({i % 2 ? FaceClass::Attack : FaceClass::Genuine, 0.08, 12, i}));
  std::vector<MslbpFace> codes;
  for (const auto& f : faces) codes.push_back(mslbp_face(f));
  SpmtModel model;
  model.codebook = train_codebook(codes, 0.1, 64, 1);
  model.fisher = random_fisher(120, 100, 9);
  std::vector<BovwFace> g, a;
  for (std::size_t i = 0; i < faces.size(); ++i) (i % 2 ? a : g).push_back(encode_bovw(codes[i], model.codebook));
  model.genuine = class_specific_face(g, FaceClass::Genuine);
  model.attack = class_specific_face(a, FaceClass::Attack);

  const auto v = extract_spmt(faces[0], model);
  REQUIRE(v.raw.size() == static_cast<std::size_t>(spmt_raw_length(64)));
  CHECK(!v.reduced);
  CHECK(extract_spmt(faces[0], model).raw == v.raw);
  CHECK(extract_spmt(faces[0], model, BovwEncoder(model.codebook)).raw == v.raw);
  for (int s = 0; s < 21; ++s) {
    const std::span seg(v.raw.data() + s * 64, 64);
    CHECK(l1(seg) == doctest::Approx(1.0));
  }

  // Constant rescaling of the Fisher face: the descriptor does not move.
  auto scaled = model;
  for (auto& w : scaled.fisher.weights) w *= 0.25;
  const auto vs = extract_spmt(faces[0], scaled);
  for (std::size_t k = 0; k < v.raw.size(); ++k) CHECK(vs.raw[k] == doctest::Approx(v.raw[k]).epsilon(1e-12));

  std::vector<std::vector<double>> raws;
  for (const auto& f : faces) raws.push_back(extract_spmt(f, model).raw);
  model.pca = pca_fit(raws, 1024);
  CHECK(extract_spmt(faces[1], model).reduced->size() == 3);

  auto bad = model;
  bad.attack.face.n_cb = 32;
  CHECK_THROWS_AS(extract_spmt(faces[0], bad), ModelCompatibilityError);
}
