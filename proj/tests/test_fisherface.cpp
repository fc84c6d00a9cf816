#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "facepad/errors.hpp"
#include "facepad/fisherface.hpp"
#include "facepad/random.hpp"
#include "facepad/synth.hpp"
#include "facepad/texture.hpp"
#include "test_util.hpp"

using namespace facepad;

namespace {

std::vector<GrayImage> faces(int n, FaceClass cls, std::uint64_t seed) {
  std::vector<GrayImage> out;
  for (int i = 0; i < n; ++i) out.push_back(gen_texture_image({cls, 0.08, 12.0, seed + i}));
  return out;
}

struct Moments {
  double mean = 0, var = 0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= v.size();
  return m;
}

// Exhaustive all-pairs statistics for one block.
BlockStats exhaustive(const std::vector<GrayImage>& g, const std::vector<GrayImage>& f, BlockIndex b) {
  const PixelRect rect{b.col * 10, b.row * 10, 10, 10};
  std::vector<BlockDescriptor> dg, df;
  for (const auto& x : g) dg.push_back(block_descriptor(x, rect));
  for (const auto& x : f) df.push_back(block_descriptor(x, rect));
  std::vector<double> vg, vf, vx;
  for (std::size_t i = 0; i < dg.size(); ++i)
    for (std::size_t j = i + 1; j < dg.size(); ++j) vg.push_back(chi_square(dg[i], dg[j]));
  for (std::size_t i = 0; i < df.size(); ++i)
    for (std::size_t j = i + 1; j < df.size(); ++j) vf.push_back(chi_square(df[i], df[j]));
  for (const auto& a : dg)
    for (const auto& c : df) vx.push_back(chi_square(a, c));
  const auto mg = moments(vg), mf = moments(vf), mx = moments(vx);
  return {mg.mean, mg.var, mf.mean, mf.var, mx.mean, mx.var};
}

}  // namespace

TEST_CASE("block statistics") {
  const auto real = faces(10, FaceClass::Genuine, 100);
  const auto fake = faces(10, FaceClass::Attack, 200);

  SUBCASE("identical genuine faces") {
    const std::vector<GrayImage> twins{real[0], real[0]};
    const auto s = block_stats(twins, fake, {3, 4});
    CHECK(s.mu_g == 0);
    CHECK(s.sigma_g == 0);
  }
  SUBCASE("full budget matches exhaustive enumeration") {
    for (BlockIndex b : {BlockIndex{0, 0}, BlockIndex{5, 7}, BlockIndex{11, 9}}) {
      const auto s = block_stats(real, fake, b, 5000, 3);
      const auto o = exhaustive(real, fake, b);
      CHECK(s.mu_g == doctest::Approx(o.mu_g).epsilon(1e-12));
      CHECK(s.sigma_g == doctest::Approx(o.sigma_g).epsilon(1e-12));
      CHECK(s.mu_f == doctest::Approx(o.mu_f).epsilon(1e-12));
      CHECK(s.sigma_f == doctest::Approx(o.sigma_f).epsilon(1e-12));
      CHECK(s.mu_inter == doctest::Approx(o.mu_inter).epsilon(1e-12));
      CHECK(s.sigma_inter == doctest::Approx(o.sigma_inter).epsilon(1e-12));
    }
  }
  SUBCASE("class swap") {
    const auto a = block_stats(real, fake, {2, 2});
    const auto b = block_stats(fake, real, {2, 2});
    CHECK(a.mu_g == b.mu_f);
    CHECK(a.mu_f == b.mu_g);
    CHECK(a.mu_inter == doctest::Approx(b.mu_inter).epsilon(1e-14));
  }
  SUBCASE("too few faces") {
    const std::vector<GrayImage> one{real[0]};
    CHECK_THROWS_AS(block_stats(one, fake, {0, 0}), InsufficientDataError);
    CHECK_THROWS_AS(build_fisher_face(real, one), InsufficientDataError);
  }
}

TEST_CASE("pair sampling") {
  const auto all = sample_pairs(6, 5, 1000, 1);
  CHECK(all.genuine.size() == 15);
  CHECK(all.fake.size() == 10);
  CHECK(all.inter.size() == 30);

  const auto some = sample_pairs(40, 30, 100, 9);
  CHECK(some.genuine.size() == 100);
  CHECK(some.fake.size() == 100);
  CHECK(some.inter.size() == 100);
  CHECK(std::is_sorted(some.genuine.begin(), some.genuine.end()));
  CHECK(std::set(some.genuine.begin(), some.genuine.end()).size() == 100);
  for (auto [i, j] : some.genuine) CHECK((0 <= i && i < j && j < 40));
  for (auto [i, j] : some.inter) CHECK((0 <= i && i < 40 && 0 <= j && j < 30));
  const auto again = sample_pairs(40, 30, 100, 9);
  CHECK(again.inter == some.inter);
}

TEST_CASE("fisher ratio") {
  CHECK(fisher_ratio({1, 1, 1, 1, 4, 1}) == 4.0);
  // Non-positive denominator is clamped to epsilon.
  CHECK(fisher_ratio({1, 0.5, 1, 0.5, 3, 2}) == doctest::Approx(1.0 / kFisherEpsilon));
  const BlockStats s{0.3, 0.02, 0.7, 0.05, 1.4, 0.01};
  const BlockStats swapped{0.7, 0.05, 0.3, 0.02, 1.4, 0.01};
  CHECK(fisher_ratio(s) == fisher_ratio(swapped));
}

TEST_CASE("ratio grid upsampling") {
  const std::vector<double> same(120, 2.5);
  const auto flat = fisher_face_from_ratios(same, 12, 10);
  CHECK(flat.height == 120);
  CHECK(flat.width == 100);
  for (double w : flat.weights) CHECK(w == 1.0);

  // Two knots at block centres x = 4.5 and x = 14.5.
  const std::vector<double> two{0, 1};
  const auto f = fisher_face_from_ratios(two, 1, 2);
  CHECK(f.width == 20);
  CHECK(f.at(0, 0) == 0);
  CHECK(f.at(0, 4) == 0);
  CHECK(f.at(0, 5) == doctest::Approx(0.05));
  CHECK(f.at(0, 10) == doctest::Approx(0.55));
  CHECK(f.at(0, 14) == doctest::Approx(0.95));
  CHECK(f.at(0, 19) == 1);
  CHECK_THROWS_AS(fisher_face_from_ratios(two, 2, 2), DimensionError);
}

TEST_CASE("fisher face") {
  const auto real = faces(8, FaceClass::Genuine, 300);
  const auto fake = faces(8, FaceClass::Attack, 400);
  const auto f = build_fisher_face(real, fake, 5000, 1);
  CHECK(f.height == 120);
  CHECK(f.width == 100);
  CHECK(*std::max_element(f.weights.begin(), f.weights.end()) == 1.0);
  for (double w : f.weights) CHECK((w >= 0 && w <= 1 && std::isfinite(w)));
  CHECK(build_fisher_face(real, fake, 5000, 1).weights == f.weights);
  CHECK(FisherFace::deserialize(f.serialize()).weights == f.weights);
  CHECK_THROWS_AS(FisherFace::deserialize(f.serialize().substr(0, 20)), FormatError);
}

TEST_CASE("discriminability localises to the differing half") {
  // The top half of every face is a class-specific pattern plus mild
  // per-face noise; bottom halves are drawn from one shared distribution.
  // The ratio rewards blocks whose inter-class distance exceeds the sum of
  // intra-class distances, which is what a class-specific pattern gives.
  const auto top_g = gen_texture_image({FaceClass::Genuine, 0.08, 12.0, 11});
  const auto top_f = gen_texture_image({FaceClass::Attack, 0.08, 0.0, 12});
  auto make = [](const GrayImage& top, std::uint64_t seed) {
    auto face = gen_texture_image({FaceClass::Genuine, 0.08, 12.0, seed});
    Rng rng(seed ^ 0x5eed);
    for (int y = 0; y < 60; ++y)
      for (int x = 0; x < 100; ++x)
        face.at(y, x) = static_cast<std::uint8_t>(std::clamp(top.at(y, x) + gaussian(rng), 0.0, 255.0));
    return face;
  };
  std::vector<GrayImage> real, fake;
  for (std::uint64_t i = 0; i < 12; ++i) {
    real.push_back(make(top_g, 500 + i));
    fake.push_back(make(top_f, 700 + i));
  }
  const auto f = build_fisher_face(real, fake, 5000, 2);
  double top = 0, bottom = 0;
  for (int y = 0; y < 120; ++y)
    for (int x = 0; x < 100; ++x) (y < 60 ? top : bottom) += f.at(y, x);
  CHECK(top / 6000 > bottom / 6000);
}
