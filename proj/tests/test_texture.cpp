#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "facepad/errors.hpp"
#include "facepad/texture.hpp"
#include "test_util.hpp"

using namespace facepad;

namespace {

const LbpConfig kAll[] = {kLbp8r1, kLbp8r2, kLbp8r3, kLbp8r4, kLbp16r2};

std::uint8_t pad(const GrayImage& img, int y, int x) {
  return img.at(std::clamp(y, 0, img.height - 1), std::clamp(x, 0, img.width - 1));
}

// Naive per-operator reference, evaluated from scratch at every pixel.
std::uint32_t naive_lbp(const GrayImage& img, int x, int y, int p, int r) {
  std::uint32_t code = 0;
  for (int k = 0; k < p; ++k) {
    const double a = 2.0 * std::numbers::pi * k / p;
    const double dx = std::round(r * std::cos(a) * 1e9) / 1e9;
    const double dy = std::round(-r * std::sin(a) * 1e9) / 1e9;
    const double sx = x + dx, sy = y + dy;
    const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
    const double tx = sx - x0, ty = sy - y0;
    const double v00 = pad(img, y0, x0), v01 = pad(img, y0, x0 + 1);
    const double v10 = pad(img, y0 + 1, x0), v11 = pad(img, y0 + 1, x0 + 1);
    double v;
    if (tx == 0 && ty == 0) {
      v = v00;
    } else {
      const double top = v00 + tx * (v01 - v00);
      const double bot = v10 + tx * (v11 - v10);
      v = top + ty * (bot - top);
    }
    if (v >= img.at(y, x)) code |= 1u << k;
  }
  return code;
}

int circular_transitions(std::uint32_t code, int p) {
  int t = 0;
  for (int k = 0; k < p; ++k) t += ((code >> k) & 1u) != ((code >> ((k + 1) % p)) & 1u);
  return t;
}

// Bit k of the flipped image's code comes from neighbour (p/2 - k) mod p.
std::uint32_t mirror_bits(std::uint32_t code, int p) {
  std::uint32_t out = 0;
  for (int k = 0; k < p; ++k) {
    const int src = ((p / 2 - k) % p + p) % p;
    if ((code >> src) & 1u) out |= 1u << k;
  }
  return out;
}

GrayImage flip_lr(const GrayImage& img) {
  GrayImage out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(y, x) = img.at(y, img.width - 1 - x);
  return out;
}

}  // namespace

TEST_CASE("lbp code examples") {
  const GrayImage c(9, 9, 77);
  for (const auto& cfg : kAll) CHECK(lbp_code(c, 4, 4, cfg) == (cfg.p == 8 ? 255u : 65535u));

  GrayImage peak(3, 3, 0);
  peak.at(1, 1) = 255;
  CHECK(lbp_code(peak, 1, 1, kLbp8r1) == 0);

  const GrayImage dip(3, 3, std::vector<std::uint8_t>{5, 5, 5, 5, 1, 9, 5, 5, 5});
  CHECK(lbp_code(dip, 1, 1, kLbp8r1) == 255);

  // East neighbour is bit 0, north bit 2 (counter-clockwise, image y down).
  GrayImage east(3, 3, 0);
  east.at(1, 1) = 100;
  east.at(1, 2) = 200;
  CHECK(lbp_code(east, 1, 1, kLbp8r1) == 1u);
  GrayImage north(3, 3, 0);
  north.at(1, 1) = 100;
  north.at(0, 1) = 200;
  CHECK(lbp_code(north, 1, 1, kLbp8r1) == 4u);

  CHECK_THROWS_AS(lbp_code(c, 9, 0, kLbp8r1), GeometryError);
  CHECK_THROWS_AS(lbp_code(c, 1, 1, LbpConfig{12, 1}), PreconditionError);
}

TEST_CASE("lbp matches naive reference") {
  const auto img = testutil::random_image(23, 19, 12);
  for (const auto& cfg : kAll) {
    const auto plane = lbp_plane(img, cfg);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        REQUIRE(plane[static_cast<std::size_t>(y) * img.width + x] == naive_lbp(img, x, y, cfg.p, cfg.r));
  }
}

TEST_CASE("uniform pattern enumeration") {
  for (int p : {8, 16}) {
    int uniform = 0;
    for (std::uint32_t c = 0; c < (1u << p); ++c) {
      const bool u = circular_transitions(c, p) <= 2;
      uniform += u;
      REQUIRE(is_uniform_pattern(c, p) == u);
    }
    const auto& map = UniformMap::for_neighbours(p);
    CHECK(uniform == p * (p - 1) + 2);
    CHECK(map.bins() == p * (p - 1) + 3);
    CHECK(std::is_sorted(map.uniform_codes().begin(), map.uniform_codes().end()));
  }
  CHECK(UniformMap::for_neighbours(8).bins() == 59);
  CHECK(UniformMap::for_neighbours(16).bins() == 243);
  CHECK(59 + 59 + 243 == kBlockDescriptorSize);
  CHECK(UniformMap::for_neighbours(8).bin(0b00010001) == 58);  // non-uniform bin is last

  const std::vector<std::uint32_t> zeros(10, 0);
  const auto h = uniform_histogram(zeros, {8, 1, true});
  CHECK(h.size() == 59);
  CHECK(h[0] == 1.0);
  CHECK(std::count(h.begin(), h.end(), 0.0) == 58);

  const std::vector<std::uint32_t> bad{256};
  CHECK_THROWS_AS(uniform_histogram(bad, {8, 1, true}), EncodingError);
}

TEST_CASE("mslbp face") {
  const GrayImage c(12, 10, 40);
  const auto m = mslbp_face(c);
  CHECK(m.height == 12);
  CHECK(m.width == 10);
  for (auto code : m.codes) CHECK(code == (std::uint64_t{1} << 48) - 1);

  const auto img = testutil::random_image(30, 26, 21);
  const auto f = mslbp_face(img);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      std::uint64_t want = 0;
      int shift = 0;
      for (const auto& cfg : kAll) {
        want |= static_cast<std::uint64_t>(naive_lbp(img, x, y, cfg.p, cfg.r)) << shift;
        shift += cfg.p;
      }
      REQUIRE(f.at(y, x) == want);
    }
  }
  CHECK(kMslbpBits == 8 + 8 + 8 + 8 + 16);
}

TEST_CASE("horizontal flip permutes neighbour bits") {
  const auto img = testutil::random_image(20, 20, 33);
  const auto flipped = flip_lr(img);
  for (const auto& cfg : kAll) {
    const auto a = lbp_plane(img, cfg);
    const auto b = lbp_plane(flipped, cfg);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        REQUIRE(b[static_cast<std::size_t>(y) * img.width + (img.width - 1 - x)] ==
                mirror_bits(a[static_cast<std::size_t>(y) * img.width + x], cfg.p));
  }
}

TEST_CASE("monotone intensity invariance") {
  // Values in [0, 127] so doubling stays in range; scaling by two is exact
  // in floating point, so interpolated samples scale exactly too.
  auto img = testutil::random_image(16, 16, 44);
  for (auto& v : img.data) v /= 2;
  GrayImage doubled = img;
  for (auto& v : doubled.data) v = static_cast<std::uint8_t>(2 * v);
  for (const auto& cfg : kAll) CHECK(lbp_plane(img, cfg) == lbp_plane(doubled, cfg));

  // Arbitrary strictly increasing remap: bits of neighbours on pixel centres
  // (no interpolation) are invariant.
  std::array<std::uint8_t, 128> lut{};
  for (int v = 0; v < 128; ++v) lut[v] = static_cast<std::uint8_t>(v * v / 128 + v);  // strictly increasing
  GrayImage remapped = img;
  for (auto& v : remapped.data) v = lut[v];
  for (const auto& cfg : kAll) {
    std::uint32_t axis_mask = 0;
    for (int k = 0; k < cfg.p; k += cfg.p / 4) axis_mask |= 1u << k;
    const auto a = lbp_plane(img, cfg), b = lbp_plane(remapped, cfg);
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE((a[i] & axis_mask) == (b[i] & axis_mask));
  }
}

TEST_CASE("block descriptor") {
  const auto img = testutil::random_image(120, 100, 55);
  const auto d = block_descriptor(img, {20, 30, 10, 10});
  CHECK(d.size() == 361);
  double s1 = 0, s2 = 0, s3 = 0;
  for (int k = 0; k < 59; ++k) s1 += d[k];
  for (int k = 59; k < 118; ++k) s2 += d[k];
  for (int k = 118; k < 361; ++k) s3 += d[k];
  CHECK(s1 == doctest::Approx(1));
  CHECK(s2 == doctest::Approx(1));
  CHECK(s3 == doctest::Approx(1));
  CHECK(block_descriptor(img, {20, 30, 10, 10}) == d);

  const GrayImage flat(120, 100, 9);
  const auto f = block_descriptor(flat, {0, 0, 10, 10});
  CHECK(std::count(f.begin(), f.end(), 1.0) == 3);
  CHECK(std::count(f.begin(), f.end(), 0.0) == 358);

  CHECK_THROWS_AS(block_descriptor(img, {0, 0, 10, 9}), DimensionError);
  CHECK_THROWS_AS(block_descriptor(img, {95, 0, 10, 10}), GeometryError);

  const auto all = face_block_descriptors(img);
  REQUIRE(all.size() == 120);
  CHECK(all[0] == block_descriptor(img, {0, 0, 10, 10}));
  CHECK(all[3 * 10 + 2] == block_descriptor(img, {20, 30, 10, 10}));
  CHECK(all[119] == block_descriptor(img, {90, 110, 10, 10}));
}

TEST_CASE("chi-square distance") {
  const std::vector<double> a{1, 0}, b{0, 1};
  CHECK(chi_square(a, b) == 2.0);
  CHECK(chi_square(a, a) == 0.0);
  const auto img = testutil::random_image(120, 100, 66);
  const auto blocks = face_block_descriptors(img);
  for (int i = 0; i < 20; ++i) {
    const auto& x = blocks[i];
    const auto& y = blocks[i + 50];
    CHECK(chi_square(x, y) == chi_square(y, x));
    CHECK(chi_square(x, y) > 0);
    CHECK(chi_square(x, x) == 0);
  }
  const std::vector<double> c{1, 2, 3};
  CHECK_THROWS_AS(chi_square(a, c), DimensionError);
}
