#include <cmath>

#include "doctest.h"
#include "facepad/errors.hpp"
#include "facepad/image.hpp"
#include "facepad/image_io.hpp"
#include "test_util.hpp"

using namespace facepad;

namespace {

// Independent corner-aligned bilinear reference.
std::uint8_t ref_bilinear(const GrayImage& img, int oh, int ow, int i, int j) {
  const double fy = oh > 1 ? i * double(img.height - 1) / (oh - 1) : 0;
  const double fx = ow > 1 ? j * double(img.width - 1) / (ow - 1) : 0;
  const int y0 = static_cast<int>(std::floor(fy)), x0 = static_cast<int>(std::floor(fx));
  const int y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  const double ty = fy - y0, tx = fx - x0;
  const double v = (1 - ty) * ((1 - tx) * img.at(y0, x0) + tx * img.at(y0, x1)) +
                   ty * ((1 - tx) * img.at(y1, x0) + tx * img.at(y1, x1));
  return static_cast<std::uint8_t>(std::floor(v + 0.5));
}

RgbImage one_pixel(std::uint8_t r, std::uint8_t g, std::uint8_t b) { return {1, 1, {r, g, b}}; }

}  // namespace

TEST_CASE("grayscale conversion") {
  CHECK(to_grayscale(one_pixel(0, 0, 0)).at(0, 0) == 0);
  CHECK(to_grayscale(one_pixel(255, 255, 255)).at(0, 0) == 255);
  CHECK(to_grayscale(one_pixel(100, 50, 200)).at(0, 0) == 82);
  for (int v = 0; v < 256; ++v) {
    const auto u = static_cast<std::uint8_t>(v);
    CHECK(to_grayscale(one_pixel(u, u, u)).at(0, 0) == v);
  }
  CHECK_THROWS_AS(to_grayscale(GrayImage(2, 2), GrayImage(2, 3), GrayImage(2, 2)), DimensionError);
  const GrayImage r(1, 1, 100), g(1, 1, 50), b(1, 1, 200);
  CHECK(to_grayscale(r, g, b).at(0, 0) == 82);
}

TEST_CASE("bilinear resize") {
  const GrayImage c(7, 9, 7);
  for (auto [h, w] : {std::pair{1, 1}, {3, 20}, {120, 100}, {50, 2}}) {
    const auto out = resize_bilinear(c, h, w);
    CHECK(out.height == h);
    CHECK(out.width == w);
    for (auto v : out.data) CHECK(v == 7);
  }
  const auto img = testutil::random_image(13, 17, 5);
  CHECK(resize_bilinear(img, 13, 17) == img);

  const GrayImage two(2, 2, std::vector<std::uint8_t>{0, 100, 0, 100});
  const auto wide = resize_bilinear(two, 2, 3);
  CHECK(wide.at(0, 1) == 50);
  CHECK(wide.at(1, 1) == 50);
  CHECK(wide.at(0, 0) == 0);
  CHECK(wide.at(0, 2) == 100);

  CHECK_THROWS_AS(resize_bilinear(img, 0, 5), DimensionError);
  CHECK_THROWS_AS(resize_bilinear(img, 5, 0), DimensionError);

  SUBCASE("matches reference") {
    for (auto [h, w] : {std::pair{120, 100}, {7, 31}, {40, 9}}) {
      const auto out = resize_bilinear(img, h, w);
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) REQUIRE(out.at(i, j) == ref_bilinear(img, h, w, i, j));
    }
  }
}

TEST_CASE("expanded crop geometry") {
  const auto img = testutil::random_image(500, 500, 9);
  const auto rect = expanded_crop_rect(img, {200, 200, 100, 100}, 1.1);
  CHECK(rect == PixelRect{195, 195, 110, 110});

  const auto whole = crop_expanded(img, {0, 0, 500, 500}, 1.0);
  CHECK(whole == to_face_plane(img));

  // Ratio 1 with no clamping is plain crop + resize.
  const auto inner = crop_expanded(img, {30, 40, 120, 90}, 1.0);
  CHECK(inner == resize_bilinear(crop(img, {30, 40, 120, 90}), kFaceHeight, kFaceWidth));

  // Overhanging boxes are clamped.
  CHECK(expanded_crop_rect(img, {450, -20, 100, 100}, 1.0) == PixelRect{450, 0, 50, 80});
  CHECK_THROWS_AS(crop_expanded(img, {600, 600, 50, 50}, 1.1), GeometryError);
  CHECK_THROWS_AS(crop_expanded(img, {10, 10, 50, 50}, 0.9), PreconditionError);
  const auto out = crop_expanded(img, {10, 10, 37, 61}, 1.1);
  CHECK(out.height == kFaceHeight);
  CHECK(out.width == kFaceWidth);
}

TEST_CASE("eye crop geometry") {
  const auto img = testutil::random_image(240, 200, 3);
  EyeCropSpec spec;
  spec.left_eye = {40, 50};
  spec.right_eye = {100, 50};
  const auto r = eye_crop_rect(img, spec);
  CHECK(r.w == 96);
  CHECK(r.h == 115);
  CHECK(r.x0 == 22);
  CHECK(r.y0 == 16);  // eye line at 30% of the crop height
  const auto face = crop_by_eyes(img, spec);
  CHECK(face.height == kFaceHeight);
  CHECK(face.width == kFaceWidth);

  spec.right_eye = spec.left_eye;
  CHECK_THROWS_AS(crop_by_eyes(img, spec), PreconditionError);

  // Eyes symmetric about the image centre give a horizontally centred crop.
  spec.left_eye = {70, 100};
  spec.right_eye = {130, 100};
  const auto c = eye_crop_rect(img, spec);
  CHECK(c.x0 + c.w / 2.0 == doctest::Approx(100));

  spec.left_eye = {1000, 1000};
  spec.right_eye = {1060, 1000};
  CHECK_THROWS_AS(crop_by_eyes(img, spec), GeometryError);
}

TEST_CASE("iou") {
  CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == doctest::Approx(1));
  CHECK(iou({0, 0, 10, 10}, {20, 20, 5, 5}) == 0);
  CHECK(iou({0, 0, 10, 10}, {5, 0, 10, 10}) == doctest::Approx(50.0 / 150.0));
}

TEST_CASE("image file round trip") {
  testutil::TempDir dir("image_io");
  const auto img = testutil::random_image(31, 47, 8);
  for (const char* name : {"a.png", "a.pgm"}) {
    save_gray(dir.file(name), img);
    CHECK(load_gray(dir.file(name)) == img);
  }
  RgbImage rgb{3, 4, {}};
  for (int i = 0; i < 36; ++i) rgb.data.push_back(static_cast<std::uint8_t>(i * 7));
  for (const char* name : {"c.png", "c.ppm"}) {
    save_rgb(dir.file(name), rgb);
    const auto loaded = load_image(dir.file(name));
    REQUIRE(std::holds_alternative<RgbImage>(loaded));
    CHECK(std::get<RgbImage>(loaded).data == rgb.data);
    CHECK(load_gray(dir.file(name)) == to_grayscale(rgb));
  }
  {
    std::FILE* f = std::fopen(dir.file("bad.pgm").c_str(), "wb");
    std::fputs("P5\n2 2\n65535\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_image(dir.file("bad.pgm")), FormatError);
  CHECK_THROWS_AS(load_image(dir.file("missing.png")), FormatError);
}
