#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace facepad {

inline constexpr int kFaceHeight = 120;
inline constexpr int kFaceWidth = 100;

// Row-major 8-bit intensity plane.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  GrayImage() = default;
  GrayImage(int h, int w, std::uint8_t fill = 0);
  GrayImage(int h, int w, std::vector<std::uint8_t> pixels);

  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  // Replicate-padded access.
  std::uint8_t clamped(int y, int x) const;
  bool empty() const { return data.empty(); }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

// Interleaved 24-bit RGB.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;  // r,g,b,r,g,b,...
};

struct BoundingBox {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;

  double area() const { return w * h; }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

double iou(const BoundingBox& a, const BoundingBox& b);

// Integer pixel rectangle, half-open [x0, x0+w) x [y0, y0+h).
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

struct Point2 {
  double x = 0;
  double y = 0;
};

struct EyeCropSpec {
  Point2 left_eye;
  Point2 right_eye;
  double width_factor = 1.6;
  double aspect = 1.2;       // crop height / crop width
  double eye_line = 0.3;     // eye line as a fraction of crop height from the top
};

// round(0.299R + 0.587G + 0.114B), half-up.
GrayImage to_grayscale(const RgbImage& rgb);
GrayImage to_grayscale(const GrayImage& r, const GrayImage& g, const GrayImage& b);

// Corner-aligned bilinear resampling: output sample i maps to source
// coordinate i * (in - 1) / (out - 1).
GrayImage resize_bilinear(const GrayImage& img, int out_h, int out_w);

// Copies rect (clamped to the image); throws GeometryError when empty.
GrayImage crop(const GrayImage& img, const PixelRect& rect);

PixelRect expanded_crop_rect(const GrayImage& img, const BoundingBox& box, double ratio);
GrayImage crop_expanded(const GrayImage& img, const BoundingBox& box, double ratio = 1.1);

PixelRect eye_crop_rect(const GrayImage& img, const EyeCropSpec& spec);
GrayImage crop_by_eyes(const GrayImage& img, const EyeCropSpec& spec);

// Resizes an arbitrary image to the canonical 120x100 face plane.
GrayImage to_face_plane(const GrayImage& img);

}  // namespace facepad
