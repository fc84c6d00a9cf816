#include "facepad/image.hpp"

#include <algorithm>
#include <cmath>

#include "facepad/errors.hpp"

namespace facepad {

namespace {

std::uint8_t round_to_u8(double v) {
  const double r = std::floor(v + 0.5);
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

PixelRect clamp_rect(int x0, int y0, int x1, int y1, const GrayImage& img) {
  x0 = std::clamp(x0, 0, img.width);
  x1 = std::clamp(x1, 0, img.width);
  y0 = std::clamp(y0, 0, img.height);
  y1 = std::clamp(y1, 0, img.height);
  if (x1 <= x0 || y1 <= y0) throw GeometryError("crop rectangle does not intersect the image");
  return {x0, y0, x1 - x0, y1 - y0};
}

}  // namespace

GrayImage::GrayImage(int h, int w, std::uint8_t fill) : height(h), width(w) {
  if (h < 0 || w < 0) throw DimensionError("negative image dimensions");
  data.assign(static_cast<std::size_t>(h) * w, fill);
}

GrayImage::GrayImage(int h, int w, std::vector<std::uint8_t> pixels)
    : height(h), width(w), data(std::move(pixels)) {
  if (h < 0 || w < 0 || data.size() != static_cast<std::size_t>(h) * w) {
    throw DimensionError("pixel count does not match image dimensions");
  }
}

std::uint8_t GrayImage::clamped(int y, int x) const {
  return at(std::clamp(y, 0, height - 1), std::clamp(x, 0, width - 1));
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

GrayImage to_grayscale(const RgbImage& rgb) {
  if (rgb.data.size() != static_cast<std::size_t>(rgb.height) * rgb.width * 3) {
    throw DimensionError("rgb buffer size does not match dimensions");
  }
  GrayImage out(rgb.height, rgb.width);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = round_to_u8(0.299 * rgb.data[3 * i] + 0.587 * rgb.data[3 * i + 1] +
                              0.114 * rgb.data[3 * i + 2]);
  }
  return out;
}

GrayImage to_grayscale(const GrayImage& r, const GrayImage& g, const GrayImage& b) {
  if (r.height != g.height || r.height != b.height || r.width != g.width || r.width != b.width) {
    throw DimensionError("channel dimensions differ");
  }
  GrayImage out(r.height, r.width);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = round_to_u8(0.299 * r.data[i] + 0.587 * g.data[i] + 0.114 * b.data[i]);
  }
  return out;
}

GrayImage resize_bilinear(const GrayImage& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw DimensionError("resize target must be at least 1x1");
  if (img.empty()) throw DimensionError("cannot resize an empty image");
  if (out_h == img.height && out_w == img.width) return img;

  const double sy = out_h > 1 ? double(img.height - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? double(img.width - 1) / (out_w - 1) : 0.0;
  GrayImage out(out_h, out_w);
  for (int i = 0; i < out_h; ++i) {
    const double fy = i * sy;
    const int y0 = std::min(static_cast<int>(fy), img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ty = fy - y0;
    for (int j = 0; j < out_w; ++j) {
      const double fx = j * sx;
      const int x0 = std::min(static_cast<int>(fx), img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double tx = fx - x0;
      const double top = img.at(y0, x0) * (1 - tx) + img.at(y0, x1) * tx;
      const double bot = img.at(y1, x0) * (1 - tx) + img.at(y1, x1) * tx;
      out.at(i, j) = round_to_u8(top * (1 - ty) + bot * ty);
    }
  }
  return out;
}

GrayImage crop(const GrayImage& img, const PixelRect& rect) {
  const PixelRect r = clamp_rect(rect.x0, rect.y0, rect.x0 + rect.w, rect.y0 + rect.h, img);
  GrayImage out(r.h, r.w);
  for (int y = 0; y < r.h; ++y) {
    std::copy_n(&img.data[static_cast<std::size_t>(r.y0 + y) * img.width + r.x0], r.w,
                &out.data[static_cast<std::size_t>(y) * r.w]);
  }
  return out;
}

PixelRect expanded_crop_rect(const GrayImage& img, const BoundingBox& box, double ratio) {
  if (!(ratio >= 1.0)) throw PreconditionError("expansion ratio must be >= 1");
  if (!(box.w > 0 && box.h > 0)) throw GeometryError("bounding box has non-positive extent");
  const double cx = box.x + box.w / 2;
  const double cy = box.y + box.h / 2;
  const double w = box.w * ratio;
  const double h = box.h * ratio;
  return clamp_rect(round_half_up(cx - w / 2), round_half_up(cy - h / 2), round_half_up(cx + w / 2),
                    round_half_up(cy + h / 2), img);
}

GrayImage crop_expanded(const GrayImage& img, const BoundingBox& box, double ratio) {
  return to_face_plane(crop(img, expanded_crop_rect(img, box, ratio)));
}

PixelRect eye_crop_rect(const GrayImage& img, const EyeCropSpec& spec) {
  if (!(spec.width_factor > 0) || !(spec.aspect > 0)) {
    throw PreconditionError("eye crop factors must be positive");
  }
  const double d_eye = std::hypot(spec.right_eye.x - spec.left_eye.x, spec.right_eye.y - spec.left_eye.y);
  if (!(d_eye > 0)) throw PreconditionError("eye positions coincide");
  const int w = round_half_up(spec.width_factor * d_eye);
  const int h = round_half_up(spec.aspect * spec.width_factor * d_eye);
  const double mx = (spec.left_eye.x + spec.right_eye.x) / 2;
  const double my = (spec.left_eye.y + spec.right_eye.y) / 2;
  const int x0 = round_half_up(mx - w / 2.0);
  const int y0 = round_half_up(my - spec.eye_line * h);
  return clamp_rect(x0, y0, x0 + w, y0 + h, img);
}

GrayImage crop_by_eyes(const GrayImage& img, const EyeCropSpec& spec) {
  return to_face_plane(crop(img, eye_crop_rect(img, spec)));
}

GrayImage to_face_plane(const GrayImage& img) { return resize_bilinear(img, kFaceHeight, kFaceWidth); }

}  // namespace facepad
