#include "facepad/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <memory>

#include "facepad/errors.hpp"
#include "facepad/serialize.hpp"

namespace facepad {

namespace {

bool has_png_extension(const std::string& path) {
  if (path.size() < 4) return false;
  std::string ext = path.substr(path.size() - 4);
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".png";
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::variant<GrayImage, RgbImage> load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw FormatError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const auto w = static_cast<int>(png_get_image_width(png, info));
  const auto h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 8 || (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported PNG (need 8-bit gray or 24-bit RGB): " + path);
  }
  const int channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * channels);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (channels == 1) return GrayImage(h, w, std::move(buf));
  return RgbImage{h, w, std::move(buf)};
}

void save_png(const std::string& path, int h, int w, int channels, const std::uint8_t* pixels) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw FormatError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("PNG write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) {
    png_write_row(png, const_cast<png_bytep>(pixels + static_cast<std::size_t>(y) * w * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Netpbm header token, skipping whitespace and '#' comments.
std::string next_token(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  return bytes.substr(start, pos - start);
}

std::variant<GrayImage, RgbImage> load_netpbm(const std::string& path, const std::string& bytes) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  if (magic != "P5" && magic != "P6") throw FormatError("unsupported image format: " + path);
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(bytes, pos));
    h = std::stoi(next_token(bytes, pos));
    maxval = std::stoi(next_token(bytes, pos));
  } catch (const std::exception&) {
    throw FormatError("malformed netpbm header: " + path);
  }
  if (maxval != 255) throw FormatError("only 8-bit netpbm images are supported: " + path);
  if (w <= 0 || h <= 0) throw FormatError("invalid netpbm dimensions: " + path);
  ++pos;  // single whitespace byte after maxval
  const int channels = magic == "P5" ? 1 : 3;
  const std::size_t n = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() < pos + n) throw FormatError("truncated netpbm data: " + path);
  std::vector<std::uint8_t> buf(bytes.begin() + pos, bytes.begin() + pos + n);
  if (channels == 1) return GrayImage(h, w, std::move(buf));
  return RgbImage{h, w, std::move(buf)};
}

void save_netpbm(const std::string& path, int h, int w, int channels, const std::vector<std::uint8_t>& px) {
  std::string out = (channels == 1 ? "P5\n" : "P6\n") + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.append(px.begin(), px.end());
  write_file(path, out);
}

}  // namespace

std::variant<GrayImage, RgbImage> load_image(const std::string& path) {
  if (has_png_extension(path)) return load_png(path);
  const std::string bytes = read_file(path);
  if (bytes.size() >= 8 && static_cast<unsigned char>(bytes[0]) == 0x89 && bytes.substr(1, 3) == "PNG") {
    return load_png(path);
  }
  return load_netpbm(path, bytes);
}

GrayImage load_gray(const std::string& path) {
  auto img = load_image(path);
  if (auto* g = std::get_if<GrayImage>(&img)) return std::move(*g);
  return to_grayscale(std::get<RgbImage>(img));
}

void save_gray(const std::string& path, const GrayImage& img) {
  if (has_png_extension(path)) {
    save_png(path, img.height, img.width, 1, img.data.data());
  } else {
    save_netpbm(path, img.height, img.width, 1, img.data);
  }
}

void save_rgb(const std::string& path, const RgbImage& img) {
  if (has_png_extension(path)) {
    save_png(path, img.height, img.width, 3, img.data.data());
  } else {
    save_netpbm(path, img.height, img.width, 3, img.data);
  }
}

}  // namespace facepad
