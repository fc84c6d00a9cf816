#pragma once

#include <string>
#include <variant>

#include "facepad/image.hpp"

namespace facepad {

// 8-bit gray and 24-bit RGB only, as PNG or binary PGM (P5) / PPM (P6).
// Anything else throws FormatError.
std::variant<GrayImage, RgbImage> load_image(const std::string& path);

// Loads and converts RGB input to gray.
GrayImage load_gray(const std::string& path);

// Format chosen from the extension: .png, otherwise PGM.
void save_gray(const std::string& path, const GrayImage& img);
void save_rgb(const std::string& path, const RgbImage& img);

}  // namespace facepad
