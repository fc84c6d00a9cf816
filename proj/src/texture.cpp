#include "facepad/texture.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <numbers>

#include "facepad/errors.hpp"

namespace facepad {

namespace {

struct Sample {
  int dx0, dy0;  // floor of offset
  double fx, fy;  // fractional parts
};

// Offsets are rounded to a 1e-9 grid so that mirrored neighbours get exactly
// negated offsets and on-axis neighbours land on integer pixels.
std::vector<Sample> make_samples(int p, int r) {
  std::vector<Sample> out;
  for (int k = 0; k < p; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / p;
    const double dx = std::round(r * std::cos(theta) * 1e9) / 1e9;
    const double dy = std::round(-r * std::sin(theta) * 1e9) / 1e9;
    const double fx0 = std::floor(dx);
    const double fy0 = std::floor(dy);
    out.push_back({static_cast<int>(fx0), static_cast<int>(fy0), dx - fx0, dy - fy0});
  }
  return out;
}

const std::vector<Sample>& samples_for(const LbpConfig& cfg) {
  static const std::array<std::vector<Sample>, 5> p8 = {make_samples(8, 0), make_samples(8, 1),
                                                        make_samples(8, 2), make_samples(8, 3),
                                                        make_samples(8, 4)};
  static const std::array<std::vector<Sample>, 5> p16 = {make_samples(16, 0), make_samples(16, 1),
                                                         make_samples(16, 2), make_samples(16, 3),
                                                         make_samples(16, 4)};
  if ((cfg.p != 8 && cfg.p != 16) || cfg.r < 1 || cfg.r > 4) {
    throw PreconditionError("unsupported LBP configuration");
  }
  return cfg.p == 8 ? p8[cfg.r] : p16[cfg.r];
}

// Interior pixels skip the replicate padding; the arithmetic is the same.
template <bool Interior>
inline double pixel(const GrayImage& img, int y, int x) {
  if constexpr (Interior) {
    return img.data[static_cast<std::size_t>(y) * img.width + x];
  } else {
    return img.clamped(y, x);
  }
}

template <bool Interior>
inline double sample_at(const GrayImage& img, int x, int y, const Sample& s) {
  const int x0 = x + s.dx0;
  const int y0 = y + s.dy0;
  const double a = pixel<Interior>(img, y0, x0);
  if (s.fx == 0.0 && s.fy == 0.0) return a;
  const double b = pixel<Interior>(img, y0, x0 + 1);
  const double c = pixel<Interior>(img, y0 + 1, x0);
  const double d = pixel<Interior>(img, y0 + 1, x0 + 1);
  // Nested lerp keeps constant neighbourhoods exact.
  const double top = a + s.fx * (b - a);
  const double bot = c + s.fx * (d - c);
  return top + s.fy * (bot - top);
}

template <bool Interior>
inline std::uint32_t code_at_impl(const GrayImage& img, int x, int y, const std::vector<Sample>& samples) {
  const double centre = img.at(y, x);
  std::uint32_t code = 0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (sample_at<Interior>(img, x, y, samples[k]) >= centre) code |= 1u << k;
  }
  return code;
}

inline std::uint32_t code_at(const GrayImage& img, int x, int y, const std::vector<Sample>& samples, int r) {
  // bilinear reads reach at most r + 1 pixels away
  const bool interior = x - r - 1 >= 0 && y - r - 1 >= 0 && x + r + 1 < img.width && y + r + 1 < img.height;
  return interior ? code_at_impl<true>(img, x, y, samples) : code_at_impl<false>(img, x, y, samples);
}

}  // namespace

std::uint32_t lbp_code(const GrayImage& img, int x, int y, const LbpConfig& cfg) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) {
    throw GeometryError("LBP centre outside the image");
  }
  return code_at(img, x, y, samples_for(cfg), cfg.r);
}

std::vector<std::uint32_t> lbp_plane(const GrayImage& img, const LbpConfig& cfg) {
  const auto& samples = samples_for(cfg);
  std::vector<std::uint32_t> out(img.data.size());
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      out[static_cast<std::size_t>(y) * img.width + x] = code_at(img, x, y, samples, cfg.r);
    }
  }
  return out;
}

bool is_uniform_pattern(std::uint32_t code, int p) {
  const std::uint32_t mask = p == 32 ? ~0u : ((1u << p) - 1);
  const std::uint32_t rotated = ((code >> 1) | (code << (p - 1))) & mask;
  return std::popcount((code ^ rotated) & mask) <= 2;
}

UniformMap::UniformMap(int p) : p_(p), lut_(std::size_t{1} << p, -1) {
  for (std::uint32_t c = 0; c < (1u << p); ++c) {
    if (is_uniform_pattern(c, p)) {
      lut_[c] = static_cast<std::int32_t>(uniform_codes_.size());
      uniform_codes_.push_back(c);
    }
  }
  const auto other = static_cast<std::int32_t>(uniform_codes_.size());
  for (auto& v : lut_) {
    if (v < 0) v = other;
  }
}

const UniformMap& UniformMap::for_neighbours(int p) {
  static const UniformMap m8(8);
  static const UniformMap m16(16);
  if (p == 8) return m8;
  if (p == 16) return m16;
  throw PreconditionError("uniform map only defined for 8 or 16 neighbours");
}

int UniformMap::bin(std::uint32_t code) const {
  if (code >= lut_.size()) throw EncodingError("LBP code out of range");
  return lut_[code];
}

std::vector<double> uniform_histogram(std::span<const std::uint32_t> codes, const LbpConfig& cfg) {
  const auto& map = UniformMap::for_neighbours(cfg.p);
  std::vector<double> hist(map.bins(), 0.0);
  for (auto c : codes) hist[map.bin(c)] += 1.0;
  if (!codes.empty()) {
    for (auto& h : hist) h /= static_cast<double>(codes.size());
  }
  return hist;
}

MslbpFace mslbp_face(const GrayImage& img) {
  MslbpFace out{img.height, img.width, std::vector<std::uint64_t>(img.data.size(), 0)};
  int shift = 0;
  for (const auto& cfg : kMslbpOperators) {
    const auto& samples = samples_for(cfg);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        out.codes[static_cast<std::size_t>(y) * img.width + x] |=
            static_cast<std::uint64_t>(code_at(img, x, y, samples, cfg.r)) << shift;
      }
    }
    shift += cfg.p;
  }
  return out;
}

namespace {

constexpr LbpConfig kBlockOperators[] = {{8, 1, true}, {8, 2, true}, {16, 2, true}};

BlockDescriptor descriptor_from_planes(const std::array<std::vector<std::uint32_t>, 3>& planes, int width,
                                       const PixelRect& block) {
  BlockDescriptor desc;
  desc.reserve(kBlockDescriptorSize);
  std::vector<std::uint32_t> codes(static_cast<std::size_t>(block.w) * block.h);
  for (int op = 0; op < 3; ++op) {
    std::size_t n = 0;
    for (int y = block.y0; y < block.y0 + block.h; ++y) {
      for (int x = block.x0; x < block.x0 + block.w; ++x) {
        codes[n++] = planes[op][static_cast<std::size_t>(y) * width + x];
      }
    }
    auto h = uniform_histogram(codes, kBlockOperators[op]);
    desc.insert(desc.end(), h.begin(), h.end());
  }
  return desc;
}

void check_block(const GrayImage& img, const PixelRect& block) {
  if (block.w != kBlockSize || block.h != kBlockSize) throw DimensionError("block must be 10x10");
  if (block.x0 < 0 || block.y0 < 0 || block.x0 + block.w > img.width || block.y0 + block.h > img.height) {
    throw GeometryError("block lies outside the image");
  }
}

}  // namespace

BlockDescriptor block_descriptor(const GrayImage& img, const PixelRect& block) {
  check_block(img, block);
  std::array<std::vector<std::uint32_t>, 3> planes;
  for (int op = 0; op < 3; ++op) {
    const auto& samples = samples_for(kBlockOperators[op]);
    auto& plane = planes[op];
    plane.assign(img.data.size(), 0);
    for (int y = block.y0; y < block.y0 + block.h; ++y) {
      for (int x = block.x0; x < block.x0 + block.w; ++x) {
        plane[static_cast<std::size_t>(y) * img.width + x] = code_at(img, x, y, samples, kBlockOperators[op].r);
      }
    }
  }
  return descriptor_from_planes(planes, img.width, block);
}

std::vector<BlockDescriptor> face_block_descriptors(const GrayImage& img) {
  if (img.height % kBlockSize != 0 || img.width % kBlockSize != 0) {
    throw DimensionError("face dimensions must be multiples of the block size");
  }
  std::array<std::vector<std::uint32_t>, 3> planes;
  for (int op = 0; op < 3; ++op) planes[op] = lbp_plane(img, kBlockOperators[op]);
  std::vector<BlockDescriptor> out;
  for (int by = 0; by < img.height / kBlockSize; ++by) {
    for (int bx = 0; bx < img.width / kBlockSize; ++bx) {
      out.push_back(descriptor_from_planes(planes, img.width,
                                           {bx * kBlockSize, by * kBlockSize, kBlockSize, kBlockSize}));
    }
  }
  return out;
}

double chi_square(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("chi-square operands differ in length");
  double sum = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double s = a[k] + b[k];
    if (s > 0) {
      const double d = a[k] - b[k];
      sum += d * d / s;
    }
  }
  return sum;
}

}  // namespace facepad
