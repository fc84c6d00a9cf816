#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "facepad/image.hpp"

namespace facepad {

struct LbpConfig {
  int p = 8;  // neighbour count, 8 or 16
  int r = 1;  // radius in pixels, 1..4
  bool uniform = false;
};

inline constexpr LbpConfig kLbp8r1{8, 1};
inline constexpr LbpConfig kLbp8r2{8, 2};
inline constexpr LbpConfig kLbp8r3{8, 3};
inline constexpr LbpConfig kLbp8r4{8, 4};
inline constexpr LbpConfig kLbp16r2{16, 2};

// The five raw operators packed into one 48-bit code, low bits first.
inline constexpr LbpConfig kMslbpOperators[] = {kLbp8r1, kLbp8r2, kLbp8r3, kLbp8r4, kLbp16r2};
inline constexpr int kMslbpBits = 48;

inline constexpr int kBlockSize = 10;
inline constexpr int kBlockDescriptorSize = 361;  // 59 + 59 + 243

// Bit k is set iff the bilinearly sampled neighbour k (angle 2*pi*k/p,
// k = 0 pointing east, counter-clockwise) is >= the centre pixel. Out of
// range samples use replicate padding.
std::uint32_t lbp_code(const GrayImage& img, int x, int y, const LbpConfig& cfg);

// Codes for every pixel, row-major.
std::vector<std::uint32_t> lbp_plane(const GrayImage& img, const LbpConfig& cfg);

// Mapping from raw codes to uniform-pattern bins. Uniform codes (at most two
// circular 0/1 transitions) get bins in ascending code order; every other
// code maps to the last bin.
class UniformMap {
 public:
  static const UniformMap& for_neighbours(int p);

  int neighbours() const { return p_; }
  int bins() const { return static_cast<int>(uniform_codes_.size()) + 1; }
  int bin(std::uint32_t code) const;
  // Uniform codes in bin order; serialised with trained models.
  const std::vector<std::uint32_t>& uniform_codes() const { return uniform_codes_; }

 private:
  explicit UniformMap(int p);

  int p_;
  std::vector<std::uint32_t> uniform_codes_;
  std::vector<std::int32_t> lut_;
};

bool is_uniform_pattern(std::uint32_t code, int p);

// L1-normalised uniform-pattern histogram. Throws EncodingError for codes
// >= 2^p.
std::vector<double> uniform_histogram(std::span<const std::uint32_t> codes, const LbpConfig& cfg);

struct MslbpFace {
  int height = 0;
  int width = 0;
  std::vector<std::uint64_t> codes;

  std::uint64_t at(int y, int x) const { return codes[static_cast<std::size_t>(y) * width + x]; }
};

MslbpFace mslbp_face(const GrayImage& img);

using BlockDescriptor = std::vector<double>;

// Uniform LBP^u_{8,1}, LBP^u_{8,2}, LBP^u_{16,2} histograms over a 10x10 block.
BlockDescriptor block_descriptor(const GrayImage& img, const PixelRect& block);

// Descriptors for the whole non-overlapping 10x10 block grid of a face,
// row-major over blocks. Equivalent to calling block_descriptor per block but
// computes the LBP planes once.
std::vector<BlockDescriptor> face_block_descriptors(const GrayImage& img);

double chi_square(std::span<const double> a, std::span<const double> b);

}  // namespace facepad
