#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "facepad/texture.hpp"

namespace facepad {

inline constexpr int kDefaultCodebookSize = 256;
inline constexpr double kDefaultSampleRate = 0.1;

// Textons in the 48-dim space of bit-expanded MSLBP codes.
struct Codebook {
  int dims = kMslbpBits;
  std::vector<double> textons;  // size() x dims, row-major
  // Uniform-pattern enumerations the model was trained with.
  std::vector<std::uint32_t> uniform8;
  std::vector<std::uint32_t> uniform16;

  int size() const { return static_cast<int>(textons.size() / dims); }
  std::span<const double> texton(int k) const {
    return {textons.data() + static_cast<std::size_t>(k) * dims, static_cast<std::size_t>(dims)};
  }

  std::string serialize() const;
  static Codebook deserialize(std::string_view bytes);
};

struct BovwFace {
  int height = 0;
  int width = 0;
  int n_cb = 0;
  std::vector<std::uint16_t> indices;

  std::uint16_t at(int y, int x) const { return indices[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const BovwFace&, const BovwFace&) = default;
};

// Squared distance between a bit-expanded code and a texton, summed over
// dimensions in ascending order.
double code_distance(std::uint64_t code, std::span<const double> texton);

// Reference argmin over all textons, ties to the smallest index.
int nearest_texton(std::uint64_t code, const Codebook& cb);

// Median-split KD-tree over sampled pixel codes; the leaf means become the
// textons. Throws InsufficientDataError if fewer than n_cb pixels are sampled.
Codebook train_codebook(std::span<const MslbpFace> faces, double sample_rate = kDefaultSampleRate,
                        int n_cb = kDefaultCodebookSize, std::uint64_t seed = 0);

// Same tree construction over explicit codes (no sampling).
Codebook build_codebook(std::span<const std::uint64_t> codes, int n_cb);

// Exact nearest-texton encoder: byte lookup tables narrow the candidates,
// which are then confirmed with code_distance. Holds its own copy of the
// codebook; build once and reuse across faces.
class BovwEncoder {
 public:
  explicit BovwEncoder(const Codebook& cb);
  int encode(std::uint64_t code) const;
  BovwFace encode(const MslbpFace& face) const;

 private:
  Codebook cb_;
  int n_;
  std::vector<float> norms_;
  std::vector<float> tables_;  // [byte][value][texton]
};

BovwFace encode_bovw(const MslbpFace& face, const Codebook& cb);

}  // namespace facepad
