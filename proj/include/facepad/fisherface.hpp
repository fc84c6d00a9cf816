#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "facepad/image.hpp"

namespace facepad {

// Per-pixel discriminability weights in [0, 1].
struct FisherFace {
  int height = kFaceHeight;
  int width = kFaceWidth;
  std::vector<double> weights;

  double at(int y, int x) const { return weights[static_cast<std::size_t>(y) * width + x]; }

  // Unit weights; reduces the weighted histograms to plain occurrence counts.
  static FisherFace uniform(int h = kFaceHeight, int w = kFaceWidth, double value = 1.0);

  std::string serialize() const;
  static FisherFace deserialize(std::string_view bytes);
};

// Means and (population) variances of chi-square block distances.
struct BlockStats {
  double mu_g = 0, sigma_g = 0;
  double mu_f = 0, sigma_f = 0;
  double mu_inter = 0, sigma_inter = 0;
};

struct BlockIndex {
  int row = 0;
  int col = 0;
};

inline constexpr std::size_t kDefaultPairBudget = 5000;
inline constexpr double kFisherEpsilon = 1e-6;

// Face-index pairs drawn once and reused for every block.
struct PairSample {
  std::vector<std::pair<int, int>> genuine;  // i < j, both genuine
  std::vector<std::pair<int, int>> fake;     // i < j, both fake
  std::vector<std::pair<int, int>> inter;    // (genuine, fake)
};

// All pairs when the budget covers them, otherwise `budget` pairs per
// statistic drawn without replacement. Pairs are returned sorted.
PairSample sample_pairs(int n_genuine, int n_fake, std::size_t budget, std::uint64_t seed);

BlockStats block_stats(std::span<const GrayImage> real_faces, std::span<const GrayImage> fake_faces,
                       BlockIndex block, std::size_t pair_budget = kDefaultPairBudget,
                       std::uint64_t seed = 0);

// (mu_g + mu_f - mu_inter)^2 / max(sigma_g + sigma_f - sigma_inter, eps)
double fisher_ratio(const BlockStats& stats);

// Bilinear upsampling of a block ratio grid (knots at block centres, edge
// replication outside them) followed by min-max normalisation. A constant map
// normalises to all ones.
FisherFace fisher_face_from_ratios(std::span<const double> ratios, int grid_rows, int grid_cols,
                                   int block = 10);

FisherFace build_fisher_face(std::span<const GrayImage> real_faces, std::span<const GrayImage> fake_faces,
                             std::size_t pair_budget = kDefaultPairBudget, std::uint64_t seed = 0);

}  // namespace facepad
