#include "facepad/fisherface.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "facepad/errors.hpp"
#include "facepad/random.hpp"
#include "facepad/serialize.hpp"
#include "facepad/texture.hpp"

namespace facepad {

namespace {

constexpr std::string_view kFisherMagic = "FPFISH01";

// Block histograms stored as raw counts (each block has 100 pixels), which
// lets the chi-square distance run in integer arithmetic.
using BlockCounts = std::vector<std::uint8_t>;

std::vector<BlockCounts> face_block_counts(const GrayImage& face) {
  auto descs = face_block_descriptors(face);
  std::vector<BlockCounts> out;
  out.reserve(descs.size());
  for (const auto& d : descs) {
    BlockCounts c(d.size());
    for (std::size_t k = 0; k < d.size(); ++k) {
      c[k] = static_cast<std::uint8_t>(std::lround(d[k] * kBlockSize * kBlockSize));
    }
    out.push_back(std::move(c));
  }
  return out;
}

double chi_square_counts(const BlockCounts& a, const BlockCounts& b) {
  double sum = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const int s = a[k] + b[k];
    if (s > 0) {
      const int d = a[k] - b[k];
      sum += static_cast<double>(d * d) / s;
    }
  }
  return sum / (kBlockSize * kBlockSize);
}

struct MeanVar {
  double mean = 0;
  double var = 0;
};

template <typename Dist>
MeanVar mean_var(const std::vector<std::pair<int, int>>& pairs, Dist&& dist) {
  MeanVar mv;
  if (pairs.empty()) return mv;
  std::vector<double> values;
  values.reserve(pairs.size());
  for (const auto& [i, j] : pairs) values.push_back(dist(i, j));
  mv.mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  double ss = 0;
  for (double v : values) ss += (v - mv.mean) * (v - mv.mean);
  mv.var = ss / values.size();
  return mv;
}

std::vector<std::pair<int, int>> choose(std::vector<std::pair<int, int>> all, std::size_t budget, Rng& rng) {
  if (budget >= all.size()) return all;
  for (std::size_t i = 0; i < budget; ++i) {
    const auto j = i + uniform_index(rng, all.size() - i);
    std::swap(all[i], all[j]);
  }
  all.resize(budget);
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<std::pair<int, int>> within_pairs(int n) {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.emplace_back(i, j);
  return out;
}

void require_two_per_class(std::size_t g, std::size_t f) {
  if (g < 2 || f < 2) throw InsufficientDataError("Fisher face needs at least two faces per class");
}

void require_face_dims(std::span<const GrayImage> faces) {
  for (const auto& f : faces) {
    if (f.height != kFaceHeight || f.width != kFaceWidth) {
      throw DimensionError("training faces must be 120x100");
    }
  }
}

BlockStats stats_for_block(const std::vector<std::vector<BlockCounts>>& genuine,
                           const std::vector<std::vector<BlockCounts>>& fake, std::size_t block,
                           const PairSample& pairs) {
  auto g = mean_var(pairs.genuine, [&](int i, int j) { return chi_square_counts(genuine[i][block], genuine[j][block]); });
  auto f = mean_var(pairs.fake, [&](int i, int j) { return chi_square_counts(fake[i][block], fake[j][block]); });
  auto x = mean_var(pairs.inter, [&](int i, int j) { return chi_square_counts(genuine[i][block], fake[j][block]); });
  return {g.mean, g.var, f.mean, f.var, x.mean, x.var};
}

}  // namespace

FisherFace FisherFace::uniform(int h, int w, double value) {
  FisherFace f;
  f.height = h;
  f.width = w;
  f.weights.assign(static_cast<std::size_t>(h) * w, value);
  return f;
}

std::string FisherFace::serialize() const {
  ByteWriter w;
  w.magic(kFisherMagic);
  w.u32(static_cast<std::uint32_t>(height));
  w.u32(static_cast<std::uint32_t>(width));
  w.f64s(weights);
  return w.take();
}

FisherFace FisherFace::deserialize(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect_magic(kFisherMagic);
  FisherFace f;
  f.height = static_cast<int>(r.u32());
  f.width = static_cast<int>(r.u32());
  f.weights = r.f64s();
  if (f.weights.size() != static_cast<std::size_t>(f.height) * f.width) {
    throw FormatError("Fisher face weight count does not match dimensions");
  }
  return f;
}

PairSample sample_pairs(int n_genuine, int n_fake, std::size_t budget, std::uint64_t seed) {
  Rng rng(seed);
  PairSample s;
  s.genuine = choose(within_pairs(n_genuine), budget, rng);
  s.fake = choose(within_pairs(n_fake), budget, rng);
  std::vector<std::pair<int, int>> inter;
  inter.reserve(static_cast<std::size_t>(n_genuine) * n_fake);
  for (int i = 0; i < n_genuine; ++i)
    for (int j = 0; j < n_fake; ++j) inter.emplace_back(i, j);
  s.inter = choose(std::move(inter), budget, rng);
  return s;
}

BlockStats block_stats(std::span<const GrayImage> real_faces, std::span<const GrayImage> fake_faces,
                       BlockIndex block, std::size_t pair_budget, std::uint64_t seed) {
  require_two_per_class(real_faces.size(), fake_faces.size());
  const PixelRect rect{block.col * kBlockSize, block.row * kBlockSize, kBlockSize, kBlockSize};
  auto counts = [&](std::span<const GrayImage> faces) {
    std::vector<std::vector<BlockCounts>> out;
    for (const auto& f : faces) {
      const auto d = block_descriptor(f, rect);
      BlockCounts c(d.size());
      for (std::size_t k = 0; k < d.size(); ++k) {
        c[k] = static_cast<std::uint8_t>(std::lround(d[k] * kBlockSize * kBlockSize));
      }
      out.push_back({std::move(c)});
    }
    return out;
  };
  const auto pairs = sample_pairs(static_cast<int>(real_faces.size()), static_cast<int>(fake_faces.size()),
                                  pair_budget, seed);
  return stats_for_block(counts(real_faces), counts(fake_faces), 0, pairs);
}

double fisher_ratio(const BlockStats& s) {
  const double num = s.mu_g + s.mu_f - s.mu_inter;
  const double den = std::max(s.sigma_g + s.sigma_f - s.sigma_inter, kFisherEpsilon);
  return num * num / den;
}

FisherFace fisher_face_from_ratios(std::span<const double> ratios, int grid_rows, int grid_cols, int block) {
  if (ratios.size() != static_cast<std::size_t>(grid_rows) * grid_cols || grid_rows < 1 || grid_cols < 1) {
    throw DimensionError("ratio grid size mismatch");
  }
  FisherFace f = FisherFace::uniform(grid_rows * block, grid_cols * block, 0.0);
  auto knot = [&](int r, int c) { return ratios[static_cast<std::size_t>(r) * grid_cols + c]; };
  const double half = (block - 1) / 2.0;
  for (int y = 0; y < f.height; ++y) {
    const double gy = std::clamp((y - half) / block, 0.0, double(grid_rows - 1));
    const int r0 = static_cast<int>(gy);
    const int r1 = std::min(r0 + 1, grid_rows - 1);
    const double ty = gy - r0;
    for (int x = 0; x < f.width; ++x) {
      const double gx = std::clamp((x - half) / block, 0.0, double(grid_cols - 1));
      const int c0 = static_cast<int>(gx);
      const int c1 = std::min(c0 + 1, grid_cols - 1);
      const double tx = gx - c0;
      const double top = knot(r0, c0) + tx * (knot(r0, c1) - knot(r0, c0));
      const double bot = knot(r1, c0) + tx * (knot(r1, c1) - knot(r1, c0));
      f.weights[static_cast<std::size_t>(y) * f.width + x] = top + ty * (bot - top);
    }
  }
  const auto [lo, hi] = std::minmax_element(f.weights.begin(), f.weights.end());
  const double min = *lo;
  const double range = *hi - *lo;
  if (!(range > 0)) {
    std::fill(f.weights.begin(), f.weights.end(), 1.0);
  } else {
    for (auto& w : f.weights) w = std::clamp((w - min) / range, 0.0, 1.0);
  }
  return f;
}

FisherFace build_fisher_face(std::span<const GrayImage> real_faces, std::span<const GrayImage> fake_faces,
                             std::size_t pair_budget, std::uint64_t seed) {
  require_two_per_class(real_faces.size(), fake_faces.size());
  require_face_dims(real_faces);
  require_face_dims(fake_faces);
  std::vector<std::vector<BlockCounts>> genuine, fake;
  for (const auto& f : real_faces) genuine.push_back(face_block_counts(f));
  for (const auto& f : fake_faces) fake.push_back(face_block_counts(f));
  const auto pairs = sample_pairs(static_cast<int>(real_faces.size()), static_cast<int>(fake_faces.size()),
                                  pair_budget, seed);
  constexpr int rows = kFaceHeight / kBlockSize;
  constexpr int cols = kFaceWidth / kBlockSize;
  std::vector<double> ratios(rows * cols);
  for (std::size_t b = 0; b < ratios.size(); ++b) {
    ratios[b] = fisher_ratio(stats_for_block(genuine, fake, b, pairs));
  }
  return fisher_face_from_ratios(ratios, rows, cols, kBlockSize);
}

}  // namespace facepad
