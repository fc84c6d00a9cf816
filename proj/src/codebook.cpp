#include "facepad/codebook.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <numeric>

#include "facepad/errors.hpp"
#include "facepad/random.hpp"
#include "facepad/serialize.hpp"

namespace facepad {

namespace {

constexpr std::string_view kCodebookMagic = "FPCBOOK1";
constexpr double kDuplicateNudge = 1e-3;

inline int bit(std::uint64_t code, int d) { return static_cast<int>((code >> d) & 1u); }

struct Leaf {
  std::vector<std::uint64_t> points;
  std::vector<int> ones;  // per-dimension count of set bits
  double sse = 0;         // sum over dims of n * var
  int split_dim = -1;     // max-variance dimension, -1 if all points identical
};

Leaf make_leaf(std::vector<std::uint64_t> points, int dims) {
  Leaf leaf;
  leaf.ones.assign(dims, 0);
  for (auto c : points)
    for (int d = 0; d < dims; ++d) leaf.ones[d] += bit(c, d);
  const double n = static_cast<double>(points.size());
  double best = 0;
  for (int d = 0; d < dims; ++d) {
    const double var_n = leaf.ones[d] * (n - leaf.ones[d]) / n;
    leaf.sse += var_n;
    if (var_n > best) {
      best = var_n;
      leaf.split_dim = d;
    }
  }
  leaf.points = std::move(points);
  return leaf;
}

}  // namespace

double code_distance(std::uint64_t code, std::span<const double> texton) {
  double sum = 0;
  for (std::size_t d = 0; d < texton.size(); ++d) {
    const double diff = bit(code, static_cast<int>(d)) - texton[d];
    sum += diff * diff;
  }
  return sum;
}

int nearest_texton(std::uint64_t code, const Codebook& cb) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cb.size(); ++k) {
    const double d = code_distance(code, cb.texton(k));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

Codebook build_codebook(std::span<const std::uint64_t> codes, int n_cb) {
  if (n_cb < 2) throw PreconditionError("codebook needs at least two textons");
  if (codes.size() < static_cast<std::size_t>(n_cb)) {
    throw InsufficientDataError("fewer sampled pixels than textons");
  }
  constexpr int dims = kMslbpBits;
  std::vector<Leaf> leaves;
  leaves.push_back(make_leaf({codes.begin(), codes.end()}, dims));

  while (static_cast<int>(leaves.size()) < n_cb) {
    // Split the leaf with the largest scatter; ties go to the earliest leaf.
    int pick = -1;
    for (int i = 0; i < static_cast<int>(leaves.size()); ++i) {
      if (leaves[i].split_dim >= 0 && (pick < 0 || leaves[i].sse > leaves[pick].sse)) pick = i;
    }
    std::vector<std::uint64_t> lo, hi;
    if (pick >= 0) {
      // Binary coordinates: the median boundary on the max-variance dimension
      // is the 0/1 boundary.
      const int d = leaves[pick].split_dim;
      for (auto c : leaves[pick].points) (bit(c, d) ? hi : lo).push_back(c);
    } else {
      // Every leaf holds identical points; halve the largest one. The
      // resulting duplicate textons are separated below.
      for (int i = 0; i < static_cast<int>(leaves.size()); ++i) {
        if (pick < 0 || leaves[i].points.size() > leaves[pick].points.size()) pick = i;
      }
      auto& pts = leaves[pick].points;
      const auto mid = pts.size() / 2;
      lo.assign(pts.begin(), pts.begin() + mid);
      hi.assign(pts.begin() + mid, pts.end());
    }
    leaves[pick] = make_leaf(std::move(lo), dims);
    leaves.insert(leaves.begin() + pick + 1, make_leaf(std::move(hi), dims));
  }

  Codebook cb;
  cb.uniform8 = UniformMap::for_neighbours(8).uniform_codes();
  cb.uniform16 = UniformMap::for_neighbours(16).uniform_codes();
  cb.textons.reserve(static_cast<std::size_t>(n_cb) * dims);
  for (const auto& leaf : leaves) {
    const double n = static_cast<double>(leaf.points.size());
    for (int d = 0; d < dims; ++d) cb.textons.push_back(leaf.ones[d] / n);
  }

  for (int k = 1; k < n_cb; ++k) {
    auto row = [&](int i) { return cb.textons.begin() + static_cast<std::ptrdiff_t>(i) * dims; };
    for (int attempt = 0;; ++attempt) {
      bool dup = false;
      for (int j = 0; j < k && !dup; ++j) dup = std::equal(row(k), row(k) + dims, row(j));
      if (!dup) break;
      const int leaf_dim = leaves[k].split_dim >= 0 ? leaves[k].split_dim : 0;
      const int d = (leaf_dim + attempt) % dims;
      double& v = *(row(k) + d);
      const double step = kDuplicateNudge * (1 + attempt / dims);
      v += v < 0.5 ? step : -step;
    }
  }
  return cb;
}

Codebook train_codebook(std::span<const MslbpFace> faces, double sample_rate, int n_cb, std::uint64_t seed) {
  if (!(sample_rate > 0 && sample_rate <= 1)) throw PreconditionError("sample_rate must be in (0, 1]");
  Rng rng(seed);
  std::vector<std::uint64_t> samples;
  std::vector<std::size_t> order;
  for (const auto& face : faces) {
    const std::size_t n = face.codes.size();
    if (n == 0) continue;
    const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(sample_rate * n + 0.5));
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < std::min(take, n); ++i) {
      std::swap(order[i], order[i + uniform_index(rng, n - i)]);
      samples.push_back(face.codes[order[i]]);
    }
  }
  if (samples.size() < static_cast<std::size_t>(n_cb)) {
    throw InsufficientDataError("sampled " + std::to_string(samples.size()) + " pixels, need at least " +
                                std::to_string(n_cb));
  }
  return build_codebook(samples, n_cb);
}

std::string Codebook::serialize() const {
  ByteWriter w;
  w.magic(kCodebookMagic);
  w.u32(static_cast<std::uint32_t>(size()));
  w.u32(static_cast<std::uint32_t>(dims));
  w.f64s(textons);
  w.u32s(uniform8);
  w.u32s(uniform16);
  return w.take();
}

Codebook Codebook::deserialize(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect_magic(kCodebookMagic);
  Codebook cb;
  const auto n = r.u32();
  cb.dims = static_cast<int>(r.u32());
  cb.textons = r.f64s();
  cb.uniform8 = r.u32s();
  cb.uniform16 = r.u32s();
  if (cb.dims != kMslbpBits || cb.textons.size() != static_cast<std::size_t>(n) * cb.dims) {
    throw FormatError("codebook shape mismatch");
  }
  if (cb.uniform8 != UniformMap::for_neighbours(8).uniform_codes() ||
      cb.uniform16 != UniformMap::for_neighbours(16).uniform_codes()) {
    throw ModelCompatibilityError("codebook was trained with a different uniform-pattern ordering");
  }
  return cb;
}

namespace {
constexpr float kCandidateSlack = 1e-2f;
}  // namespace

BovwEncoder::BovwEncoder(const Codebook& cb) : cb_(cb), n_(cb.size()) {
  if (cb.dims != kMslbpBits) throw ModelCompatibilityError("codebook dimensionality is not 48");
  norms_.assign(n_, 0.0f);
  for (int k = 0; k < n_; ++k) {
    double sq = 0;
    for (double c : cb.texton(k)) sq += c * c;
    norms_[k] = static_cast<float>(sq);
  }
  // ||x - c||^2 = ||c||^2 + sum_i x_i (1 - 2 c_i) for x in {0,1}^48. Row v
  // extends row (v without its lowest set bit) by that bit's term.
  tables_.assign(static_cast<std::size_t>(6) * 256 * n_, 0.0f);
  for (int byte = 0; byte < 6; ++byte) {
    float* base = &tables_[static_cast<std::size_t>(byte) * 256 * n_];
    for (int v = 1; v < 256; ++v) {
      const int b = std::countr_zero(static_cast<unsigned>(v));
      const float* prev = base + static_cast<std::size_t>(v & (v - 1)) * n_;
      float* row = base + static_cast<std::size_t>(v) * n_;
      for (int k = 0; k < n_; ++k) {
        row[k] = prev[k] + static_cast<float>(1.0 - 2.0 * cb.textons[static_cast<std::size_t>(k) * kMslbpBits + byte * 8 + b]);
      }
    }
  }
}

int BovwEncoder::encode(std::uint64_t code) const {
  thread_local std::vector<float> dist;
  dist.resize(n_);
  const float* r[6];
  for (int byte = 0; byte < 6; ++byte)
    r[byte] = &tables_[(static_cast<std::size_t>(byte) * 256 + ((code >> (8 * byte)) & 0xFF)) * n_];
  const float* nm = norms_.data();
  float* d = dist.data();
  // one fused pass; the compiler vectorises this
  for (int k = 0; k < n_; ++k) d[k] = ((nm[k] + r[0][k]) + (r[1][k] + r[2][k])) + ((r[3][k] + r[4][k]) + r[5][k]);
  // lane-wise minimum so it vectorises without fast-math
  float lanes[8];
  std::fill(lanes, lanes + 8, std::numeric_limits<float>::infinity());
  int k0 = 0;
  for (; k0 + 8 <= n_; k0 += 8)
    for (int l = 0; l < 8; ++l) lanes[l] = d[k0 + l] < lanes[l] ? d[k0 + l] : lanes[l];
  for (; k0 < n_; ++k0) lanes[0] = std::min(lanes[0], d[k0]);
  const float approx_min = *std::min_element(lanes, lanes + 8);
  // Single-precision sums of at most 49 terms of magnitude <= 48 stay well
  // within kCandidateSlack of the exact value, so every true minimiser is a
  // candidate; the reference distance then decides, ties to the lower index.
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_; ++k) {
    if (dist[k] <= approx_min + kCandidateSlack) {
      const double d = code_distance(code, cb_.texton(k));
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
  }
  return best;
}

BovwFace BovwEncoder::encode(const MslbpFace& face) const {
  BovwFace out{face.height, face.width, n_, std::vector<std::uint16_t>(face.codes.size())};
  for (std::size_t i = 0; i < face.codes.size(); ++i) {
    out.indices[i] = static_cast<std::uint16_t>(encode(face.codes[i]));
  }
  return out;
}

BovwFace encode_bovw(const MslbpFace& face, const Codebook& cb) { return BovwEncoder(cb).encode(face); }

}  // namespace facepad
