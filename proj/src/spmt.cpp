#include "facepad/spmt.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "facepad/errors.hpp"
#include "facepad/serialize.hpp"

namespace facepad {

namespace {

constexpr std::string_view kCsfMagic = "FPCSFC01";
constexpr std::string_view kPcaMagic = "FPPCAM01";

void check_aligned(const BovwFace& bovw, const FisherFace& fisher) {
  if (bovw.height != fisher.height || bovw.width != fisher.width) {
    throw DimensionError("BOVW face and Fisher face dimensions differ");
  }
}

void check_region(const BovwFace& bovw, const PyramidRegion& region) {
  const auto& r = region.rect;
  if (r.w <= 0 || r.h <= 0 || r.x0 < 0 || r.y0 < 0 || r.x0 + r.w > bovw.width || r.y0 + r.h > bovw.height) {
    throw GeometryError("pyramid region lies outside the face");
  }
}

std::vector<double> weighted_counts(const BovwFace& bovw, const FisherFace& fisher, const PixelRect& r) {
  std::vector<double> counts(bovw.n_cb, 0.0);
  for (int y = r.y0; y < r.y0 + r.h; ++y) {
    for (int x = r.x0; x < r.x0 + r.w; ++x) {
      const auto k = bovw.at(y, x);
      if (k >= counts.size()) throw ModelCompatibilityError("codeword index exceeds codebook size");
      counts[k] += fisher.at(y, x);
    }
  }
  return counts;
}

void l1_normalise(std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += std::abs(x);
  if (s > 0)
    for (auto& x : v) x /= s;
}

void write_bovw(ByteWriter& w, const BovwFace& f) {
  w.u32(static_cast<std::uint32_t>(f.height));
  w.u32(static_cast<std::uint32_t>(f.width));
  w.u32(static_cast<std::uint32_t>(f.n_cb));
  w.u64(f.indices.size());
  for (auto v : f.indices) {
    w.u8(static_cast<std::uint8_t>(v & 0xFF));
    w.u8(static_cast<std::uint8_t>(v >> 8));
  }
}

BovwFace read_bovw(ByteReader& r) {
  BovwFace f;
  f.height = static_cast<int>(r.u32());
  f.width = static_cast<int>(r.u32());
  f.n_cb = static_cast<int>(r.u32());
  const auto n = r.u64();
  if (n != static_cast<std::size_t>(f.height) * f.width) throw FormatError("BOVW face size mismatch");
  f.indices.resize(n);
  for (auto& v : f.indices) {
    const auto lo = r.u8();
    v = static_cast<std::uint16_t>(lo | (r.u8() << 8));
  }
  return f;
}

}  // namespace

const char* to_string(FaceClass c) { return c == FaceClass::Genuine ? "genuine" : "attack"; }

std::vector<PyramidRegion> pyramid_regions(int levels, int height, int width) {
  if (levels < 1) throw PreconditionError("pyramid needs at least one level");
  std::vector<PyramidRegion> out;
  out.push_back({0, 0, {0, 0, width, height}});
  if (levels >= 2) {
    const int rows[4] = {0, height / 4, height / 4 + height / 2, height};
    const int cols[3] = {0, width / 2, width};
    int idx = 0;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 2; ++c)
        out.push_back({1, idx++, {cols[c], rows[r], cols[c + 1] - cols[c], rows[r + 1] - rows[r]}});
  }
  for (int l = 2; l < levels; ++l) {
    const int n = 1 << l;
    int idx = 0;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const int y0 = r * height / n, y1 = (r + 1) * height / n;
        const int x0 = c * width / n, x1 = (c + 1) * width / n;
        out.push_back({l, idx++, {x0, y0, x1 - x0, y1 - y0}});
      }
    }
  }
  return out;
}

std::vector<double> weighted_bovw_histogram(const BovwFace& bovw, const FisherFace& fisher,
                                            const PyramidRegion& region) {
  check_aligned(bovw, fisher);
  check_region(bovw, region);
  auto h = weighted_counts(bovw, fisher, region.rect);
  const double area = static_cast<double>(region.rect.w) * region.rect.h;
  for (auto& v : h) v /= area;
  return h;
}

ClassSpecificFace class_specific_face(std::span<const BovwFace> training, FaceClass tag) {
  if (training.empty()) throw InsufficientDataError("class-specific face needs at least one training face");
  const auto& first = training.front();
  for (const auto& f : training) {
    if (f.height != first.height || f.width != first.width || f.n_cb != first.n_cb) {
      throw ModelCompatibilityError("training BOVW faces disagree on shape or codebook size");
    }
  }
  ClassSpecificFace csf{tag, {first.height, first.width, first.n_cb, std::vector<std::uint16_t>(first.indices.size())}};
  std::vector<int> votes(first.n_cb);
  for (std::size_t i = 0; i < first.indices.size(); ++i) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const auto& f : training) ++votes[f.indices[i]];
    csf.face.indices[i] = static_cast<std::uint16_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return csf;
}

std::vector<double> matching_degree_raw(const BovwFace& bovw, const ClassSpecificFace& csf,
                                        const FisherFace& fisher, const PyramidRegion& region) {
  check_aligned(bovw, fisher);
  check_aligned(csf.face, fisher);
  check_region(bovw, region);
  if (bovw.n_cb != csf.face.n_cb) throw ModelCompatibilityError("class-specific face codebook size differs");
  const auto f = weighted_counts(bovw, fisher, region.rect);
  const auto c = weighted_counts(csf.face, fisher, region.rect);
  std::vector<double> m(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (f[k] == 0 && c[k] == 0) {
      m[k] = 1.0;
    } else if (f[k] == 0 || c[k] == 0) {
      m[k] = 0.0;
    } else {
      m[k] = std::min(f[k] / c[k], c[k] / f[k]);
    }
  }
  return m;
}

std::vector<double> matching_degree(const BovwFace& bovw, const ClassSpecificFace& csf,
                                    const FisherFace& fisher, const PyramidRegion& region) {
  auto m = matching_degree_raw(bovw, csf, fisher, region);
  l1_normalise(m);
  return m;
}

std::string ClassSpecificFace::serialize() const {
  ByteWriter w;
  w.magic(kCsfMagic);
  w.u8(class_tag == FaceClass::Genuine ? 0 : 1);
  write_bovw(w, face);
  return w.take();
}

ClassSpecificFace ClassSpecificFace::deserialize(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect_magic(kCsfMagic);
  ClassSpecificFace csf;
  csf.class_tag = r.u8() == 0 ? FaceClass::Genuine : FaceClass::Attack;
  csf.face = read_bovw(r);
  return csf;
}

PcaModel pca_fit(std::span<const std::vector<double>> vectors, int k) {
  if (vectors.size() < 2) throw InsufficientDataError("PCA needs at least two vectors");
  if (k < 1) throw PreconditionError("PCA component count must be positive");
  const auto n = static_cast<Eigen::Index>(vectors.size());
  const auto d = static_cast<Eigen::Index>(vectors.front().size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(vectors[i].size()) != d) throw DimensionError("PCA inputs differ in length");
    x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(vectors[i].data(), d);
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;

  // Eigen-decompose the smaller of the Gram and covariance matrices.
  Eigen::VectorXd evals;
  Eigen::MatrixXd dirs;  // d x m, columns are unit directions, ascending eigenvalue
  if (n <= d) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x * x.transpose());
    evals = es.eigenvalues();
    dirs = x.transpose() * es.eigenvectors();
    for (Eigen::Index j = 0; j < dirs.cols(); ++j) {
      const double nrm = dirs.col(j).norm();
      if (nrm > 0) dirs.col(j) /= nrm;
    }
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x.transpose() * x);
    evals = es.eigenvalues();
    dirs = es.eigenvectors();
  }

  const double top = std::max(evals.maxCoeff(), 0.0);
  int rank = 0;
  for (Eigen::Index j = 0; j < evals.size(); ++j) {
    if (evals[j] > 1e-10 * top && top > 0) ++rank;
  }
  const int keep = std::min({k, static_cast<int>(n - 1), static_cast<int>(d), rank});

  PcaModel model;
  model.dims = static_cast<int>(d);
  model.requested = k;
  model.mean.assign(mean.data(), mean.data() + d);
  Eigen::MatrixXd basis(d, keep);
  for (int c = 0; c < keep; ++c) {
    const auto j = evals.size() - 1 - c;
    basis.col(c) = dirs.col(j);
    model.explained_variance.push_back(evals[j] / static_cast<double>(n - 1));
  }
  // Two Gram-Schmidt passes restore orthonormality lost to rounding.
  for (int pass = 0; pass < 2; ++pass) {
    for (int c = 0; c < keep; ++c) {
      for (int p = 0; p < c; ++p) basis.col(c) -= basis.col(p).dot(basis.col(c)) * basis.col(p);
      basis.col(c).normalize();
    }
  }
  model.basis.resize(static_cast<std::size_t>(keep) * d);
  for (int c = 0; c < keep; ++c) {
    Eigen::Index arg;
    basis.col(c).cwiseAbs().maxCoeff(&arg);
    const double sign = basis(arg, c) < 0 ? -1.0 : 1.0;
    for (Eigen::Index i = 0; i < d; ++i) model.basis[static_cast<std::size_t>(c) * d + i] = sign * basis(i, c);
  }
  return model;
}

std::vector<double> pca_project(std::span<const double> v, const PcaModel& model) {
  if (static_cast<int>(v.size()) != model.dims) throw DimensionError("PCA input dimension mismatch");
  const int k = model.components();
  std::vector<double> out(k, 0.0);
  for (int c = 0; c < k; ++c) {
    const double* row = &model.basis[static_cast<std::size_t>(c) * model.dims];
    double s = 0;
    for (int i = 0; i < model.dims; ++i) s += row[i] * (v[i] - model.mean[i]);
    out[c] = s;
  }
  return out;
}

std::vector<double> pca_reconstruct(std::span<const double> reduced, const PcaModel& model) {
  if (static_cast<int>(reduced.size()) > model.components()) throw DimensionError("too many PCA coefficients");
  std::vector<double> out(model.mean);
  for (std::size_t c = 0; c < reduced.size(); ++c) {
    const double* row = &model.basis[c * model.dims];
    for (int i = 0; i < model.dims; ++i) out[i] += reduced[c] * row[i];
  }
  return out;
}

std::string PcaModel::serialize() const {
  ByteWriter w;
  w.magic(kPcaMagic);
  w.u32(static_cast<std::uint32_t>(dims));
  w.u32(static_cast<std::uint32_t>(requested));
  w.u32(static_cast<std::uint32_t>(components()));
  w.f64s(mean);
  w.f64s(basis);
  w.f64s(explained_variance);
  return w.take();
}

PcaModel PcaModel::deserialize(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect_magic(kPcaMagic);
  PcaModel m;
  m.dims = static_cast<int>(r.u32());
  m.requested = static_cast<int>(r.u32());
  const auto k = r.u32();
  m.mean = r.f64s();
  m.basis = r.f64s();
  m.explained_variance = r.f64s();
  if (m.mean.size() != static_cast<std::size_t>(m.dims) || m.basis.size() != static_cast<std::size_t>(k) * m.dims ||
      m.explained_variance.size() != k) {
    throw FormatError("PCA model shape mismatch");
  }
  return m;
}

int spmt_raw_length(int n_cb, int levels) {
  return 3 * static_cast<int>(pyramid_regions(levels).size()) * n_cb;
}

void SpmtModel::validate() const {
  const int n_cb = codebook.size();
  if (genuine.face.n_cb != n_cb || attack.face.n_cb != n_cb) {
    throw ModelCompatibilityError("class-specific faces were built with a different codebook size");
  }
  if (fisher.height != kFaceHeight || fisher.width != kFaceWidth || genuine.face.height != kFaceHeight ||
      genuine.face.width != kFaceWidth || attack.face.height != kFaceHeight || attack.face.width != kFaceWidth) {
    throw ModelCompatibilityError("SPMT model planes are not 120x100");
  }
  if (pca && pca->dims != spmt_raw_length(n_cb, levels)) {
    throw ModelCompatibilityError("PCA model dimension does not match the SPMT layout");
  }
}

SpmtVector extract_spmt(const BovwFace& bovw, const SpmtModel& model) {
  model.validate();
  if (bovw.n_cb != model.codebook.size()) throw ModelCompatibilityError("BOVW face codebook size differs");
  const auto regions = pyramid_regions(model.levels, bovw.height, bovw.width);
  SpmtVector out;
  out.raw.reserve(static_cast<std::size_t>(spmt_raw_length(bovw.n_cb, model.levels)));
  for (const auto& r : regions) {
    auto h = weighted_bovw_histogram(bovw, model.fisher, r);
    l1_normalise(h);
    out.raw.insert(out.raw.end(), h.begin(), h.end());
  }
  for (const auto* csf : {&model.genuine, &model.attack}) {
    for (const auto& r : regions) {
      auto m = matching_degree(bovw, *csf, model.fisher, r);
      out.raw.insert(out.raw.end(), m.begin(), m.end());
    }
  }
  if (model.pca) out.reduced = pca_project(out.raw, *model.pca);
  return out;
}

SpmtVector extract_spmt(const GrayImage& face, const SpmtModel& model, const BovwEncoder& encoder) {
  const GrayImage plane =
      (face.height == kFaceHeight && face.width == kFaceWidth) ? face : to_face_plane(face);
  return extract_spmt(encoder.encode(mslbp_face(plane)), model);
}

SpmtVector extract_spmt(const GrayImage& face, const SpmtModel& model) {
  return extract_spmt(face, model, BovwEncoder(model.codebook));
}

SpmtVector extract_spmt(const GrayImage& face, const Codebook& cb, const FisherFace& fisher,
                        const ClassSpecificFace& csf_g, const ClassSpecificFace& csf_f, const PcaModel* pca,
                        int levels) {
  SpmtModel model{cb, fisher, csf_g, csf_f, levels, pca ? std::optional<PcaModel>(*pca) : std::nullopt};
  return extract_spmt(face, model);
}

}  // namespace facepad
