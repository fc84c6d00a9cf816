#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "facepad/codebook.hpp"
#include "facepad/fisherface.hpp"
#include "facepad/image.hpp"

namespace facepad {

enum class FaceClass { Genuine, Attack };

const char* to_string(FaceClass c);

struct PyramidRegion {
  int level = 0;
  int index = 0;
  PixelRect rect;
};

// Level 0 is the whole face, level 1 the face-aware 3x2 split with row
// heights {h/4, h/2, h/4}, levels >= 2 the classical 2^l x 2^l grid. Regions
// are ordered by level, then row-major.
std::vector<PyramidRegion> pyramid_regions(int levels, int height = kFaceHeight, int width = kFaceWidth);

// Fisher-weighted codeword occurrences over a region, divided by the region
// pixel count.
std::vector<double> weighted_bovw_histogram(const BovwFace& bovw, const FisherFace& fisher,
                                            const PyramidRegion& region);

struct ClassSpecificFace {
  FaceClass class_tag = FaceClass::Genuine;
  BovwFace face;

  std::string serialize() const;
  static ClassSpecificFace deserialize(std::string_view bytes);
};

// Per-pixel modal codeword across the class; ties go to the smaller index.
ClassSpecificFace class_specific_face(std::span<const BovwFace> training, FaceClass tag);

// Per-codeword similarity between the Fisher-weighted codeword mass of the
// face region and of the class-specific face region, L1-normalised. Use
// matching_degree_raw for the values before normalisation.
std::vector<double> matching_degree_raw(const BovwFace& bovw, const ClassSpecificFace& csf,
                                        const FisherFace& fisher, const PyramidRegion& region);
std::vector<double> matching_degree(const BovwFace& bovw, const ClassSpecificFace& csf,
                                    const FisherFace& fisher, const PyramidRegion& region);

struct PcaModel {
  std::vector<double> mean;
  int dims = 0;
  int requested = 0;  // component count asked for before clipping
  std::vector<double> basis;  // components x dims, row-major, orthonormal rows
  std::vector<double> explained_variance;

  int components() const { return dims ? static_cast<int>(basis.size() / dims) : 0; }

  std::string serialize() const;
  static PcaModel deserialize(std::string_view bytes);
};

// Principal directions by descending eigenvalue. k is clipped to
// min(k, n - 1, dims) and to the numerical rank of the centred data.
PcaModel pca_fit(std::span<const std::vector<double>> vectors, int k);
std::vector<double> pca_project(std::span<const double> v, const PcaModel& model);
std::vector<double> pca_reconstruct(std::span<const double> reduced, const PcaModel& model);

struct SpmtVector {
  std::vector<double> raw;
  std::optional<std::vector<double>> reduced;

  // Classifier input: the reduced vector when present.
  const std::vector<double>& features() const { return reduced ? *reduced : raw; }
};

inline constexpr int kDefaultPyramidLevels = 2;
inline constexpr int kDefaultPcaComponents = 1024;

// Everything extract_spmt needs, trained together.
struct SpmtModel {
  Codebook codebook;
  FisherFace fisher;
  ClassSpecificFace genuine;
  ClassSpecificFace attack;
  int levels = kDefaultPyramidLevels;
  std::optional<PcaModel> pca;

  // Throws ModelCompatibilityError if the parts disagree on N_cb or dims.
  void validate() const;
};

// Raw layout: [histograms | genuine matching | attack matching], each block
// holding one N_cb segment per pyramid region in region order.
SpmtVector extract_spmt(const BovwFace& bovw, const SpmtModel& model);
SpmtVector extract_spmt(const GrayImage& face, const SpmtModel& model);
// Same, reusing an encoder built from model.codebook.
SpmtVector extract_spmt(const GrayImage& face, const SpmtModel& model, const BovwEncoder& encoder);
SpmtVector extract_spmt(const GrayImage& face, const Codebook& cb, const FisherFace& fisher,
                        const ClassSpecificFace& csf_g, const ClassSpecificFace& csf_f,
                        const PcaModel* pca = nullptr, int levels = kDefaultPyramidLevels);

int spmt_raw_length(int n_cb, int levels = kDefaultPyramidLevels);

}  // namespace facepad
