#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace facepad {

inline constexpr int kLandmarkCount = 68;

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 identity3();
Mat3 matmul(const Mat3& a, const Mat3& b);
Mat3 transpose(const Mat3& m);
Vec3 matvec(const Mat3& m, const Vec3& v);
double det(const Mat3& m);

// Pinhole intrinsics.
struct Intrinsics {
  double fx = 500, fy = 500;  // pixels
  double cx = 320, cy = 240;  // pixels

  Mat3 matrix() const { return {{{fx, 0, cx}, {0, fy, cy}, {0, 0, 1}}}; }
};

// Stereo rig. (rotation, translation) map right-camera coordinates into the
// left camera frame; translation is in world units (e.g. cm).
struct CameraCalib {
  Intrinsics left;
  Intrinsics right;
  Mat3 rotation = identity3();
  Vec3 translation{-12, 0, 0};
  std::string units = "cm";

  // Checks R orthonormal with det +1 and positive focal lengths.
  void validate() const;
};

// Rectified, undistorted pixel coordinate.
struct Pixel {
  double u = 0;
  double v = 0;
};

struct LandmarkPair {
  std::string id;
  std::vector<Pixel> left;   // 68 entries
  std::vector<Pixel> right;  // 68 entries
};

// (x, y) in right-image pixels, d relative depth in world units.
struct AbstractLandmark {
  double x = 0;
  double y = 0;
  double d = 0;
};

struct TemplateFace {
  std::vector<AbstractLandmark> landmarks;

  std::string serialize() const;
  static TemplateFace deserialize(std::string_view bytes);
};

// Depth along the right camera's optical axis from one landmark seen in both
// images. Throws DegenerateGeometryError when the two viewing rays are
// (numerically) parallel.
double landmark_depth(const Pixel& left, const Pixel& right, const CameraCalib& calib);

// Right-image coordinates with depth minus the face-mean depth.
std::vector<AbstractLandmark> abstract_landmarks(const LandmarkPair& pair, const CameraCalib& calib);

// Landmark-wise mean of the abstract landmarks of every capture.
TemplateFace build_template(std::span<const LandmarkPair> pairs, const CameraCalib& calib);

struct Similarity {
  double scale = 1;
  Mat3 rotation = identity3();
  Vec3 translation{0, 0, 0};

  Vec3 operator()(const Vec3& p) const;
};

// Closed-form weighted absolute orientation. `source` and `target` hold the
// weight-multiplied points w_j p_j and w_j T_j; `mean_weight` divides the
// recovered translation back out. Rotation comes from the dominant
// eigenvector of the 4x4 quaternion matrix.
Similarity horn_solve(std::span<const Vec3> source, std::span<const Vec3> target, double mean_weight = 1.0);

// Cyclic Jacobi eigen-decomposition of a symmetric matrix stored row-major.
// Returns eigenvalues; eigenvectors are written column-wise into `vectors`.
std::vector<double> jacobi_eigen(std::vector<double> a, int n, std::vector<double>& vectors, double tol = 1e-12);

struct RegistrationOptions {
  int n_max = 20;
  int n_min = 30;
  // Hard-example weights for the next pool; false keeps unit weights.
  bool reweight = true;
};

struct RegistrationResult {
  std::vector<double> depths;              // 68 transformed relative depths (the TFBD vector)
  std::vector<AbstractLandmark> landmarks; // final transformed landmarks
  double mean_error = 0;                   // mean squared distance to the template, last round
  double mean_normalized_error = 0;        // mean of the normalised, clamped errors, last round
  std::vector<double> round_errors;        // mean_error after each round
};

RegistrationResult register_to_template(std::span<const AbstractLandmark> landmarks, const TemplateFace& tmpl,
                                        const RegistrationOptions& options = {});

// Convenience: abstract landmarks + registration.
RegistrationResult extract_tfbd(const LandmarkPair& pair, const CameraCalib& calib, const TemplateFace& tmpl,
                                const RegistrationOptions& options = {});

}  // namespace facepad
