#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facepad/image.hpp"
#include "facepad/spmt.hpp"
#include "facepad/tfbd.hpp"

namespace facepad {

// Band-limited base noise, plus white grain for the genuine class. Attack
// images omit the grain, standing in for the high-frequency loss of a
// recaptured face.
struct TextureRecipe {
  FaceClass class_tag = FaceClass::Genuine;
  double cutoff = 0.08;  // cycles per pixel, (0, 0.5]
  double grain = 12.0;   // grain standard deviation in grey levels
  std::uint64_t seed = 0;
};

GrayImage gen_texture_image(const TextureRecipe& recipe, int height = kFaceHeight, int width = kFaceWidth);

struct LabeledImage {
  std::string id;
  FaceClass label = FaceClass::Genuine;
  std::string attack_type;
  GrayImage image;
};

// n_per_class genuine images followed by n_per_class attack images.
std::vector<LabeledImage> gen_texture_dataset(int n_per_class, double cutoff, double grain, std::uint64_t seed);

enum class SurfaceKind { Plane, Curved };

struct StereoScene {
  SurfaceKind surface = SurfaceKind::Curved;
  double relief = 3.0;      // world units
  double scale = 1.0;       // face size multiplier
  Mat3 rotation = identity3();
  Vec3 translation{0, 0, 60};  // face origin in the right-camera frame
  double noise_px = 0.0;
  CameraCalib calib;
  int image_width = 640;
  int image_height = 480;
  std::uint64_t seed = 0;
};

struct StereoSample {
  LandmarkPair pair;
  std::vector<Vec3> world;  // 68 points, right-camera frame
};

// 68 face-local sites (world units, y down) following the usual 68-point
// annotation layout, on the z = 0 plane.
std::vector<Vec3> canonical_face_sites();

// Ellipsoidal relief height at face-local (x, y).
double relief_height(double x, double y, double amplitude);

// Throws VisibilityError if a landmark falls outside either image.
StereoSample gen_stereo_scene(const StereoScene& scene);

CameraCalib default_calib();

Mat3 rotation_from_euler(double yaw, double pitch, double roll);

// Frontal zero-noise curved captures at the given distances, cycled to
// produce `count` pairs.
std::vector<LandmarkPair> gen_template_captures(int count, const CameraCalib& calib, std::uint64_t seed);

}  // namespace facepad
