#include "facepad/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "facepad/errors.hpp"
#include "facepad/random.hpp"

namespace facepad {

namespace {

constexpr int kBaseWaves = 48;
constexpr double kBaseStd = 30.0;
constexpr double kPi = std::numbers::pi;

void ellipse(std::vector<Vec3>& out, double cx, double cy, double rx, double ry, int n, double start) {
  for (int i = 0; i < n; ++i) {
    const double t = start + 2 * kPi * i / n;
    out.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t), 0});
  }
}

}  // namespace

GrayImage gen_texture_image(const TextureRecipe& recipe, int height, int width) {
  if (!(recipe.cutoff > 0 && recipe.cutoff <= 0.5)) throw PreconditionError("cutoff must lie in (0, 0.5]");
  if (recipe.grain < 0) throw PreconditionError("grain amplitude must be non-negative");
  Rng rng(recipe.seed);
  struct Wave {
    double fx, fy, phase;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < kBaseWaves; ++k) {
    // Uniform over the disc of radius `cutoff` in frequency space.
    const double r = recipe.cutoff * std::sqrt(uniform01(rng));
    const double a = uniform(rng, 0, 2 * kPi);
    waves.push_back({r * std::cos(a), r * std::sin(a), uniform(rng, 0, 2 * kPi)});
  }
  const double amp = kBaseStd * std::sqrt(2.0 / kBaseWaves);
  GrayImage img(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double v = 128;
      for (const auto& w : waves) v += amp * std::cos(2 * kPi * (w.fx * x + w.fy * y) + w.phase);
      if (recipe.class_tag == FaceClass::Genuine) v += recipe.grain * gaussian(rng);
      img.at(y, x) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  }
  return img;
}

std::vector<LabeledImage> gen_texture_dataset(int n_per_class, double cutoff, double grain, std::uint64_t seed) {
  if (n_per_class < 1) throw PreconditionError("need at least one image per class");
  Rng rng(seed);
  std::vector<LabeledImage> out;
  for (FaceClass cls : {FaceClass::Genuine, FaceClass::Attack}) {
    for (int i = 0; i < n_per_class; ++i) {
      LabeledImage li;
      li.label = cls;
      li.id = std::string(cls == FaceClass::Genuine ? "genuine_" : "attack_") + std::to_string(i);
      if (cls == FaceClass::Attack) li.attack_type = i % 2 == 0 ? "print" : "replay";
      li.image = gen_texture_image({cls, cutoff, grain, rng()});
      out.push_back(std::move(li));
    }
  }
  return out;
}

std::vector<Vec3> canonical_face_sites() {
  std::vector<Vec3> s;
  for (int i = 0; i <= 16; ++i) {  // jaw, temple to temple through the chin
    const double t = kPi * i / 16;
    s.push_back({-6.8 * std::cos(t), -0.5 + 7.5 * std::sin(t), 0});
  }
  for (int i = 0; i < 5; ++i) {  // brows
    const double x = -5.5 + 1.05 * i;
    s.push_back({x, -3.4 + 0.05 * (x + 3.4) * (x + 3.4), 0});
  }
  for (int i = 0; i < 5; ++i) {
    const double x = 1.3 + 1.05 * i;
    s.push_back({x, -3.4 + 0.05 * (x - 3.4) * (x - 3.4), 0});
  }
  for (int i = 0; i < 4; ++i) s.push_back({0, -2.2 + 1.0 * i, 0});      // nose bridge
  for (int i = 0; i < 5; ++i) s.push_back({-1.4 + 0.7 * i, 1.6, 0});    // nostrils
  ellipse(s, -3.0, -1.8, 1.3, 0.5, 6, kPi);                             // eyes
  ellipse(s, 3.0, -1.8, 1.3, 0.5, 6, kPi);
  ellipse(s, 0, 4.2, 2.6, 1.1, 12, kPi);                                // mouth
  ellipse(s, 0, 4.2, 1.6, 0.5, 8, kPi);
  return s;
}

double relief_height(double x, double y, double amplitude) {
  const double u = x / 7.5;
  const double v = (y - 1.0) / 9.0;
  return amplitude * std::sqrt(std::max(0.0, 1.0 - u * u - v * v));
}

CameraCalib default_calib() { return CameraCalib{}; }

Mat3 rotation_from_euler(double yaw, double pitch, double roll) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cr = std::cos(roll), sr = std::sin(roll);
  const Mat3 ry{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
  const Mat3 rx{{{1, 0, 0}, {0, cp, -sp}, {0, sp, cp}}};
  const Mat3 rz{{{cr, -sr, 0}, {sr, cr, 0}, {0, 0, 1}}};
  return matmul(rz, matmul(rx, ry));
}

StereoSample gen_stereo_scene(const StereoScene& scene) {
  scene.calib.validate();
  if (!(scene.scale > 0)) throw PreconditionError("scene scale must be positive");
  Rng rng(scene.seed);
  StereoSample out;
  out.pair.id = "scene_" + std::to_string(scene.seed);
  const auto sites = canonical_face_sites();
  for (std::size_t j = 0; j < sites.size(); ++j) {
    Vec3 local = sites[j];
    // The relief points towards the camera (negative z).
    if (scene.surface == SurfaceKind::Curved) local[2] = -relief_height(local[0], local[1], scene.relief);
    const Vec3 rp = matvec(scene.rotation, local);
    const Vec3 world{scene.scale * rp[0] + scene.translation[0], scene.scale * rp[1] + scene.translation[1],
                     scene.scale * rp[2] + scene.translation[2]};
    const Vec3 lw = matvec(scene.calib.rotation, world);
    const Vec3 lp{lw[0] + scene.calib.translation[0], lw[1] + scene.calib.translation[1],
                  lw[2] + scene.calib.translation[2]};
    if (!(world[2] > 0 && lp[2] > 0)) throw VisibilityError("landmark " + std::to_string(j) + " behind a camera");
    Pixel r{scene.calib.right.fx * world[0] / world[2] + scene.calib.right.cx,
            scene.calib.right.fy * world[1] / world[2] + scene.calib.right.cy};
    Pixel l{scene.calib.left.fx * lp[0] / lp[2] + scene.calib.left.cx,
            scene.calib.left.fy * lp[1] / lp[2] + scene.calib.left.cy};
    if (scene.noise_px > 0) {
      r.u += scene.noise_px * gaussian(rng);
      r.v += scene.noise_px * gaussian(rng);
      l.u += scene.noise_px * gaussian(rng);
      l.v += scene.noise_px * gaussian(rng);
    }
    for (const auto& p : {r, l}) {
      if (p.u < 0 || p.v < 0 || p.u >= scene.image_width || p.v >= scene.image_height) {
        throw VisibilityError("landmark " + std::to_string(j) + " projects outside the image");
      }
    }
    out.pair.right.push_back(r);
    out.pair.left.push_back(l);
    out.world.push_back(world);
  }
  return out;
}

std::vector<LandmarkPair> gen_template_captures(int count, const CameraCalib& calib, std::uint64_t seed) {
  static constexpr double kDistances[] = {50, 60, 70, 80};
  std::vector<LandmarkPair> out;
  for (int i = 0; i < count; ++i) {
    StereoScene sc;
    sc.calib = calib;
    sc.translation = {0, 0, kDistances[i % 4]};
    sc.seed = seed + static_cast<std::uint64_t>(i);
    auto s = gen_stereo_scene(sc);
    s.pair.id = "template_" + std::to_string(i);
    out.push_back(std::move(s.pair));
  }
  return out;
}

}  // namespace facepad
