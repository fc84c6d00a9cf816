#include "facepad/tfbd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "facepad/errors.hpp"
#include "facepad/serialize.hpp"

namespace facepad {

namespace {

constexpr std::string_view kTemplateMagic = "FPTMPL01";
// Relative to the size of the terms that cancel in the denominator.
constexpr double kDepthDenominatorFloor = 1e-10;
constexpr double kErrorClampLow = 0.01;
constexpr double kErrorClampHigh = 0.99;
constexpr double kMinPoolWeight = 0.1;

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Vec3 to_vec(const AbstractLandmark& l) { return {l.x, l.y, l.d}; }

Vec3 centroid(std::span<const Vec3> pts) {
  Vec3 c{0, 0, 0};
  for (const auto& p : pts)
    for (int i = 0; i < 3; ++i) c[i] += p[i];
  for (auto& v : c) v /= static_cast<double>(pts.size());
  return c;
}

Mat3 quaternion_to_rotation(double q0, double qx, double qy, double qz) {
  return {{{q0 * q0 + qx * qx - qy * qy - qz * qz, 2 * (qx * qy - q0 * qz), 2 * (qx * qz + q0 * qy)},
           {2 * (qy * qx + q0 * qz), q0 * q0 - qx * qx + qy * qy - qz * qz, 2 * (qy * qz - q0 * qx)},
           {2 * (qz * qx - q0 * qy), 2 * (qz * qy + q0 * qx), q0 * q0 - qx * qx - qy * qy + qz * qz}}};
}

}  // namespace

Mat3 identity3() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat3 transpose(const Mat3& m) {
  Mat3 t{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[i][j] = m[j][i];
  return t;
}

Vec3 matvec(const Mat3& m, const Vec3& v) {
  return {dot(m[0], v), dot(m[1], v), dot(m[2], v)};
}

double det(const Mat3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

void CameraCalib::validate() const {
  if (!(left.fx > 0 && left.fy > 0 && right.fx > 0 && right.fy > 0)) {
    throw ConfigError("focal lengths must be positive");
  }
  const Mat3 rtr = matmul(transpose(rotation), rotation);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (std::abs(rtr[i][j] - (i == j ? 1.0 : 0.0)) > 1e-9) throw ConfigError("stereo rotation is not orthonormal");
  if (std::abs(det(rotation) - 1.0) > 1e-9) throw ConfigError("stereo rotation must have determinant +1");
}

double landmark_depth(const Pixel& left, const Pixel& right, const CameraCalib& calib) {
  // M = K_l [R | t]: right-camera coordinates to left-image pixels.
  const Mat3 kl = calib.left.matrix();
  double m[3][4];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      m[i][j] = 0;
      for (int k = 0; k < 3; ++k) m[i][j] += kl[i][k] * calib.rotation[k][j];
    }
    m[i][3] = 0;
    for (int k = 0; k < 3; ++k) m[i][3] += kl[i][k] * calib.translation[k];
  }
  double b1j[3], b2j[3];
  for (int j = 0; j < 3; ++j) {
    b1j[j] = m[0][j] - m[2][j] * left.u;
    b2j[j] = m[1][j] - m[2][j] * left.v;
  }
  const double b1 = m[2][3] * left.u - m[0][3];
  const double b2 = m[2][3] * left.v - m[1][3];
  const double ray_x = (right.u - calib.right.cx) / calib.right.fx;
  const double num = b1j[1] * b2 - b2j[1] * b1;
  const double t1 = ray_x * (b1j[1] * b2j[0] - b1j[0] * b2j[1]);
  const double t2 = b1j[1] * b2j[2] - b2j[1] * b1j[2];
  const double den = t1 + t2;
  if (!(std::abs(den) > kDepthDenominatorFloor * (std::abs(t1) + std::abs(t2)))) {
    throw DegenerateGeometryError("landmark depth is undefined: viewing rays are parallel");
  }
  return num / den;
}

std::vector<AbstractLandmark> abstract_landmarks(const LandmarkPair& pair, const CameraCalib& calib) {
  if (pair.left.size() != pair.right.size() || pair.left.empty()) {
    throw DimensionError("landmark pair sides differ in length");
  }
  std::vector<AbstractLandmark> out(pair.left.size());
  double mean = 0;
  for (std::size_t j = 0; j < out.size(); ++j) {
    try {
      out[j].d = landmark_depth(pair.left[j], pair.right[j], calib);
    } catch (const DegenerateGeometryError& e) {
      throw DegenerateGeometryError("landmark " + std::to_string(j) + ": " + e.what());
    }
    out[j].x = pair.right[j].u;
    out[j].y = pair.right[j].v;
    mean += out[j].d;
  }
  mean /= static_cast<double>(out.size());
  for (auto& l : out) l.d -= mean;
  return out;
}

TemplateFace build_template(std::span<const LandmarkPair> pairs, const CameraCalib& calib) {
  if (pairs.empty()) throw InsufficientDataError("template needs at least one capture");
  TemplateFace t;
  std::vector<std::string> failures;
  std::size_t used = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::vector<AbstractLandmark> lm;
    try {
      lm = abstract_landmarks(pairs[i], calib);
    } catch (const Error& e) {
      failures.push_back("capture " + std::to_string(i) + " (" + pairs[i].id + "): " + e.what());
      continue;
    }
    if (t.landmarks.empty()) t.landmarks.assign(lm.size(), {});
    if (lm.size() != t.landmarks.size()) {
      failures.push_back("capture " + std::to_string(i) + ": landmark count differs");
      continue;
    }
    for (std::size_t j = 0; j < lm.size(); ++j) {
      t.landmarks[j].x += lm[j].x;
      t.landmarks[j].y += lm[j].y;
      t.landmarks[j].d += lm[j].d;
    }
    ++used;
  }
  if (!failures.empty()) {
    std::string msg = "template construction failed for:";
    for (const auto& f : failures) msg += "\n  " + f;
    throw DegenerateGeometryError(msg);
  }
  for (auto& l : t.landmarks) {
    l.x /= used;
    l.y /= used;
    l.d /= used;
  }
  return t;
}

std::string TemplateFace::serialize() const {
  ByteWriter w;
  w.magic(kTemplateMagic);
  w.u32(static_cast<std::uint32_t>(landmarks.size()));
  for (const auto& l : landmarks) {
    w.f64(l.x);
    w.f64(l.y);
    w.f64(l.d);
  }
  return w.take();
}

TemplateFace TemplateFace::deserialize(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect_magic(kTemplateMagic);
  TemplateFace t;
  t.landmarks.resize(r.u32());
  for (auto& l : t.landmarks) {
    l.x = r.f64();
    l.y = r.f64();
    l.d = r.f64();
  }
  return t;
}

Vec3 Similarity::operator()(const Vec3& p) const {
  const Vec3 rp = matvec(rotation, p);
  return {scale * rp[0] + translation[0], scale * rp[1] + translation[1], scale * rp[2] + translation[2]};
}

std::vector<double> jacobi_eigen(std::vector<double> a, int n, std::vector<double>& v, double tol) {
  v.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[i * n + i] = 1.0;
  auto A = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * n + j]; };
  auto V = [&](int i, int j) -> double& { return v[static_cast<std::size_t>(i) * n + j]; };
  double total = 0;
  for (double x : a) total += x * x;
  total = std::sqrt(total);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += 2 * A(i, j) * A(i, j);
    if (std::sqrt(off) <= tol * total || off == 0) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (A(p, q) == 0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2 * A(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<double> evals(n);
  for (int i = 0; i < n; ++i) evals[i] = A(i, i);
  return evals;
}

Similarity horn_solve(std::span<const Vec3> source, std::span<const Vec3> target, double mean_weight) {
  if (source.size() != target.size()) throw DimensionError("registration point sets differ in size");
  if (source.size() < 3) throw DegenerateGeometryError("registration needs at least three points");
  if (!(mean_weight > 0)) throw PreconditionError("mean weight must be positive");

  const Vec3 ps = centroid(source);
  const Vec3 pt = centroid(target);

  // Source scatter must have rank >= 2 (non-collinear points).
  std::vector<double> scatter(9, 0.0);
  double s_xy[3][3] = {};
  double src_norm = 0;
  for (std::size_t j = 0; j < source.size(); ++j) {
    const Vec3 a = sub(source[j], ps);
    const Vec3 b = sub(target[j], pt);
    src_norm += dot(a, a);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        scatter[r * 3 + c] += a[r] * a[c];
        s_xy[r][c] += a[r] * b[c];
      }
    }
  }
  std::vector<double> unused;
  auto sev = jacobi_eigen(scatter, 3, unused);
  std::sort(sev.begin(), sev.end(), std::greater<>());
  if (!(sev[0] > 0) || sev[1] <= 1e-12 * sev[0]) {
    throw DegenerateGeometryError("registration points are coincident or collinear");
  }

  const double sxx = s_xy[0][0], sxy = s_xy[0][1], sxz = s_xy[0][2];
  const double syx = s_xy[1][0], syy = s_xy[1][1], syz = s_xy[1][2];
  const double szx = s_xy[2][0], szy = s_xy[2][1], szz = s_xy[2][2];
  const std::vector<double> n_mat = {
      sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,         //
      syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,         //
      szx - sxz,       sxy + syx,        -sxx + syy - szz, syz + szy,         //
      sxy - syx,       szx + sxz,        syz + szy,        -sxx - syy + szz};
  std::vector<double> vecs;
  const auto evals = jacobi_eigen(n_mat, 4, vecs);
  const int top = static_cast<int>(std::max_element(evals.begin(), evals.end()) - evals.begin());
  double q[4];
  double qn = 0;
  for (int i = 0; i < 4; ++i) {
    q[i] = vecs[i * 4 + top];
    qn += q[i] * q[i];
  }
  qn = std::sqrt(qn);
  int big = 0;
  for (int i = 1; i < 4; ++i)
    if (std::abs(q[i]) > std::abs(q[big])) big = i;
  const double sign = q[big] < 0 ? -1.0 : 1.0;
  for (auto& c : q) c *= sign / qn;

  Similarity sim;
  sim.rotation = quaternion_to_rotation(q[0], q[1], q[2], q[3]);
  double num = 0;
  for (std::size_t j = 0; j < source.size(); ++j) {
    num += dot(sub(target[j], pt), matvec(sim.rotation, sub(source[j], ps)));
  }
  sim.scale = num / src_norm;
  const Vec3 rps = matvec(sim.rotation, ps);
  for (int i = 0; i < 3; ++i) sim.translation[i] = (pt[i] - sim.scale * rps[i]) / mean_weight;
  return sim;
}

RegistrationResult register_to_template(std::span<const AbstractLandmark> landmarks, const TemplateFace& tmpl,
                                        const RegistrationOptions& options) {
  const std::size_t n = landmarks.size();
  if (n != tmpl.landmarks.size()) throw DimensionError("landmark count differs from the template");
  if (options.n_max < 1) throw ConfigError("n_max must be at least 1");
  if (options.n_min < 3 || static_cast<std::size_t>(options.n_min) > n) {
    throw ConfigError("n_min must lie in [3, landmark count]");
  }

  std::vector<Vec3> pts(n), tgt(n);
  for (std::size_t j = 0; j < n; ++j) {
    pts[j] = to_vec(landmarks[j]);
    tgt[j] = to_vec(tmpl.landmarks[j]);
  }
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<double> weights(n, 1.0);

  RegistrationResult result;
  std::vector<double> err(n), norm_err(n);
  for (int round = 1; round <= options.n_max; ++round) {
    std::vector<Vec3> src_w, tgt_w;
    double w_sum = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const double w = weights[i];
      const auto& p = pts[pool[i]];
      const auto& t = tgt[pool[i]];
      src_w.push_back({w * p[0], w * p[1], w * p[2]});
      tgt_w.push_back({w * t[0], w * t[1], w * t[2]});
      w_sum += w;
    }
    Similarity sim;
    try {
      sim = horn_solve(src_w, tgt_w, w_sum / static_cast<double>(pool.size()));
    } catch (const DegenerateGeometryError& e) {
      throw DegenerateGeometryError("registration round " + std::to_string(round) + ": " + e.what());
    }
    for (auto& p : pts) p = sim(p);

    double max_err = 0, sum_err = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const Vec3 diff = sub(tgt[j], pts[j]);
      err[j] = dot(diff, diff);
      max_err = std::max(max_err, err[j]);
      sum_err += err[j];
    }
    double sum_norm = 0;
    for (std::size_t j = 0; j < n; ++j) {
      norm_err[j] = std::clamp(err[j] / (max_err + 1e-12), kErrorClampLow, kErrorClampHigh);
      sum_norm += norm_err[j];
    }
    result.mean_error = sum_err / static_cast<double>(n);
    result.mean_normalized_error = sum_norm / static_cast<double>(n);
    result.round_errors.push_back(result.mean_error);

    // Next pool: the n_min landmarks with the smallest errors.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return err[a] < err[b]; });
    pool.assign(order.begin(), order.begin() + options.n_min);
    weights.assign(pool.size(), 1.0);
    if (options.reweight) {
      double w_min = 0;
      for (std::size_t i = 0; i < pool.size(); ++i) {
        const double e = norm_err[pool[i]];
        weights[i] = std::log(e / (1 - e));
        w_min = i == 0 ? weights[i] : std::min(w_min, weights[i]);
      }
      double w_mean = 0;
      for (auto& w : weights) {
        w += kMinPoolWeight - w_min;
        w_mean += w;
      }
      w_mean /= static_cast<double>(weights.size());
      for (auto& w : weights) w /= w_mean;
    }
  }

  result.landmarks.resize(n);
  result.depths.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    result.landmarks[j] = {pts[j][0], pts[j][1], pts[j][2]};
    result.depths[j] = pts[j][2];
  }
  return result;
}

RegistrationResult extract_tfbd(const LandmarkPair& pair, const CameraCalib& calib, const TemplateFace& tmpl,
                                const RegistrationOptions& options) {
  const auto lm = abstract_landmarks(pair, calib);
  return register_to_template(lm, tmpl, options);
}

}  // namespace facepad
