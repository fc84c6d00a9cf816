#include "facepad/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "facepad/errors.hpp"
#include "facepad/random.hpp"
#include "facepad/serialize.hpp"

namespace facepad {

namespace {

constexpr std::string_view kSvmMagic = "FPSVMM01";
constexpr double kTau = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Standardiser {
  std::vector<double> mean, scale;

  static Standardiser fit(std::span<const std::vector<double>> x) {
    const std::size_t d = x.front().size();
    Standardiser s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (const auto& v : x)
      for (std::size_t k = 0; k < d; ++k) s.mean[k] += v[k];
    for (auto& m : s.mean) m /= static_cast<double>(x.size());
    for (const auto& v : x)
      for (std::size_t k = 0; k < d; ++k) s.scale[k] += (v[k] - s.mean[k]) * (v[k] - s.mean[k]);
    for (auto& sc : s.scale) {
      sc = std::sqrt(sc / static_cast<double>(x.size()));
      if (!(sc > 1e-12)) sc = 1.0;
    }
    return s;
  }

  std::vector<double> apply(std::span<const double> v) const {
    std::vector<double> out(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) out[k] = (v[k] - mean[k]) / scale[k];
    return out;
  }
};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double sqdist(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

double kernel(KernelType type, double gamma, std::span<const double> a, std::span<const double> b) {
  return type == KernelType::Linear ? dot(a, b) : std::exp(-gamma * sqdist(a, b));
}

struct SmoSolution {
  std::vector<double> alpha;
  double rho = 0;
};

// Dual C-SVC by SMO with second-order working-set selection.
// k is the n x n kernel matrix (row-major).
SmoSolution smo_solve(const std::vector<double>& k, std::span<const int> y, double c, double eps, long max_iter) {
  const std::size_t n = y.size();
  auto K = [&](std::size_t i, std::size_t j) { return k[i * n + j]; };
  auto Q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * K(i, j); };
  std::vector<double> alpha(n, 0.0), g(n, -1.0);
  auto upper = [&](std::size_t t) { return alpha[t] >= c; };
  auto lower = [&](std::size_t t) { return alpha[t] <= 0; };

  for (long iter = 0; iter < max_iter; ++iter) {
    double gmax = -kInf;
    std::ptrdiff_t i = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (!upper(t) && -g[t] >= gmax) {
          gmax = -g[t];
          i = static_cast<std::ptrdiff_t>(t);
        }
      } else if (!lower(t) && g[t] >= gmax) {
        gmax = g[t];
        i = static_cast<std::ptrdiff_t>(t);
      }
    }
    double gmax2 = -kInf, obj_min = kInf;
    std::ptrdiff_t j = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (lower(t)) continue;
        const double grad_diff = gmax + g[t];
        gmax2 = std::max(gmax2, g[t]);
        if (i >= 0 && grad_diff > 0) {
          double quad = K(i, i) + K(t, t) - 2.0 * y[i] * Q(i, t);
          if (quad <= 0) quad = kTau;
          const double obj = -(grad_diff * grad_diff) / quad;
          if (obj <= obj_min) {
            j = static_cast<std::ptrdiff_t>(t);
            obj_min = obj;
          }
        }
      } else {
        if (upper(t)) continue;
        const double grad_diff = gmax - g[t];
        gmax2 = std::max(gmax2, -g[t]);
        if (i >= 0 && grad_diff > 0) {
          double quad = K(i, i) + K(t, t) + 2.0 * y[i] * Q(i, t);
          if (quad <= 0) quad = kTau;
          const double obj = -(grad_diff * grad_diff) / quad;
          if (obj <= obj_min) {
            j = static_cast<std::ptrdiff_t>(t);
            obj_min = obj;
          }
        }
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < eps) break;

    const double ai_old = alpha[i], aj_old = alpha[j];
    if (y[i] != y[j]) {
      double quad = K(i, i) + K(j, j) + 2 * Q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (-g[i] - g[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = c - diff;
        }
      } else if (alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = c + diff;
      }
    } else {
      double quad = K(i, i) + K(j, j) - 2 * Q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (g[i] - g[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = sum - c;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > c) {
        if (alpha[j] > c) {
          alpha[j] = c;
          alpha[i] = sum - c;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - ai_old, daj = alpha[j] - aj_old;
    for (std::size_t t = 0; t < n; ++t) g[t] += Q(i, t) * dai + Q(j, t) * daj;
  }

  double ub = kInf, lb = -kInf, sum_free = 0;
  int n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * g[t];
    if (upper(t)) {
      if (y[t] == -1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (y[t] == 1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  SmoSolution sol;
  sol.rho = n_free > 0 ? sum_free / n_free : (ub + lb) / 2;
  sol.alpha = std::move(alpha);
  return sol;
}

void check_training_set(std::span<const std::vector<double>> x, std::span<const int> y) {
  if (x.size() != y.size()) throw DimensionError("feature and label counts differ");
  if (x.empty()) throw TrainingError("empty training set");
  bool pos = false, neg = false;
  for (int l : y) {
    if (l == 1) pos = true;
    else if (l == -1) neg = true;
    else throw TrainingError("labels must be +1 or -1");
  }
  if (!pos || !neg) throw TrainingError("training set must contain both classes");
  for (const auto& v : x) {
    if (v.size() != x.front().size()) throw DimensionError("feature vectors differ in length");
  }
}

std::vector<double> kernel_matrix(const std::vector<std::vector<double>>& z, KernelType type, double gamma) {
  const std::size_t n = z.size();
  std::vector<double> k(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) k[i * n + j] = k[j * n + i] = kernel(type, gamma, z[i], z[j]);
  }
  return k;
}

SvmModel fit_standardised(const std::vector<std::vector<double>>& z, std::span<const int> y,
                          const Standardiser& st, const SvmParams& p, double gamma) {
  const auto k = kernel_matrix(z, p.kernel, gamma);
  const auto sol = smo_solve(k, y, p.c, p.tol, p.max_iter);
  SvmModel m;
  m.kernel = p.kernel;
  m.gamma = gamma;
  m.c = p.c;
  m.feature_dim = static_cast<int>(z.front().size());
  m.mean = st.mean;
  m.scale = st.scale;
  m.bias = -sol.rho;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (sol.alpha[i] > 0) {
      m.support.push_back(z[i]);
      m.alpha.push_back(sol.alpha[i]);
      m.coef.push_back(sol.alpha[i] * y[i]);
      m.support_labels.push_back(y[i]);
    }
  }
  return m;
}

}  // namespace

SvmModel svm_train(std::span<const std::vector<double>> features, std::span<const int> labels,
                   const SvmParams& params) {
  check_training_set(features, labels);
  if (!(params.c > 0)) throw ConfigError("SVM penalty C must be positive");
  const auto st = Standardiser::fit(features);
  std::vector<std::vector<double>> z;
  z.reserve(features.size());
  for (const auto& v : features) z.push_back(st.apply(v));
  const double gamma = params.gamma > 0 ? params.gamma : 1.0 / static_cast<double>(features.front().size());
  return fit_standardised(z, labels, st, params, gamma);
}

double svm_score(const SvmModel& model, std::span<const double> x) {
  if (static_cast<int>(x.size()) != model.feature_dim) throw DimensionError("SVM input dimension mismatch");
  std::vector<double> z(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) z[k] = (x[k] - model.mean[k]) / model.scale[k];
  double s = model.bias;
  for (std::size_t i = 0; i < model.support.size(); ++i) {
    s += model.coef[i] * kernel(model.kernel, model.gamma, model.support[i], z);
  }
  return s;
}

CvChoice svm_cross_validate(std::span<const std::vector<double>> features, std::span<const int> labels,
                            const SvmGrid& grid, std::uint64_t seed, const SvmParams& base) {
  check_training_set(features, labels);
  if (grid.c_values.empty() || grid.gamma_factors.empty()) throw ConfigError("empty SVM grid");
  const std::size_t n = features.size();
  const double inv_d = 1.0 / static_cast<double>(features.front().size());

  const int folds = std::max(2, std::min<int>(grid.folds, static_cast<int>(n)));
  // Stratified fold assignment from a seeded shuffle of each class.
  std::vector<int> fold(n);
  Rng rng(seed);
  for (int cls : {1, -1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] == cls) idx.push_back(i);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
    for (std::size_t r = 0; r < idx.size(); ++r) fold[idx[r]] = static_cast<int>(r % folds);
  }

  // Standardise once on the whole set and precompute squared distances; the
  // fold models reuse them.
  const auto st = Standardiser::fit(features);
  std::vector<std::vector<double>> z;
  for (const auto& v : features) z.push_back(st.apply(v));
  std::vector<double> base_k(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      base_k[i * n + j] = base_k[j * n + i] =
          base.kernel == KernelType::Linear ? dot(z[i], z[j]) : sqdist(z[i], z[j]);

  CvChoice best{grid.c_values.front(), grid.gamma_factors.front() * inv_d, -1};
  const auto gammas = base.kernel == KernelType::Linear ? std::vector<double>{1.0} : grid.gamma_factors;
  for (double c : grid.c_values) {
    for (double gf : gammas) {
      const double gamma = gf * inv_d;
      std::size_t correct = 0;
      for (int f = 0; f < folds; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? test : train).push_back(i);
        std::vector<int> ytr;
        for (auto i : train) ytr.push_back(labels[i]);
        const bool both = std::count(ytr.begin(), ytr.end(), 1) > 0 && std::count(ytr.begin(), ytr.end(), -1) > 0;
        if (test.empty() || !both) continue;
        const std::size_t m = train.size();
        std::vector<double> k(m * m);
        auto kv = [&](std::size_t a, std::size_t b) {
          const double v = base_k[a * n + b];
          return base.kernel == KernelType::Linear ? v : std::exp(-gamma * v);
        };
        for (std::size_t a = 0; a < m; ++a)
          for (std::size_t b = 0; b < m; ++b) k[a * m + b] = kv(train[a], train[b]);
        const auto sol = smo_solve(k, ytr, c, base.tol, base.max_iter);
        for (auto t : test) {
          double s = -sol.rho;
          for (std::size_t a = 0; a < m; ++a) {
            if (sol.alpha[a] > 0) s += sol.alpha[a] * ytr[a] * kv(train[a], t);
          }
          if ((s >= 0 ? 1 : -1) == labels[t]) ++correct;
        }
      }
      const double acc = static_cast<double>(correct) / static_cast<double>(n);
      if (acc > best.accuracy) best = {c, gamma, acc};
    }
  }
  return best;
}

SvmModel svm_train_cv(std::span<const std::vector<double>> features, std::span<const int> labels,
                      const SvmGrid& grid, std::uint64_t seed, const SvmParams& base) {
  const auto choice = svm_cross_validate(features, labels, grid, seed, base);
  SvmParams p = base;
  p.c = choice.c;
  p.gamma = choice.gamma;
  return svm_train(features, labels, p);
}

std::string SvmModel::serialize() const {
  ByteWriter w;
  w.magic(kSvmMagic);
  w.u8(kernel == KernelType::Linear ? 0 : 1);
  w.f64(gamma);
  w.f64(c);
  w.u32(static_cast<std::uint32_t>(feature_dim));
  w.f64s(mean);
  w.f64s(scale);
  w.f64(bias);
  w.u64(support.size());
  for (std::size_t i = 0; i < support.size(); ++i) {
    w.f64(alpha[i]);
    w.f64(coef[i]);
    w.i64(support_labels[i]);
    w.f64s(support[i]);
  }
  return w.take();
}

SvmModel SvmModel::deserialize(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect_magic(kSvmMagic);
  SvmModel m;
  m.kernel = r.u8() == 0 ? KernelType::Linear : KernelType::Rbf;
  m.gamma = r.f64();
  m.c = r.f64();
  m.feature_dim = static_cast<int>(r.u32());
  m.mean = r.f64s();
  m.scale = r.f64s();
  m.bias = r.f64();
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    m.alpha.push_back(r.f64());
    m.coef.push_back(r.f64());
    m.support_labels.push_back(static_cast<int>(r.i64()));
    m.support.push_back(r.f64s());
    if (static_cast<int>(m.support.back().size()) != m.feature_dim) throw FormatError("support vector size mismatch");
  }
  if (static_cast<int>(m.mean.size()) != m.feature_dim || static_cast<int>(m.scale.size()) != m.feature_dim) {
    throw FormatError("SVM normalisation size mismatch");
  }
  return m;
}

double logistic(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double fuse_scores(double s_spmt, double s_tfbd, const FusionRatio& ratio) {
  if (ratio.spmt < 0 || ratio.tfbd < 0 || !(ratio.spmt + ratio.tfbd > 0)) {
    throw ConfigError("fusion ratio must be non-negative with a positive sum");
  }
  const double total = ratio.spmt + ratio.tfbd;
  return (ratio.spmt / total) * logistic(s_spmt) + (ratio.tfbd / total) * logistic(s_tfbd);
}

}  // namespace facepad
