#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace facepad {

enum class KernelType { Linear, Rbf };

struct SvmParams {
  KernelType kernel = KernelType::Rbf;
  double c = 1.0;
  double gamma = 0.0;  // <= 0 selects 1 / feature_dim
  double tol = 1e-3;   // KKT violation tolerance
  long max_iter = 10'000'000;
};

// Labels are +1 (genuine) and -1 (attack).
struct SvmModel {
  KernelType kernel = KernelType::Rbf;
  double gamma = 0;
  double c = 1;
  int feature_dim = 0;
  std::vector<double> mean;   // standardisation
  std::vector<double> scale;
  std::vector<std::vector<double>> support;  // standardised support vectors
  std::vector<double> coef;   // alpha_i * y_i
  std::vector<double> alpha;
  std::vector<int> support_labels;
  double bias = 0;            // decision = sum coef_i K(s_i, x) + bias

  std::string serialize() const;
  static SvmModel deserialize(std::string_view bytes);
};

SvmModel svm_train(std::span<const std::vector<double>> features, std::span<const int> labels,
                   const SvmParams& params = {});

// Signed decision value; positive means genuine.
double svm_score(const SvmModel& model, std::span<const double> x);

struct SvmGrid {
  std::vector<double> c_values{0.1, 1, 10, 100};
  std::vector<double> gamma_factors{1, 10, 0.1};  // multiplied by 1 / feature_dim
  int folds = 5;
};

struct CvChoice {
  double c = 1;
  double gamma = 0;
  double accuracy = 0;
};

// Stratified k-fold grid search over (C, gamma); ties keep the earlier grid
// point. Returns the chosen parameters.
CvChoice svm_cross_validate(std::span<const std::vector<double>> features, std::span<const int> labels,
                            const SvmGrid& grid, std::uint64_t seed, const SvmParams& base = {});

// Grid search then a final fit on all data.
SvmModel svm_train_cv(std::span<const std::vector<double>> features, std::span<const int> labels,
                      const SvmGrid& grid = {}, std::uint64_t seed = 0, const SvmParams& base = {});

double logistic(double s);

struct FusionRatio {
  double spmt = 1;
  double tfbd = 1;
};

// a * logistic(s_spmt) + b * logistic(s_tfbd) with (a, b) scaled to sum to 1.
double fuse_scores(double s_spmt, double s_tfbd, const FusionRatio& ratio = {});

}  // namespace facepad
