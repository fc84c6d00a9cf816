#include "facepad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "facepad/errors.hpp"

namespace facepad {

namespace {

struct Sweep {
  std::vector<double> thresholds;  // ascending
  std::vector<double> far;
  std::vector<double> frr;
};

void require_both_classes(std::span<const ScoredSample> samples) {
  bool g = false, a = false;
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw MetricsError("non-finite score for sample '" + s.id + "'");
    (s.genuine ? g : a) = true;
  }
  if (!g || !a) throw MetricsError("metrics need both genuine and attack samples");
}

Sweep sweep(std::span<const ScoredSample> samples) {
  std::vector<double> gen, att, all;
  for (const auto& s : samples) {
    (s.genuine ? gen : att).push_back(s.score);
    all.push_back(s.score);
  }
  std::sort(gen.begin(), gen.end());
  std::sort(att.begin(), att.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  Sweep sw;
  sw.thresholds.push_back(all.front() - 1.0);
  for (std::size_t i = 0; i + 1 < all.size(); ++i) sw.thresholds.push_back(all[i] + (all[i + 1] - all[i]) / 2);
  sw.thresholds.push_back(all.back() + 1.0);
  for (double t : sw.thresholds) {
    const auto att_below = std::lower_bound(att.begin(), att.end(), t) - att.begin();
    const auto gen_below = std::lower_bound(gen.begin(), gen.end(), t) - gen.begin();
    sw.far.push_back(static_cast<double>(att.size() - att_below) / att.size());
    sw.frr.push_back(static_cast<double>(gen_below) / gen.size());
  }
  return sw;
}

}  // namespace

EerPoint equal_error_rate(std::span<const ScoredSample> samples) {
  require_both_classes(samples);
  const auto sw = sweep(samples);
  // FAR is non-increasing and FRR non-decreasing along the sweep.
  std::size_t i = 0;
  while (i < sw.thresholds.size() && sw.frr[i] < sw.far[i]) ++i;
  if (i == 0 || sw.frr[i] == sw.far[i]) return {sw.far[i], sw.thresholds[i]};
  const double d0 = sw.far[i - 1] - sw.frr[i - 1];
  const double d1 = sw.far[i] - sw.frr[i];
  const double lambda = d0 / (d0 - d1);
  return {sw.far[i - 1] + lambda * (sw.far[i] - sw.far[i - 1]),
          sw.thresholds[i - 1] + lambda * (sw.thresholds[i] - sw.thresholds[i - 1])};
}

double area_under_roc(std::span<const ScoredSample> samples) {
  require_both_classes(samples);
  const auto sw = sweep(samples);
  double auc = 0;
  for (std::size_t i = 0; i + 1 < sw.thresholds.size(); ++i) {
    const double tpr0 = 1 - sw.frr[i], tpr1 = 1 - sw.frr[i + 1];
    auc += (sw.far[i] - sw.far[i + 1]) * (tpr0 + tpr1) / 2;
  }
  return auc;
}

MetricsReport compute_metrics(std::span<const ScoredSample> samples, const ThresholdSpec& spec, double far_level) {
  require_both_classes(samples);
  MetricsReport r;
  const auto eer = equal_error_rate(samples);
  r.eer = eer.eer;
  r.eer_threshold = eer.threshold;
  r.auc = area_under_roc(samples);
  switch (spec.mode) {
    case ThresholdSpec::Mode::Fixed: r.threshold = spec.value; break;
    case ThresholdSpec::Mode::Eer: r.threshold = eer.threshold; break;
    case ThresholdSpec::Mode::Devset: r.threshold = equal_error_rate(spec.dev).threshold; break;
  }

  std::size_t att_acc = 0, gen_rej = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> by_type;  // accepted, total
  for (const auto& s : samples) {
    const bool accepted = s.score >= r.threshold;
    if (s.genuine) {
      ++r.n_genuine;
      if (!accepted) ++gen_rej;
    } else {
      ++r.n_attack;
      if (accepted) ++att_acc;
      if (!s.attack_type.empty()) {
        auto& [acc, tot] = by_type[s.attack_type];
        acc += accepted;
        ++tot;
      }
    }
  }
  r.far = static_cast<double>(att_acc) / r.n_attack;
  r.frr = static_cast<double>(gen_rej) / r.n_genuine;
  r.apcer = r.far;
  r.bpcer = r.frr;
  r.hter = (r.far + r.frr) / 2;
  r.accuracy = static_cast<double>(r.n_genuine - gen_rej + r.n_attack - att_acc) / (r.n_genuine + r.n_attack);
  for (const auto& [type, counts] : by_type) {
    r.apcer_by_type[type] = static_cast<double>(counts.first) / counts.second;
  }

  r.far_level = far_level;
  const auto sw = sweep(samples);
  for (std::size_t i = 0; i < sw.thresholds.size(); ++i) {
    if (sw.far[i] <= far_level) {
      r.tpr_at_far = 1 - sw.frr[i];
      break;
    }
  }
  return r;
}

std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "samples     " << r.n_genuine << " genuine / " << r.n_attack << " attack\n";
  os << "threshold   " << r.threshold << "\n";
  os << "accuracy    " << r.accuracy << "\n";
  os << "APCER       " << r.apcer << "\n";
  os << "BPCER       " << r.bpcer << "\n";
  os << "HTER        " << r.hter << "\n";
  os << "EER         " << r.eer << " (threshold " << r.eer_threshold << ")\n";
  os << "AUC         " << r.auc << "\n";
  os << "TPR@FAR=" << r.far_level << " " << r.tpr_at_far << "\n";
  for (const auto& [type, v] : r.apcer_by_type) os << "APCER[" << type << "] " << v << "\n";
  return os.str();
}

std::string report_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["n_genuine"] = r.n_genuine;
  j["n_attack"] = r.n_attack;
  j["threshold"] = r.threshold;
  j["accuracy"] = r.accuracy;
  j["far"] = r.far;
  j["frr"] = r.frr;
  j["apcer"] = r.apcer;
  j["bpcer"] = r.bpcer;
  j["hter"] = r.hter;
  j["eer"] = r.eer;
  j["eer_threshold"] = r.eer_threshold;
  j["auc"] = r.auc;
  j["far_level"] = r.far_level;
  j["tpr_at_far"] = r.tpr_at_far;
  j["apcer_by_type"] = r.apcer_by_type;
  return j.dump(2);
}

}  // namespace facepad
