// facepad command-line tool.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "facepad/cascade.hpp"
#include "facepad/errors.hpp"
#include "facepad/image_io.hpp"
#include "facepad/pipeline.hpp"
#include "facepad/serialize.hpp"
#include "facepad/synth.hpp"

using namespace facepad;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  int threads = -1;
};

RunConfig run_config(const Globals& g) {
  RunConfig c = g.config.empty() ? RunConfig{} : RunConfig::load(g.config);
  if (g.seed) c.seed = *g.seed;
  if (g.threads >= 0) c.threads = g.threads;
  c.validate();
  return c;
}

// Writes to --out when given, stdout otherwise.
void emit(const Globals& g, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
  } else {
    write_file(g.out, text);
  }
}

std::string require_out(const Globals& g, const char* what) {
  if (g.out.empty()) throw ConfigError(std::string("--out is required for ") + what);
  return g.out;
}

GrayImage face_from(const std::string& image, const std::string& eyes) {
  ManifestEntry e;
  e.path = image;
  e.landmark_path = eyes;
  return load_face(e);
}

LandmarkPair single_pair(const std::string& path) {
  auto pairs = read_landmark_pairs(path);
  if (pairs.size() != 1) throw FormatError(path + " must hold exactly one landmark pair");
  return pairs.front();
}

ordered_json vec_json(const std::vector<double>& v) { return ordered_json(v); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Face presentation attack detection toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  Globals g;
  app.add_option("--seed", g.seed, "Run seed (overrides the config)");
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_option("--out", g.out, "Output path");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");

  // train
  auto* train = app.add_subcommand("train", "Train a model bundle from a manifest");
  std::string manifest;
  train->add_option("--manifest", manifest, "Training manifest")->required();

  // extract-spmt
  auto* xspmt = app.add_subcommand("extract-spmt", "SPMT descriptor of one face image");
  std::string bundle_path, image, eyes;
  xspmt->add_option("--bundle", bundle_path)->required();
  xspmt->add_option("--image", image)->required();
  xspmt->add_option("--eyes", eyes, "Eye-centre file for cropping");

  // extract-tfbd
  auto* xtfbd = app.add_subcommand("extract-tfbd", "TFBD depth vector of one landmark pair");
  std::string pair_path, calib_path;
  xtfbd->add_option("--bundle", bundle_path)->required();
  xtfbd->add_option("--pair", pair_path)->required();
  xtfbd->add_option("--calib", calib_path, "Calibration (defaults to the bundle's)");

  // build-template
  auto* tmpl = app.add_subcommand("build-template", "Template face from frontal captures");
  std::string pairs_path;
  tmpl->add_option("--pairs", pairs_path)->required();
  tmpl->add_option("--calib", calib_path)->required();

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Classify one face or scene");
  std::string mode_name = "spmt", detections_path, image_id;
  predict_cmd->add_option("--bundle", bundle_path)->required();
  predict_cmd->add_option("--mode", mode_name, "spmt | tfbd | fused | cascade");
  predict_cmd->add_option("--image", image)->required();
  predict_cmd->add_option("--eyes", eyes);
  predict_cmd->add_option("--pair", pair_path);
  predict_cmd->add_option("--detections", detections_path, "Detector records (cascade)");
  predict_cmd->add_option("--image-id", image_id, "Record image id (defaults to the image stem)");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score a labelled manifest and report metrics");
  std::string threshold = "eer", dev_manifest, report_path;
  std::optional<double> far_level;
  eval->add_option("--bundle", bundle_path)->required();
  eval->add_option("--manifest", manifest)->required();
  eval->add_option("--mode", mode_name);
  eval->add_option("--threshold", threshold, "eer or a number");
  eval->add_option("--dev-manifest", dev_manifest, "Take the EER threshold of this set");
  eval->add_option("--far-level", far_level);
  eval->add_option("--report", report_path, "Write the report as JSON");

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic dataset");
  SyntheticSpec spec;
  bool no_stereo = false;
  gen->add_option("--n-per-class", spec.n_per_class);
  gen->add_option("--cutoff", spec.cutoff);
  gen->add_option("--grain", spec.grain);
  gen->add_flag("--no-stereo", no_stereo);
  gen->add_option("--template-captures", spec.template_captures);
  gen->add_option("--noise-px", spec.noise_px);
  gen->add_option("--scenes", spec.scenes);
  gen->add_option("--detections-per-scene", spec.detections_per_scene);

  // anchor-scales
  auto* anchors = app.add_subcommand("anchor-scales", "Per-layer anchor scales");
  double sc_min = 0.2, sc_max = 0.9;
  int layers = 6;
  anchors->add_option("--min", sc_min);
  anchors->add_option("--max", sc_max);
  anchors->add_option("--layers", layers);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      const auto cfg = run_config(g);
      const auto out = require_out(g, "train");
      const auto b = train_all(read_manifest(manifest), cfg);
      b.save(out);
      std::fprintf(stderr, "bundle written to %s (tfbd: %s)\n", out.c_str(), b.has_tfbd() ? "yes" : "no");
    } else if (*xspmt) {
      const auto b = ModelBundle::load(bundle_path);
      const auto v = extract_spmt(face_from(image, eyes), b.spmt);
      ordered_json j;
      j["raw"] = vec_json(v.raw);
      if (v.reduced) j["reduced"] = vec_json(*v.reduced);
      emit(g, j.dump() + "\n");
    } else if (*xtfbd) {
      const auto b = ModelBundle::load(bundle_path);
      if (!b.tmpl) throw ModeError("bundle has no template face");
      std::optional<CameraCalib> calib = b.calib;
      if (!calib_path.empty()) calib = read_calibration(calib_path);
      if (!calib) throw ConfigError("no calibration in the bundle; pass --calib");
      const auto r = extract_tfbd(single_pair(pair_path), *calib, *b.tmpl, b.registration);
      ordered_json j;
      j["depths"] = vec_json(r.depths);
      j["mean_error"] = r.mean_error;
      j["round_errors"] = vec_json(r.round_errors);
      emit(g, j.dump() + "\n");
    } else if (*tmpl) {
      const auto t = build_template(read_landmark_pairs(pairs_path), read_calibration(calib_path));
      ordered_json j;
      j["landmarks"] = ordered_json::array();
      for (const auto& l : t.landmarks) j["landmarks"].push_back({l.x, l.y, l.d});
      emit(g, j.dump() + "\n");
    } else if (*predict_cmd) {
      const auto b = ModelBundle::load(bundle_path);
      const Mode mode = parse_mode(mode_name);
      std::string text;
      if (mode == Mode::Cascade) {
        if (detections_path.empty()) throw ConfigError("cascade mode needs --detections");
        const std::string id = image_id.empty() ? fs::path(image).stem().string() : image_id;
        std::vector<DetectionRecord> recs;
        for (const auto& r : read_detections(detections_path))
          if (r.image_id == id) recs.push_back(r);
        for (const auto& d : predict_cascade(load_gray(image), recs, b)) text += decision_to_json(d) + "\n";
      } else {
        PredictInput in{face_from(image, eyes), {}};
        if (!pair_path.empty()) in.pair = single_pair(pair_path);
        const auto p = predict(in, b, mode);
        ordered_json j;
        j["label"] = to_string(p.label);
        j["score"] = p.score;
        j["provenance"] = p.provenance;
        if (p.spmt_score) j["spmt_score"] = *p.spmt_score;
        if (p.tfbd_score) j["tfbd_score"] = *p.tfbd_score;
        text = j.dump() + "\n";
      }
      emit(g, text);
    } else if (*eval) {
      const auto cfg = run_config(g);
      const auto b = ModelBundle::load(bundle_path);
      const Mode mode = parse_mode(mode_name);
      ThresholdSpec spec_t = ThresholdSpec::eer();
      if (!dev_manifest.empty()) {
        const auto dev = load_samples(read_manifest(dev_manifest), cfg.threads);
        spec_t = ThresholdSpec::devset(score_samples(dev, b, mode, cfg.threads));
      } else if (threshold != "eer") {
        try {
          std::size_t used = 0;
          const double t = std::stod(threshold, &used);
          if (used != threshold.size()) throw std::invalid_argument(threshold);
          spec_t = ThresholdSpec::fixed(t);
        } catch (const std::logic_error&) {
          throw ConfigError("--threshold must be 'eer' or a number");
        }
      }
      const auto ev = evaluate(read_manifest(manifest), b, mode, spec_t, far_level.value_or(cfg.far_level),
                               cfg.threads);
      std::cout << format_report(ev.report);
      if (!g.out.empty()) write_scores(g.out, ev.scores);
      if (!report_path.empty()) write_file(report_path, report_to_json(ev.report) + "\n");
    } else if (*gen) {
      spec.stereo = !no_stereo;
      spec.seed = g.seed.value_or(0);
      const auto p = write_synthetic_dataset(require_out(g, "gen-synthetic"), spec);
      std::printf("manifest %s\nconfig %s\n", p.manifest.c_str(), p.config.c_str());
      if (!p.detections.empty()) std::printf("detections %s\n", p.detections.c_str());
    } else if (*anchors) {
      std::string text;
      for (double s : anchor_scales(sc_min, sc_max, layers)) text += std::to_string(s) + "\n";
      emit(g, text);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ModeError& e) {
    std::fprintf(stderr, "mode error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
