// Python bindings for the main facepad operations.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "facepad/cascade.hpp"
#include "facepad/errors.hpp"
#include "facepad/image_io.hpp"
#include "facepad/metrics.hpp"
#include "facepad/pipeline.hpp"
#include "facepad/synth.hpp"

namespace py = pybind11;
using namespace facepad;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

GrayImage to_gray(const U8Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D uint8 array");
  const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  return GrayImage(h, w, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

U8Array to_array(const GrayImage& img) {
  U8Array a({img.height, img.width});
  std::copy(img.data.begin(), img.data.end(), a.mutable_data());
  return a;
}

FaceClass class_from(const std::string& s) { return parse_face_class(s); }

py::dict prediction_dict(const Prediction& p) {
  py::dict d;
  d["label"] = to_string(p.label);
  d["score"] = p.score;
  d["provenance"] = p.provenance;
  d["spmt_score"] = p.spmt_score ? py::cast(*p.spmt_score) : py::none();
  d["tfbd_score"] = p.tfbd_score ? py::cast(*p.tfbd_score) : py::none();
  return d;
}

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  d["n_genuine"] = r.n_genuine;
  d["n_attack"] = r.n_attack;
  d["threshold"] = r.threshold;
  d["accuracy"] = r.accuracy;
  d["apcer"] = r.apcer;
  d["bpcer"] = r.bpcer;
  d["hter"] = r.hter;
  d["eer"] = r.eer;
  d["eer_threshold"] = r.eer_threshold;
  d["auc"] = r.auc;
  d["far_level"] = r.far_level;
  d["tpr_at_far"] = r.tpr_at_far;
  d["apcer_by_type"] = r.apcer_by_type;
  return d;
}

std::optional<LandmarkPair> pair_from(const std::optional<std::string>& path) {
  if (!path) return std::nullopt;
  auto pairs = read_landmark_pairs(*path);
  if (pairs.size() != 1) throw FormatError(*path + " must hold exactly one landmark pair");
  return pairs.front();
}

}  // namespace

PYBIND11_MODULE(_facepad, m) {
  m.doc() = "Face presentation attack detection: SPMT texture and TFBD stereo-structure features";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ModeError>(m, "ModeError", base.ptr());
  py::register_exception<ManifestError>(m, "ManifestError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<ModelCompatibilityError>(m, "ModelCompatibilityError", base.ptr());
  py::register_exception<DegenerateGeometryError>(m, "DegenerateGeometryError", base.ptr());
  py::register_exception<MetricsError>(m, "MetricsError", base.ptr());

  m.def("load_gray", [](const std::string& path) { return to_array(load_gray(path)); }, py::arg("path"));
  m.def("save_gray", [](const std::string& path, const U8Array& a) { save_gray(path, to_gray(a)); },
        py::arg("path"), py::arg("image"));
  m.def("to_face_plane", [](const U8Array& a) { return to_array(to_face_plane(to_gray(a))); }, py::arg("image"));

  m.def(
      "gen_texture_image",
      [](const std::string& label, std::uint64_t seed, double cutoff, double grain, int height, int width) {
        return to_array(gen_texture_image({class_from(label), cutoff, grain, seed}, height, width));
      },
      py::arg("label"), py::arg("seed"), py::arg("cutoff") = 0.08, py::arg("grain") = 12.0,
      py::arg("height") = kFaceHeight, py::arg("width") = kFaceWidth);

  m.def(
      "write_synthetic_dataset",
      [](const std::string& dir, int n_per_class, bool stereo, int template_captures, int scenes,
         std::uint64_t seed) {
        SyntheticSpec s;
        s.n_per_class = n_per_class;
        s.stereo = stereo;
        s.template_captures = template_captures;
        s.scenes = scenes;
        s.seed = seed;
        const auto p = write_synthetic_dataset(dir, s);
        py::dict d;
        d["manifest"] = p.manifest;
        d["config"] = p.config;
        d["calibration"] = p.calibration;
        d["template_pairs"] = p.template_pairs;
        d["detections"] = p.detections;
        d["scenes"] = p.scenes;
        return d;
      },
      py::arg("dir"), py::arg("n_per_class") = 20, py::arg("stereo") = true, py::arg("template_captures") = 20,
      py::arg("scenes") = 0, py::arg("seed") = 0);

  py::class_<ModelBundle>(m, "Bundle")
      .def_static("load", &ModelBundle::load, py::arg("path"))
      .def("save", &ModelBundle::save, py::arg("path"))
      .def("to_bytes", [](const ModelBundle& b) { return py::bytes(b.serialize()); })
      .def_static("from_bytes", [](const py::bytes& data) { return ModelBundle::deserialize(std::string(data)); })
      .def_property_readonly("has_tfbd", &ModelBundle::has_tfbd)
      .def_property_readonly("version", [](const ModelBundle& b) { return b.version; })
      .def_property(
          "fusion", [](const ModelBundle& b) { return std::pair(b.fusion.spmt, b.fusion.tfbd); },
          [](ModelBundle& b, std::pair<double, double> r) { b.fusion = {r.first, r.second}; })
      .def_property(
          "theta_c", [](const ModelBundle& b) { return b.cascade.theta_c; },
          [](ModelBundle& b, double t) {
            CascadeConfig c = b.cascade;
            c.theta_c = t;
            c.validate();
            b.cascade = c;
          });

  m.def(
      "train",
      [](const std::string& manifest, const std::optional<std::string>& config, std::optional<std::uint64_t> seed,
         int threads) {
        RunConfig c = config ? RunConfig::load(*config) : RunConfig{};
        if (seed) c.seed = *seed;
        c.threads = threads;
        const auto entries = read_manifest(manifest);
        py::gil_scoped_release release;
        return train_all(entries, c);
      },
      py::arg("manifest"), py::arg("config") = py::none(), py::arg("seed") = py::none(), py::arg("threads") = 0);

  m.def(
      "predict",
      [](const ModelBundle& b, const U8Array& face, const std::string& mode, const std::optional<std::string>& pair) {
        PredictInput in{to_gray(face), pair_from(pair)};
        if (in.face.height != kFaceHeight || in.face.width != kFaceWidth) in.face = to_face_plane(in.face);
        return prediction_dict(predict(in, b, parse_mode(mode)));
      },
      py::arg("bundle"), py::arg("face"), py::arg("mode") = "spmt", py::arg("pair") = py::none());

  m.def(
      "predict_cascade",
      [](const ModelBundle& b, const U8Array& scene, const std::string& detections, const std::string& image_id) {
        std::vector<DetectionRecord> recs;
        for (const auto& r : read_detections(detections))
          if (r.image_id == image_id) recs.push_back(r);
        py::list out;
        for (const auto& d : predict_cascade(to_gray(scene), recs, b)) {
          py::dict x;
          x["box"] = py::make_tuple(d.record.box.x, d.record.box.y, d.record.box.w, d.record.box.h);
          x["detector_label"] = d.record.label;
          x["confidence"] = d.record.confidence;
          x["final_label"] = d.final_label;
          x["provenance"] = d.provenance;
          x["svm_score"] = d.svm_score ? py::cast(*d.svm_score) : py::none();
          out.append(x);
        }
        return out;
      },
      py::arg("bundle"), py::arg("scene"), py::arg("detections"), py::arg("image_id"));

  m.def(
      "extract_spmt",
      [](const ModelBundle& b, const U8Array& face) {
        const auto v = extract_spmt(to_gray(face), b.spmt);
        return py::make_tuple(v.raw, v.reduced ? py::cast(*v.reduced) : py::none());
      },
      py::arg("bundle"), py::arg("face"));

  m.def(
      "extract_tfbd",
      [](const ModelBundle& b, const std::string& pair) {
        if (!b.has_tfbd()) throw ModeError("bundle has no TFBD components");
        const auto r = extract_tfbd(*pair_from(pair), *b.calib, *b.tmpl, b.registration);
        return py::make_tuple(r.depths, r.mean_error);
      },
      py::arg("bundle"), py::arg("pair"));

  m.def(
      "evaluate",
      [](const ModelBundle& b, const std::string& manifest, const std::string& mode, std::optional<double> threshold,
         double far_level, int threads) {
        const auto entries = read_manifest(manifest);
        const auto spec = threshold ? ThresholdSpec::fixed(*threshold) : ThresholdSpec::eer();
        Evaluation ev;
        {
          py::gil_scoped_release release;
          ev = evaluate(entries, b, parse_mode(mode), spec, far_level, threads);
        }
        py::list scores;
        for (const auto& s : ev.scores) scores.append(py::make_tuple(s.id, s.score, s.genuine, s.attack_type));
        return py::make_tuple(report_dict(ev.report), scores);
      },
      py::arg("bundle"), py::arg("manifest"), py::arg("mode") = "fused", py::arg("threshold") = py::none(),
      py::arg("far_level") = 0.1, py::arg("threads") = 0);

  m.def(
      "compute_metrics",
      [](const std::vector<double>& scores, const std::vector<bool>& genuine, std::optional<double> threshold,
         double far_level) {
        if (scores.size() != genuine.size()) throw DimensionError("scores and labels differ in length");
        std::vector<ScoredSample> s;
        for (std::size_t i = 0; i < scores.size(); ++i) s.push_back({std::to_string(i), scores[i], genuine[i], ""});
        return report_dict(compute_metrics(s, threshold ? ThresholdSpec::fixed(*threshold) : ThresholdSpec::eer(),
                                           far_level));
      },
      py::arg("scores"), py::arg("genuine"), py::arg("threshold") = py::none(), py::arg("far_level") = 0.1);

  m.def("fuse_scores",
        [](double a, double b, std::pair<double, double> r) { return fuse_scores(a, b, {r.first, r.second}); },
        py::arg("spmt"), py::arg("tfbd"), py::arg("ratio") = std::pair(0.5, 0.5));
  m.def("anchor_scales", &anchor_scales, py::arg("sc_min"), py::arg("sc_max"), py::arg("layers"));
  m.def(
      "landmark_depth",
      [](std::pair<double, double> left, std::pair<double, double> right, const std::optional<std::string>& calib) {
        const CameraCalib c = calib ? read_calibration(*calib) : default_calib();
        return landmark_depth({left.first, left.second}, {right.first, right.second}, c);
      },
      py::arg("left"), py::arg("right"), py::arg("calib") = py::none());
}
