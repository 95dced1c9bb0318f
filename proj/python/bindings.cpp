#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <tuple>

#include "sedattack/attack.hpp"
#include "sedattack/defense.hpp"
#include "sedattack/error.hpp"
#include "sedattack/experiment.hpp"
#include "sedattack/runtime.hpp"

namespace py = pybind11;
using namespace sedattack;

namespace {

using Samples = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Bits = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Waveform to_waveform(const Samples& a, int sr) {
  if (a.ndim() != 1) throw ShapeError("audio must be one-dimensional");
  return Waveform(std::vector<double>(a.data(), a.data() + a.size()), sr);
}

py::array_t<double> to_array(const std::vector<double>& v) { return py::array_t<double>(v.size(), v.data()); }

py::array_t<double> to_array(const Grid<double>& g) {
  py::array_t<double> out({g.rows(), g.cols()});
  std::copy(g.data().begin(), g.data().end(), out.mutable_data());
  return out;
}

py::array_t<std::uint8_t> to_array(const BinaryGrid& g) {
  py::array_t<std::uint8_t> out({g.rows(), g.cols()});
  std::copy(g.data().begin(), g.data().end(), out.mutable_data());
  return out;
}

ad::Tensor to_mel(const Samples& a) {
  if (a.ndim() != 2) throw ShapeError("mel input must be [frames, 40]");
  const std::size_t rows = a.shape(0), cols = a.shape(1);
  return ad::Tensor({rows, cols}, std::vector<double>(a.data(), a.data() + a.size()));
}

BinaryGrid to_grid(const Bits& a) {
  if (a.ndim() != 2) throw ShapeError("activity must be [frames, classes]");
  BinaryGrid g(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), g.data().begin());
  return g;
}

py::object ratio(const std::optional<double>& r) { return r ? py::object(py::float_(*r)) : py::object(py::none()); }

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  d["se"] = r.counts.se;
  d["fe"] = r.counts.fe;
  d["ue"] = r.counts.ue;
  d["ne"] = r.counts.ne;
  d["ep"] = ratio(r.ep);
  d["asr"] = ratio(r.asr);
  d["uer"] = ratio(r.uer);
  d["snr_db"] = r.snr.is_infinite() ? std::numeric_limits<double>::infinity() : r.snr.db();
  return d;
}

EditValue parse_value(const std::string& s) {
  if (s == "mirage") return EditValue::kMirage;
  if (s == "mute") return EditValue::kMute;
  throw ValidationError("edit value must be mirage or mute, got '" + s + "'");
}

std::vector<TargetEdit> to_edits(const std::vector<std::tuple<int, double, double, std::string>>& edits) {
  std::vector<TargetEdit> out;
  for (const auto& [cls, start, end, value] : edits) out.push_back({cls, start, end, parse_value(value)});
  return out;
}

ExperimentConfig config_from(const std::string& text, std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg = parse_config(text);
  if (seed) {
    cfg.seed = *seed;
    cfg.train.seed = *seed;
  }
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_sedattack, m) {
  configure_allocator();
  m.doc() = "Targeted mirage/mute attacks on a frame-level sound event detector.";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.attr("SAMPLE_RATE") = 8000;
  m.attr("NUM_CLASSES") = kNumClasses;
  m.attr("MEL_BINS") = kMelBins;

  m.def(
      "load_wav",
      [](const std::filesystem::path& path) {
        const Waveform w = load_wav(path);
        return py::make_tuple(to_array(w.samples()), w.sample_rate());
      },
      py::arg("path"), "Reads 16-bit PCM mono WAV as (samples in [-1, 1], sample_rate).");
  m.def(
      "save_wav",
      [](const std::filesystem::path& path, const Samples& samples, int sample_rate) {
        save_wav(to_waveform(samples, sample_rate), path);
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate") = 8000);
  m.def(
      "snr_db",
      [](const Samples& clean, const Samples& adv, int sample_rate) {
        const SnrDb s = snr_db(to_waveform(clean, sample_rate), to_waveform(adv, sample_rate));
        return s.is_infinite() ? std::numeric_limits<double>::infinity() : s.db();
      },
      py::arg("clean"), py::arg("adversarial"), py::arg("sample_rate") = 8000);

  m.def(
      "generate_scene",
      [](std::uint64_t seed) {
        const Scene s = generate_scene(seed);
        py::list events;
        for (const auto& e : s.events) {
          py::dict d;
          d["class_id"] = e.class_id;
          d["onset"] = e.onset;
          d["duration"] = e.duration;
          d["gain"] = e.gain;
          events.append(d);
        }
        py::dict out;
        out["audio"] = to_array(s.audio.samples());
        out["labels"] = to_array(s.label.active);
        out["events"] = events;
        return out;
      },
      py::arg("seed"), "Synthetic 4 s polyphonic scene with frame labels.");

  m.def(
      "log_mel",
      [](const Samples& samples, int sample_rate) {
        const LogMelSpectrogram mel = frontend(to_waveform(samples, sample_rate), MelFrontendConfig{});
        py::array_t<double> out({mel.frames.dim(0), mel.frames.dim(1)});
        std::copy(mel.frames.values().begin(), mel.frames.values().end(), out.mutable_data());
        return out;
      },
      py::arg("samples"), py::arg("sample_rate") = 8000);

  py::class_<ModelParams>(m, "Model")
      .def_static("initialize", &ModelParams::initialize, py::arg("seed"))
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const ModelParams& p, const std::filesystem::path& path) { save_checkpoint(p, path); },
           py::arg("path"))
      .def_property_readonly("parameter_count", &ModelParams::parameter_count)
      .def(
          "posteriors", [](const ModelParams& p, const Samples& mel) { return to_array(forward(p, to_mel(mel)).probs); },
          py::arg("mel"))
      .def(
          "detect",
          [](const ModelParams& p, const Samples& mel) { return to_array(binarize(forward(p, to_mel(mel))).active); },
          py::arg("mel"))
      .def("__eq__", [](const ModelParams& a, const ModelParams& b) { return a == b; });

  m.def(
      "train",
      [](const ModelParams& init, const std::vector<Samples>& mels, const std::vector<Bits>& labels, int epochs,
         double lr, int batch, std::uint64_t seed) {
        if (mels.size() != labels.size()) throw ShapeError("need one label matrix per mel spectrogram");
        std::vector<LabeledExample> data;
        for (std::size_t i = 0; i < mels.size(); ++i) data.push_back({to_mel(mels[i]), to_grid(labels[i])});
        TrainConfig cfg{epochs, lr, batch, seed};
        TrainResult r = [&] {
          py::gil_scoped_release release;
          return train(init, data, cfg);
        }();
        return py::make_tuple(std::move(r.params), r.epoch_loss);
      },
      py::arg("model"), py::arg("mels"), py::arg("labels"), py::arg("epochs") = 30, py::arg("lr") = 1e-3,
      py::arg("batch") = 8, py::arg("seed") = 0, "Returns (trained model, per-epoch mean loss).");

  m.def(
      "attack",
      [](const ModelParams& params, const Samples& samples,
         const std::vector<std::tuple<int, double, double, std::string>>& edits, double alpha, double tau, double beta,
         int iterations, const std::string& optimizer, const std::string& mode, bool random_init, std::uint64_t seed,
         int sample_rate) {
        AttackConfig cfg;
        cfg.alpha = alpha;
        cfg.tau = tau;
        cfg.beta = beta;
        cfg.n_iters = iterations;
        cfg.optimizer = parse_optimizer(optimizer);
        cfg.mode = parse_attack_mode(mode);
        cfg.random_init = random_init;
        const Waveform clean = to_waveform(samples, sample_rate);
        const auto targets = to_edits(edits);
        AttackResult r = [&] {
          py::gil_scoped_release release;
          return run_attack(params, clean, targets, cfg, seed);
        }();
        std::vector<std::array<double, 3>> trace;
        for (const auto& p : r.loss_trace) trace.push_back({p.total, p.adv, p.pre});
        py::dict out;
        out["adversarial"] = to_array(r.adversarial.samples());
        out["delta"] = to_array(r.delta.samples());
        out["clean_activity"] = to_array(r.clean_activity.active);
        out["adversarial_activity"] = to_array(r.adv_activity.active);
        out["target"] = to_array(r.target.region.member);
        out["loss_trace"] = trace;
        out["report"] = report_dict(r.report());
        out["budget_ok"] = budget_holds(r);
        return out;
      },
      py::arg("model"), py::arg("samples"), py::arg("edits"), py::arg("alpha") = 10.0, py::arg("tau") = 0.02,
      py::arg("beta") = 1e-3, py::arg("iterations") = 500, py::arg("optimizer") = "adam", py::arg("mode") = "m2a",
      py::arg("random_init") = false, py::arg("seed") = 0, py::arg("sample_rate") = 8000,
      "Edits are (class_id, start_s, end_s, 'mirage' | 'mute').");

  m.def(
      "count_edits",
      [](const Bits& clean, const Bits& adv, const Bits& region, const Bits& y_star) {
        const EditCounts c = count_edits(EventActivityMatrix{to_grid(clean)}, EventActivityMatrix{to_grid(adv)},
                                         TargetRegion{to_grid(region)}, TargetLabelMatrix{to_grid(y_star)});
        return report_dict(compute_report(c, SnrDb::infinite()));
      },
      py::arg("clean"), py::arg("adversarial"), py::arg("region"), py::arg("y_star"));

  m.def(
      "defend",
      [](const Samples& samples, const std::string& kind, std::uint64_t seed, int down_rate, double sigma, int window,
         bool lowpass, int sample_rate) {
        DefenseConfig cfg;
        cfg.kind = parse_defense(kind);
        cfg.down_rate = down_rate;
        cfg.sigma = sigma;
        cfg.window = window;
        cfg.lowpass = lowpass;
        return to_array(apply_defense(to_waveform(samples, sample_rate), cfg, seed).samples());
      },
      py::arg("samples"), py::arg("kind"), py::arg("seed") = 0, py::arg("down_rate") = 4000, py::arg("sigma") = 0.01,
      py::arg("window") = 3, py::arg("lowpass") = false, py::arg("sample_rate") = 8000);

  m.def(
      "config_hash", [](const std::string& text) { return parse_config(text).hash(); }, py::arg("config_text"));

  auto verb = [&m](const char* name, void (*fn)(const ExperimentConfig&, const Layout&, const Logger&)) {
    m.def(
        name,
        [fn](const std::string& config_text, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
          const ExperimentConfig cfg = config_from(config_text, seed);
          py::gil_scoped_release release;
          fn(cfg, Layout{out}, {});
        },
        py::arg("config_text"), py::arg("out"), py::arg("seed") = py::none());
  };
  verb("run_synth", &cmd_synth);
  verb("run_train", &cmd_train);
  verb("run_attack", &cmd_attack);
  verb("run_defend", &cmd_defend);
}
