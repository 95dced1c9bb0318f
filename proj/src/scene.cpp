#include "sedattack/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "sedattack/error.hpp"
#include "sedattack/model.hpp"
#include "sedattack/seed.hpp"

namespace sedattack {

void EventSpec::validate(double clip_seconds) const {
  if (class_id < 0 || class_id >= static_cast<int>(kNumClasses))
    throw ValidationError("event class must be in [0, " + std::to_string(kNumClasses - 1) + "]");
  if (!(onset >= 0.0)) throw ValidationError("event onset must be non-negative");
  if (!(duration > 0.0)) throw ValidationError("event duration must be positive");
  if (onset + duration > clip_seconds + 1e-9) throw ValidationError("event extends past the clip");
  if (!(gain > 0.0 && gain <= 1.0)) throw ValidationError("event gain must be in (0, 1]");
}

void SceneOptions::validate() const {
  frontend.validate();
  if (!(clip_seconds > 0.0)) throw ValidationError("clip_seconds must be positive");
  if (max_events < 0 || n_events > max_events)
    throw ValidationError("event count exceeds max_events");
  if (!(min_duration > 0.0 && min_duration <= max_duration))
    throw ValidationError("event durations must satisfy 0 < min <= max");
  if (!(min_gain > 0.0 && min_gain <= max_gain && max_gain <= 1.0))
    throw ValidationError("event gains must satisfy 0 < min <= max <= 1");
}

std::size_t SceneOptions::num_samples() const {
  return static_cast<std::size_t>(std::llround(clip_seconds * frontend.sample_rate));
}

Waveform synth_event(const EventSpec& spec, int sample_rate) {
  if (sample_rate <= 0) throw ValidationError("sample rate must be positive");
  spec.validate(spec.onset + spec.duration);
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spec.duration * sample_rate)));
  const double fade = kFadeSeconds * sample_rate;
  const double two_pi = 2.0 * std::numbers::pi;
  std::mt19937_64 rng(spec.noise_seed);
  std::uniform_real_distribution<double> noise(-1.0, 1.0);

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double v = 0.0;
    switch (spec.class_id) {
      case kSine:
        v = std::sin(two_pi * spec.frequency * t);
        break;
      case kChirp: {
        const double slope = (spec.chirp_end - spec.chirp_start) / spec.duration;
        v = std::sin(two_pi * (spec.chirp_start * t + 0.5 * slope * t * t));
        break;
      }
      case kNoiseBurst:
        v = noise(rng);
        break;
      case kAmTone:
        v = 0.5 * (1.0 - std::cos(two_pi * spec.modulation_rate * t)) *
            std::sin(two_pi * spec.frequency * t);
        break;
    }
    const double from_end = static_cast<double>(n - 1 - i);
    const double env = std::min({1.0, static_cast<double>(i) / fade, from_end / fade});
    out[i] = spec.gain * env * v;
  }
  return Waveform(std::move(out), sample_rate);
}

SceneLabel label_events(const std::vector<EventSpec>& events, std::size_t num_frames,
                        const MelFrontendConfig& frontend) {
  BinaryGrid active(num_frames, kNumClasses, 0);
  for (const auto& e : events) {
    if (e.class_id < 0 || e.class_id >= static_cast<int>(kNumClasses))
      throw ValidationError("event class out of range");
    for (std::size_t t = 0; t < num_frames; ++t) {
      const double center = static_cast<double>(t) * frontend.hop / frontend.sample_rate;
      if (center >= e.onset && center < e.onset + e.duration) active(t, e.class_id) = 1;
    }
  }
  return {std::move(active)};
}

Waveform render_scene(const std::vector<EventSpec>& events, std::uint64_t background_seed,
                      const SceneOptions& options) {
  options.validate();
  const int sr = options.frontend.sample_rate;
  const std::size_t n = options.num_samples();
  std::vector<double> mixbuf(n);
  std::mt19937_64 rng(background_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double energy = 0.0;
  for (double& x : mixbuf) {
    x = gauss(rng);
    energy += x * x;
  }
  const double scale = kBackgroundRms / std::sqrt(energy / static_cast<double>(n));
  for (double& x : mixbuf) x *= scale;

  for (const auto& e : events) {
    e.validate(options.clip_seconds);
    const Waveform w = synth_event(e, sr);
    const auto start = static_cast<std::size_t>(std::llround(e.onset * sr));
    for (std::size_t i = 0; i < w.size() && start + i < n; ++i) mixbuf[start + i] += w[i];
  }
  for (double& x : mixbuf) x = std::clamp(x, -1.0, 1.0);
  return quantize_to_pcm(Waveform(std::move(mixbuf), sr));
}

Scene generate_scene(std::uint64_t seed, const SceneOptions& options) {
  options.validate();
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  int count = options.n_events;
  if (count < 0) count = std::uniform_int_distribution<int>(1, std::max(1, options.max_events))(rng);
  const double max_dur = std::min(options.max_duration, options.clip_seconds);
  const double min_dur = std::min(options.min_duration, max_dur);

  std::vector<EventSpec> events;
  for (int k = 0; k < count; ++k) {
    // Without overlap, retry placement a bounded number of times and drop
    // the event when the clip is too crowded.
    for (int attempt = 0; attempt < 100; ++attempt) {
      EventSpec e;
      e.class_id = std::uniform_int_distribution<int>(0, kNumClasses - 1)(rng);
      e.duration = uniform(min_dur, max_dur);
      e.onset = uniform(0.0, options.clip_seconds - e.duration);
      e.gain = uniform(options.min_gain, options.max_gain);
      e.noise_seed = rng();
      const bool clash = !options.overlap_allowed &&
                         std::any_of(events.begin(), events.end(), [&](const EventSpec& o) {
                           return e.onset < o.onset + o.duration && o.onset < e.onset + e.duration;
                         });
      if (!clash) {
        events.push_back(e);
        break;
      }
    }
  }
  const std::uint64_t background_seed = rng();
  Waveform audio = render_scene(events, background_seed, options);
  SceneLabel label = label_events(events, options.frontend.num_frames(audio.size()), options.frontend);
  return {std::move(audio), std::move(label), std::move(events), background_seed};
}

void save_sidecar(const SceneLabel& label, const std::vector<EventSpec>& events,
                  const MelFrontendConfig& frontend, const std::filesystem::path& path) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "frames " << label.active.rows() << " classes " << label.active.cols() << " hop "
      << frontend.hop << " sample_rate " << frontend.sample_rate << "\n";
  out << "events " << events.size() << "\n";
  for (const auto& e : events) {
    out << e.class_id << " " << e.onset << " " << e.duration << " " << e.gain << "\n";
  }
  for (std::size_t t = 0; t < label.active.rows(); ++t) {
    for (std::size_t c = 0; c < label.active.cols(); ++c) out << (label.active(t, c) ? '1' : '0');
    out << "\n";
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write sidecar: " + path.string());
  file << out.str();
  if (!file) throw IoError("failed writing sidecar: " + path.string());
}

Sidecar load_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open sidecar: " + path.string());
  auto fail = [&](const std::string& what) {
    return FormatError("malformed sidecar " + path.string() + ": " + what);
  };
  std::string kw[4];
  std::size_t frames = 0, classes = 0;
  Sidecar s;
  if (!(in >> kw[0] >> frames >> kw[1] >> classes >> kw[2] >> s.hop >> kw[3] >> s.sample_rate) ||
      kw[0] != "frames" || kw[1] != "classes" || kw[2] != "hop" || kw[3] != "sample_rate") {
    throw fail("bad header");
  }
  std::string ev;
  std::size_t n_events = 0;
  if (!(in >> ev >> n_events) || ev != "events") throw fail("missing event count");
  for (std::size_t i = 0; i < n_events; ++i) {
    EventSpec e;
    if (!(in >> e.class_id >> e.onset >> e.duration >> e.gain)) throw fail("bad event line");
    s.events.push_back(e);
  }
  s.label.active = BinaryGrid(frames, classes, 0);
  for (std::size_t t = 0; t < frames; ++t) {
    std::string row;
    if (!(in >> row) || row.size() != classes) throw fail("bad bitmap row " + std::to_string(t));
    for (std::size_t c = 0; c < classes; ++c) {
      if (row[c] != '0' && row[c] != '1') throw fail("bitmap must contain only 0 and 1");
      s.label.active(t, c) = row[c] == '1';
    }
  }
  std::string extra;
  if (in >> extra) throw fail("trailing content");
  return s;
}

std::vector<DatasetEntry> make_dataset(std::uint64_t seed, std::size_t n_scenes,
                                       const SceneOptions& options) {
  std::vector<DatasetEntry> out;
  out.reserve(n_scenes);
  for (std::size_t i = 0; i < n_scenes; ++i) {
    Scene s = generate_scene(derive_seed(seed, {i}), options);
    std::ostringstream id;
    id << "scene_" << std::setw(4) << std::setfill('0') << i;
    out.push_back({id.str(), std::move(s.audio), std::move(s.label), std::move(s.events)});
  }
  return out;
}

void write_dataset(const std::vector<DatasetEntry>& entries, const MelFrontendConfig& frontend,
                   const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());
  for (const auto& e : entries) {
    save_wav(e.audio, dir / (e.id + ".wav"));
    save_sidecar(e.label, e.events, frontend, dir / (e.id + ".txt"));
  }
}

std::vector<DatasetEntry> load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& f : std::filesystem::directory_iterator(dir)) {
    if (f.path().extension() == ".wav") ids.push_back(f.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  std::vector<DatasetEntry> out;
  for (const auto& id : ids) {
    Waveform audio = load_wav(dir / (id + ".wav"));
    Sidecar side = load_sidecar(dir / (id + ".txt"));
    if (side.sample_rate != audio.sample_rate())
      throw FormatError("sidecar sample rate disagrees with audio for " + id);
    out.push_back({id, std::move(audio), std::move(side.label), std::move(side.events)});
  }
  return out;
}

}  // namespace sedattack
