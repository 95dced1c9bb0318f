#pragma once

// Synthetic polyphonic scenes: four easily separable event classes over a
// white-noise floor, with frame-grid labels.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sedattack/features.hpp"
#include "sedattack/grid.hpp"
#include "sedattack/signal.hpp"

namespace sedattack {

enum EventClass : int { kSine = 0, kChirp = 1, kNoiseBurst = 2, kAmTone = 3 };

struct EventSpec {
  int class_id = 0;
  double onset = 0.0;     // seconds
  double duration = 1.0;  // seconds
  double gain = 0.5;
  double frequency = 440.0;     // sine and AM carrier
  double chirp_start = 200.0;
  double chirp_end = 2000.0;
  double modulation_rate = 8.0;  // AM tone
  std::uint64_t noise_seed = 0;  // noise burst

  // Throws ValidationError.
  void validate(double clip_seconds) const;
  friend bool operator==(const EventSpec&, const EventSpec&) = default;
};

inline constexpr double kFadeSeconds = 0.01;
inline constexpr double kBackgroundRms = 0.01;

// T x C activity on the frontend's frame grid.
struct SceneLabel {
  BinaryGrid active;
  friend bool operator==(const SceneLabel&, const SceneLabel&) = default;
};

struct SceneOptions {
  double clip_seconds = 4.0;
  // Negative draws a count uniformly from [1, max_events].
  int n_events = -1;
  int max_events = 5;
  bool overlap_allowed = true;
  double min_duration = 0.5;
  double max_duration = 3.5;
  double min_gain = 0.3;
  double max_gain = 0.8;
  MelFrontendConfig frontend;

  void validate() const;
  std::size_t num_samples() const;
};

struct Scene {
  Waveform audio;
  SceneLabel label;
  std::vector<EventSpec> events;
  std::uint64_t background_seed = 0;
};

// round(duration * sample_rate) samples with 10 ms linear fades.
Waveform synth_event(const EventSpec& spec, int sample_rate);

// Frame t is active for class c iff t*hop/sample_rate lies in some class-c
// event's [onset, onset + duration).
SceneLabel label_events(const std::vector<EventSpec>& events, std::size_t num_frames,
                        const MelFrontendConfig& frontend);

// Background noise plus events, clamped to [-1, 1] and snapped to the 16-bit
// grid so saved scenes reload unchanged.
Waveform render_scene(const std::vector<EventSpec>& events, std::uint64_t background_seed,
                      const SceneOptions& options);

Scene generate_scene(std::uint64_t seed, const SceneOptions& options = {});

// Label sidecar: header, one line per event, then the T x C bitmap.
void save_sidecar(const SceneLabel& label, const std::vector<EventSpec>& events,
                  const MelFrontendConfig& frontend, const std::filesystem::path& path);

struct Sidecar {
  SceneLabel label;
  std::vector<EventSpec> events;
  int hop = 0;
  int sample_rate = 0;
};
Sidecar load_sidecar(const std::filesystem::path& path);

struct DatasetEntry {
  std::string id;
  Waveform audio;
  SceneLabel label;
  std::vector<EventSpec> events;
};

// Scene i uses derive_seed(seed, {i}). Writes <id>.wav and <id>.txt per scene.
std::vector<DatasetEntry> make_dataset(std::uint64_t seed, std::size_t n_scenes,
                                       const SceneOptions& options);
void write_dataset(const std::vector<DatasetEntry>& entries, const MelFrontendConfig& frontend,
                   const std::filesystem::path& dir);
// Reads every <id>.wav with its sidecar, ordered by id.
std::vector<DatasetEntry> load_dataset(const std::filesystem::path& dir);

}  // namespace sedattack
