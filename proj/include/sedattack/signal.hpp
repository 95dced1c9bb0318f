#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace sedattack {

// Mono audio with samples in nominal range [-1, 1]. Immutable once built.
class Waveform {
 public:
  Waveform(std::vector<double> samples, int sample_rate);

  const std::vector<double>& samples() const { return samples_; }
  int sample_rate() const { return sample_rate_; }
  std::size_t size() const { return samples_.size(); }
  double operator[](std::size_t i) const { return samples_[i]; }
  double duration_seconds() const {
    return static_cast<double>(samples_.size()) / sample_rate_;
  }

  friend bool operator==(const Waveform&, const Waveform&) = default;

 private:
  std::vector<double> samples_;
  int sample_rate_;
};

// Signal-to-noise ratio in dB. Identical signals produce the infinite
// sentinel instead of a number.
class SnrDb {
 public:
  static SnrDb finite(double db) { return SnrDb(db, false); }
  static SnrDb infinite() { return SnrDb(0.0, true); }

  bool is_infinite() const { return infinite_; }
  // Precondition: !is_infinite().
  double db() const { return db_; }

  friend bool operator==(const SnrDb&, const SnrDb&) = default;

 private:
  SnrDb(double db, bool inf) : db_(db), infinite_(inf) {}
  double db_;
  bool infinite_;
};

// 16-bit mono PCM WAV, little-endian. Samples are scaled by 1/32768.
Waveform load_wav(const std::filesystem::path& path);

// Writes 16-bit mono PCM. Throws ValidationError when a sample lies outside
// [-1, 1]; clamp upstream.
void save_wav(const Waveform& w, const std::filesystem::path& path);

// Quantizes one sample to the 16-bit code save_wav writes.
std::int16_t quantize_sample(double x);

// Snaps every sample to the value a save/load round trip would produce.
Waveform quantize_to_pcm(const Waveform& w);

SnrDb snr_db(const Waveform& clean, const Waveform& perturbed);

Waveform clamp(const Waveform& w, double lo, double hi);

// a + gain_b * b, with b zero-padded to the length of a.
Waveform mix(const Waveform& a, const Waveform& b, double gain_b);

}  // namespace sedattack
