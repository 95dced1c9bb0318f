#pragma once

// Differentiable log-mel frontend. Frames are centered: frame t reads samples
// [t*hop - window/2, t*hop + window/2) of the reflect-padded signal, so the
// frame count is ceil(samples / hop).

#include <vector>

#include "sedattack/autodiff.hpp"
#include "sedattack/signal.hpp"

namespace sedattack {

struct MelFrontendConfig {
  int window_len = 512;
  int hop = 256;
  int n_mels = 40;
  double fmin = 0.0;
  // Non-positive means sample_rate / 2.
  double fmax = 0.0;
  int sample_rate = 8000;

  // Throws ValidationError. window_len must be a power of two.
  void validate() const;
  int num_bins() const { return window_len / 2 + 1; }
  double upper_frequency() const { return fmax > 0.0 ? fmax : sample_rate / 2.0; }
  std::size_t num_frames(std::size_t num_samples) const {
    return (num_samples + hop - 1) / hop;
  }
  double frames_per_second() const { return static_cast<double>(sample_rate) / hop; }
};

inline constexpr double kLogFloorEnergy = 1e-10;

struct LogMelSpectrogram {
  ad::Tensor frames;  // [T, n_mels]
  MelFrontendConfig config;

  std::size_t num_frames() const { return frames.dim(0); }
  double at(std::size_t t, std::size_t m) const { return frames[t * frames.dim(1) + m]; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Periodic Hann window.
std::vector<double> hann_window(int n);

// Triangular filters, [num_bins, n_mels]; column m is filter m.
ad::Tensor mel_filterbank(const MelFrontendConfig& cfg);
std::vector<double> mel_center_frequencies(const MelFrontendConfig& cfg);

// Index into a signal of length n under reflect padding (edge not repeated).
std::size_t reflect_index(long long i, std::size_t n);

// samples: [N] -> power spectrogram [T, window_len/2 + 1].
ad::Var stft_power(ad::Var samples, const MelFrontendConfig& cfg);
// power: [T, bins] -> log(max(power * filterbank, 1e-10)), [T, n_mels].
ad::Var mel_project(ad::Var power, const MelFrontendConfig& cfg);
ad::Var frontend(ad::Var samples, const MelFrontendConfig& cfg);

ad::Tensor stft_power(const Waveform& w, const MelFrontendConfig& cfg);
LogMelSpectrogram mel_project(const ad::Tensor& power, const MelFrontendConfig& cfg);
LogMelSpectrogram frontend(const Waveform& w, const MelFrontendConfig& cfg);

}  // namespace sedattack
