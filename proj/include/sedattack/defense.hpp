#pragma once

// Input-transformation defenses applied before inference, and re-scoring of
// attack results behind them.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sedattack/attack.hpp"
#include "sedattack/metrics.hpp"
#include "sedattack/signal.hpp"

namespace sedattack {

enum class DefenseKind { kNone, kDownsample, kGaussian, kMeanSmooth, kMedianSmooth };

std::string to_string(DefenseKind k);
// Throws ValidationError on unknown names.
DefenseKind parse_defense(const std::string& s);

struct DefenseConfig {
  DefenseKind kind = DefenseKind::kNone;
  int down_rate = 4000;
  double sigma = 0.01;
  int window = 3;
  // Box-filter each decimation group before keeping its first sample.
  bool lowpass = false;

  void validate(int sample_rate) const;
};

// Keeps every (rate / down_rate)-th sample and linearly interpolates back to
// the original length; samples past the last kept one hold its value.
Waveform downsample_defense(const Waveform& w, const DefenseConfig& cfg);
// Adds N(0, sigma^2) noise and clamps to [-1, 1].
Waveform gaussian_defense(const Waveform& w, const DefenseConfig& cfg, std::uint64_t seed);
// Centered mean or median filter with edge replication.
Waveform smooth_defense(const Waveform& w, const DefenseConfig& cfg);
Waveform apply_defense(const Waveform& w, const DefenseConfig& cfg, std::uint64_t seed);

struct DefenseEvaluation {
  std::vector<MetricsReport> runs;
  MetricsReport aggregate;
};

// Applies the defense to both clean and adversarial audio of every result,
// re-derives both activity matrices and scores them against the original
// target. SNR compares the undefended clean audio with the defended
// adversarial audio.
DefenseEvaluation evaluate_under_defense(const ModelParams& params, std::span<const AttackResult> results,
                                         const DefenseConfig& cfg, std::uint64_t seed,
                                         const MelFrontendConfig& frontend = {});

}  // namespace sedattack
