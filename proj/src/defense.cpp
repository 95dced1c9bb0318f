#include "sedattack/defense.hpp"

#include <algorithm>
#include <random>

#include "sedattack/error.hpp"
#include "sedattack/seed.hpp"

namespace sedattack {

std::string to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::kNone: return "none";
    case DefenseKind::kDownsample: return "downsample";
    case DefenseKind::kGaussian: return "gaussian";
    case DefenseKind::kMeanSmooth: return "mean_smooth";
    case DefenseKind::kMedianSmooth: return "median_smooth";
  }
  return "?";
}

DefenseKind parse_defense(const std::string& s) {
  for (auto k : {DefenseKind::kNone, DefenseKind::kDownsample, DefenseKind::kGaussian,
                 DefenseKind::kMeanSmooth, DefenseKind::kMedianSmooth}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown defense '" + s +
                        "' (expected none, downsample, gaussian, mean_smooth or median_smooth)");
}

void DefenseConfig::validate(int sample_rate) const {
  if (kind == DefenseKind::kDownsample) {
    if (down_rate <= 0 || down_rate >= sample_rate)
      throw ValidationError("down_rate must be positive and below the sample rate");
    if (sample_rate % down_rate != 0)
      throw ValidationError("down_rate " + std::to_string(down_rate) + " does not divide " +
                            std::to_string(sample_rate));
  }
  if (kind == DefenseKind::kGaussian && !(sigma > 0.0)) throw ValidationError("sigma must be positive");
  if ((kind == DefenseKind::kMeanSmooth || kind == DefenseKind::kMedianSmooth) &&
      (window < 3 || window % 2 == 0)) {
    throw ValidationError("smoothing window must be odd and at least 3");
  }
}

Waveform downsample_defense(const Waveform& w, const DefenseConfig& cfg) {
  DefenseConfig c = cfg;
  c.kind = DefenseKind::kDownsample;
  c.validate(w.sample_rate());
  const std::size_t f = static_cast<std::size_t>(w.sample_rate() / cfg.down_rate);
  const std::size_t n = w.size();
  std::vector<double> kept;
  for (std::size_t i = 0; i < n; i += f) {
    if (cfg.lowpass) {
      const std::size_t end = std::min(n, i + f);
      double acc = 0.0;
      for (std::size_t j = i; j < end; ++j) acc += w[j];
      kept.push_back(acc / static_cast<double>(end - i));
    } else {
      kept.push_back(w[i]);
    }
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i / f, r = i % f;
    if (r == 0 || k + 1 >= kept.size()) {
      out[i] = kept[k];
    } else {
      const double frac = static_cast<double>(r) / static_cast<double>(f);
      out[i] = kept[k] + frac * (kept[k + 1] - kept[k]);
    }
  }
  return Waveform(std::move(out), w.sample_rate());
}

Waveform gaussian_defense(const Waveform& w, const DefenseConfig& cfg, std::uint64_t seed) {
  if (!(cfg.sigma > 0.0)) throw ValidationError("sigma must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, cfg.sigma);
  std::vector<double> out(w.samples());
  for (double& x : out) x = std::clamp(x + noise(rng), -1.0, 1.0);
  return Waveform(std::move(out), w.sample_rate());
}

Waveform smooth_defense(const Waveform& w, const DefenseConfig& cfg) {
  if (cfg.kind != DefenseKind::kMeanSmooth && cfg.kind != DefenseKind::kMedianSmooth)
    throw ValidationError("smooth_defense needs mean_smooth or median_smooth");
  cfg.validate(w.sample_rate());
  const long long n = static_cast<long long>(w.size()), half = cfg.window / 2;
  std::vector<double> win(static_cast<std::size_t>(cfg.window));
  std::vector<double> out(w.size());
  for (long long i = 0; i < n; ++i) {
    for (long long j = -half; j <= half; ++j) {
      win[static_cast<std::size_t>(j + half)] = w[static_cast<std::size_t>(std::clamp(i + j, 0LL, n - 1))];
    }
    if (cfg.kind == DefenseKind::kMeanSmooth) {
      double acc = 0.0;
      for (double v : win) acc += v;
      out[static_cast<std::size_t>(i)] = acc / static_cast<double>(win.size());
    } else {
      std::nth_element(win.begin(), win.begin() + half, win.end());
      out[static_cast<std::size_t>(i)] = win[static_cast<std::size_t>(half)];
    }
  }
  return Waveform(std::move(out), w.sample_rate());
}

Waveform apply_defense(const Waveform& w, const DefenseConfig& cfg, std::uint64_t seed) {
  cfg.validate(w.sample_rate());
  switch (cfg.kind) {
    case DefenseKind::kNone: return w;
    case DefenseKind::kDownsample: return downsample_defense(w, cfg);
    case DefenseKind::kGaussian: return gaussian_defense(w, cfg, seed);
    case DefenseKind::kMeanSmooth:
    case DefenseKind::kMedianSmooth: return smooth_defense(w, cfg);
  }
  throw ValidationError("unknown defense kind");
}

DefenseEvaluation evaluate_under_defense(const ModelParams& params, std::span<const AttackResult> results,
                                         const DefenseConfig& cfg, std::uint64_t seed,
                                         const MelFrontendConfig& frontend) {
  DefenseEvaluation out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const AttackResult& r = results[i];
    EventActivityMatrix clean_act = r.clean_activity;
    EventActivityMatrix adv_act = r.adv_activity;
    Waveform adv = r.adversarial;
    if (cfg.kind != DefenseKind::kNone) {
      const Waveform clean_d = apply_defense(r.clean, cfg, derive_seed(seed, {i, 0}));
      adv = apply_defense(r.adversarial, cfg, derive_seed(seed, {i, 1}));
      clean_act = binarize(forward(params, sedattack::frontend(clean_d, frontend)));
      adv_act = binarize(forward(params, sedattack::frontend(adv, frontend)));
    }
    const EditCounts counts = count_edits(clean_act, adv_act, r.target.region, r.target.labels);
    out.runs.push_back(compute_report(counts, r.clean, adv));
  }
  if (out.runs.empty()) throw ValidationError("evaluate_under_defense needs at least one attack result");
  out.aggregate = aggregate(out.runs);
  return out;
}

}  // namespace sedattack
