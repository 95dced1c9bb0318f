#pragma once

// Targeted perturbation of a waveform so the detector's activity matrix
// follows a set of edits while the rest of the output is preserved.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sedattack/features.hpp"
#include "sedattack/metrics.hpp"
#include "sedattack/model.hpp"
#include "sedattack/signal.hpp"
#include "sedattack/target.hpp"

namespace sedattack {

enum class AttackMode { kM2a, kGlobal, kLocalNoPreserve };
enum class OptimizerKind { kAdam, kSign };

std::string to_string(AttackMode m);
std::string to_string(OptimizerKind o);
// Throw ValidationError on unknown names.
AttackMode parse_attack_mode(const std::string& s);
OptimizerKind parse_optimizer(const std::string& s);

struct AttackConfig {
  double alpha = 10.0;
  double tau = 0.02;
  double beta = 1e-3;
  int n_iters = 500;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  AttackMode mode = AttackMode::kM2a;
  // Uniform(-tau, tau) start on the mask instead of zero.
  bool random_init = false;

  void validate() const;
  // Preservation weight actually applied: alpha in m2a mode, 0 otherwise.
  double effective_alpha() const;
};

// Samples the perturbation may touch.
struct PerturbationMask {
  std::vector<std::uint8_t> on;
  double density() const;
  std::size_t count() const;
};

// Localized modes cover [first*hop - window/2, (last+1)*hop + window/2) per
// edit, clamped to the clip; global mode covers every sample.
PerturbationMask init_mask(const std::vector<TargetEdit>& edits, AttackMode mode,
                           std::size_t num_samples, const MelFrontendConfig& frontend);

struct LossValue {
  double value = 0.0;
  bool degenerate = false;  // empty target region
};

// Summed BCE against y* over the target region.
LossValue adversarial_loss(const EventPosteriors& posteriors, const TargetRegion& region,
                           const TargetLabelMatrix& labels);
// Summed BCE of adversarial posteriors against the clean soft posteriors off
// the target region.
double preservation_loss(const EventPosteriors& adv, const EventPosteriors& clean,
                         const TargetRegion& region);

ad::Var adversarial_loss(ad::Var posteriors, const TargetRegion& region, const TargetLabelMatrix& labels);
ad::Var preservation_loss(ad::Var posteriors, const EventPosteriors& clean, const TargetRegion& region);

struct LossPoint {
  double total = 0.0;
  double adv = 0.0;
  double pre = 0.0;
};

struct AttackResult {
  Waveform clean;
  Waveform adversarial;
  Waveform delta;
  PerturbationMask mask;
  std::vector<TargetEdit> edits;
  TargetSpec target;
  // Entry i is evaluated at the i-th iterate; n_iters + 1 entries.
  std::vector<LossPoint> loss_trace;
  int iterations_run = 0;
  EventPosteriors clean_posteriors;
  EventPosteriors adv_posteriors;
  EventActivityMatrix clean_activity;
  EventActivityMatrix adv_activity;
  double tau = 0.0;

  EditCounts counts() const;
  MetricsReport report() const;
};

// The adversarial waveform is clamp(clean + delta, -1, 1) snapped to the 16-bit
// grid, so its metrics describe exactly what gets saved. Throws
// ValidationError for an empty target region and NumericError on a
// non-finite loss.
AttackResult run_attack(const ModelParams& params, const Waveform& clean,
                        const std::vector<TargetEdit>& edits, const AttackConfig& cfg,
                        std::uint64_t seed, const MelFrontendConfig& frontend = {});

// Checks |delta| <= tau and delta == 0 off the mask.
bool budget_holds(const AttackResult& r);

struct ScenarioConfig {
  int k = 1;
  double edit_seconds = 3.0;
  // Minimum share of frames whose clean activity disagrees with the target.
  double eligibility = 0.9;

  void validate() const;
};

struct Scenario {
  std::size_t scene_index = 0;
  std::string id;
  std::vector<TargetEdit> edits;
};

// Draws k edits. Each draw picks mirage or mute with equal probability among
// the values that still have an eligible window, then a window uniformly.
// Mirage windows are those where the class is inactive on at least
// `eligibility` of the frames, mute windows where it is active. Windows start
// on frame boundaries. Edits on one class may overlap only with the same
// value. Empty when no eligible target remains.
std::optional<std::vector<TargetEdit>> sample_edits(const EventActivityMatrix& y_hat,
                                                    const ScenarioConfig& cfg,
                                                    double clip_seconds,
                                                    const MelFrontendConfig& frontend,
                                                    std::uint64_t seed);

struct CampaignScene {
  std::string id;
  Waveform audio;
};

struct CampaignConfig {
  AttackConfig attack;
  ScenarioConfig scenario;
  // 0 attacks every eligible scene.
  std::size_t max_scenarios = 0;
  std::uint64_t seed = 0;
  int jobs = 1;
  MelFrontendConfig frontend;
};

struct CampaignRun {
  Scenario scenario;
  AttackResult result;
  MetricsReport report;
};

struct CampaignResult {
  std::vector<Scenario> scenarios;
  std::vector<std::string> skipped;
  std::vector<CampaignRun> runs;
  MetricsReport aggregate;
};

using LogFn = std::function<void(const std::string&)>;

// Scenarios depend only on the seed, the scenario config and the clean model
// outputs, so campaigns with different attack settings are paired.
std::vector<Scenario> plan_scenarios(const ModelParams& params, std::span<const CampaignScene> scenes,
                                     const CampaignConfig& cfg, std::vector<std::string>* skipped = nullptr,
                                     const LogFn& log = {});

CampaignResult run_campaign(const ModelParams& params, std::span<const CampaignScene> scenes,
                            const CampaignConfig& cfg, const LogFn& log = {});

}  // namespace sedattack
